"""Experiment configuration files, hashing and run manifests.

Config files are plain ``key = value`` lines (an optional ``[experiment]``
header is accepted).  Values are parsed as Python literals when possible,
so lists, numbers and quoted strings all work.
"""
import ast
import configparser
import hashlib
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

EXPERIMENTS = ("profile-sweep", "spectrum-sweep", "constants", "spde-linear", "spde-limit",
               "offsite", "gk-run", "interface-track", "report")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    reaction: str = "cubic"
    rates: str = "bistable"
    N: int = None
    K: float = None
    K_sweep: list = None
    d: int = None
    T: float = None
    dt: float = None
    paths: int = None
    n: int = None
    out: str = "results"
    threads: int = 1
    params: dict = field(default_factory=dict)

    def validate(self):
        from .particle import RATE_FAMILIES
        from .reaction import ReactionError, reaction_from_config

        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.seed is None:
            raise ConfigError("a seed is mandatory")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        try:
            reaction_from_config(self.reaction)
        except ReactionError as exc:
            raise ConfigError(str(exc)) from exc
        if self.rates not in RATE_FAMILIES:
            raise ConfigError(f"unknown rate family {self.rates!r}")
        if self.K_sweep is not None:
            ks = list(self.K_sweep)
            if len(ks) < 1 or any(b <= a for a, b in zip(ks, ks[1:])):
                raise ConfigError("K_sweep must be strictly increasing")
        if self.d is not None and self.d not in (1, 2):
            raise ConfigError("d must be 1 or 2")
        return self

    def to_dict(self):
        return asdict(self)

    def content_hash(self):
        """SHA-256 of the canonical JSON of every field except the output location."""
        d = self.to_dict()
        d.pop("out", None)
        d.pop("threads", None)
        blob = json.dumps(d, sort_keys=True, default=_json_default).encode()
        return hashlib.sha256(blob).hexdigest()


_FIELDS = {f for f in ExperimentConfig.__dataclass_fields__}


def _literal(text):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def parse_config_text(text):
    if not text.lstrip().startswith("["):
        text = "[experiment]\n" + text
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    cp.read_string(text)
    raw = {}
    for sec in cp.sections():
        for k, v in cp.items(sec):
            raw[k] = _literal(v)
    return raw


def build_config(raw, overrides=None):
    raw = dict(raw)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    if "experiment" not in raw:
        raise ConfigError("config must name an experiment")
    if "seed" not in raw:
        raise ConfigError("a seed is mandatory")
    known = {k: v for k, v in raw.items() if k in _FIELDS and k != "params"}
    params = {k: v for k, v in raw.items() if k not in _FIELDS}
    params.update(raw.get("params", {}) or {})
    return ExperimentConfig(params=params, **known).validate()


def load_config(path, overrides=None):
    text = Path(path).read_text()
    return build_config(parse_config_text(text), overrides)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not serializable: {type(o)}")


def dump_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions():
    import numba
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "layerfluct": __version__}


def write_manifest(outdir, cfg, artifacts, wall_time, passed):
    """Manifest listing every artifact with its hash; the only file holding timings."""
    outdir = Path(outdir)
    entries = {str(Path(a).relative_to(outdir)): file_hash(a) for a in sorted(artifacts)}
    manifest = {"experiment": cfg.experiment, "config": cfg.to_dict(),
                "config_hash": cfg.content_hash(), "versions": versions(),
                "wall_time_s": wall_time, "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "passed": passed, "artifacts": entries}
    path = outdir / "manifest.json"
    dump_json(manifest, path)
    return path
