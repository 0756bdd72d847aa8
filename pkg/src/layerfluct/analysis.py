"""Interface tracking, decay fits and Monte Carlo statistics."""
from dataclasses import dataclass, field

import numpy as np
from scipy import stats


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------- interface tracking

@dataclass
class InterfaceTrack:
    """Crossing locations per snapshot.

    ``positions[s]`` lists the crossing points in [0, 1) (d = 1) or, for
    d = 2, an array of tracked-layer heights over ux.  ``lost`` flags
    snapshots with no crossing inside the window.
    """
    times: np.ndarray
    positions: list
    lost: np.ndarray
    window: tuple = None
    scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def tracked(self):
        """One position per snapshot: first crossing (d = 1) or mean height (d = 2); NaN when lost."""
        out = np.full(self.times.size, np.nan)
        for s, p in enumerate(self.positions):
            if self.lost[s]:
                continue
            out[s] = p[0] if self.meta.get("d", 1) == 1 else np.mean(p)
        return out

    def rescaled(self, reference=None):
        """Displacement from the reference (default: first snapshot) times the scale factor."""
        x = self.tracked()
        ref = x[0] if reference is None else reference
        return self.scale * (np.mod(x - ref + 0.5, 1.0) - 0.5)


def _crossings_1d(values, x, level, lo, hi):
    """Sub-grid crossings of ``level`` by linear interpolation, restricted to the window."""
    n = values.size
    h = 1.0 / n
    a = values - level
    b = np.roll(a, -1)
    idx = np.nonzero((a == 0) | (a * b < 0))[0]
    out = []
    for i in idx:
        frac = 0.0 if a[i] == 0 else a[i] / (a[i] - b[i])
        pos = np.mod(x[i] + frac * h, 1.0)
        if lo is None or np.mod(pos - lo, 1.0) <= np.mod(hi - lo, 1.0):
            out.append(pos)
    return np.array(sorted(out))


def track_interface(series, rho_star, window=None, N=None, K=None, path=0, x0=0.0):
    """Locate level-rho_star crossings of density snapshots on the unit torus.

    ``series`` is a FieldSeries of densities (data[t, path, ...]) or an
    array (t, n) / (t, n_ux, n).  With N and K (and d), locations are also
    given the rescaling factor N^{d/2} K^{-1/4}.
    """
    is_series = hasattr(series, "times")
    data = np.asarray(series.data if is_series else series, dtype=float)
    times = np.asarray(series.times if is_series else np.arange(data.shape[0]), dtype=float)
    if is_series:
        data = data[:, path]
    d = 1 if data.ndim == 2 else 2
    n = data.shape[-1]
    x = np.mod(x0 + np.arange(n) / n, 1.0)
    lo, hi = (None, None) if window is None else window
    positions, lost = [], []
    for s in range(data.shape[0]):
        if d == 1:
            c = _crossings_1d(data[s], x, rho_star, lo, hi)
            positions.append(c)
            lost.append(c.size == 0)
        else:
            row = []
            for j in range(data.shape[1]):
                c = _crossings_1d(data[s, j], x, rho_star, lo, hi)
                row.append(c[0] if c.size else np.nan)
            row = np.array(row)
            positions.append(row)
            lost.append(bool(np.any(np.isnan(row))))
    scale = 1.0
    if N is not None and K is not None:
        scale = N ** (d / 2) * K ** -0.25
    return InterfaceTrack(times, positions, np.array(lost), window, scale,
                          {"rho_star": rho_star, "d": d, "N": N, "K": K})


def max_jump(track, dt=None, diffusivity=1.0, multiple=6.0):
    """Largest per-snapshot jump of the tracked position and whether it stays below
    ``multiple`` times the expected Brownian increment sqrt(diffusivity dt)."""
    x = track.tracked()
    dx = np.abs(np.mod(np.diff(x) + 0.5, 1.0) - 0.5)
    dt = np.diff(track.times) if dt is None else np.full(dx.size, dt)
    bound = multiple * np.sqrt(diffusivity * dt)
    return float(np.nanmax(dx)), bool(np.all(dx <= bound))


# ---------------------------------------------------------------- fits

@dataclass
class FitResult:
    param: float
    intercept: float
    r2: float
    residual: float
    model: str


def fit_decay(xs, ys, model="powerlaw"):
    """Least squares in log coordinates.

    powerlaw: log y = a + p log x, returns p.
    exp_sqrt: log y = a + r sqrt(x), returns r.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise AnalysisError("at least 3 points are needed")
    if np.any(ys <= 0):
        raise AnalysisError("ys must be positive")
    if model == "powerlaw":
        if np.any(xs <= 0):
            raise AnalysisError("xs must be positive for a power law")
        X = np.log(xs)
    elif model == "exp_sqrt":
        X = np.sqrt(xs)
    else:
        raise AnalysisError(f"unknown model {model!r}")
    return linear_fit(X, np.log(ys), model)


def linear_fit(X, Y, model="linear"):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    A = np.column_stack([X, np.ones_like(X)])
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    res = Y - A @ coef
    ss = np.sum((Y - Y.mean()) ** 2)
    r2 = 1.0 - np.sum(res ** 2) / ss if ss > 0 else 1.0
    return FitResult(float(coef[0]), float(coef[1]), float(r2), float(np.sqrt(np.mean(res ** 2))),
                     model)


# ---------------------------------------------------------------- statistics

@dataclass
class NormalityResult:
    statistic: float
    critical: float
    passed: bool
    alpha: float


def gaussianity(samples, alpha=0.01, resamples=1000, seed=0):
    """Kolmogorov distance to the fitted normal, with a parametric-bootstrap critical value.

    Estimating mean and variance from the data changes the null law of the
    statistic, so the critical value is resampled from normal draws of the
    same size with the same fitting step.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 100:
        raise AnalysisError("at least 100 samples are needed")
    if np.std(x) == 0:
        raise AnalysisError("degenerate sample")

    def ks(v):
        z = np.sort((v - v.mean()) / v.std(ddof=1))
        cdf = stats.norm.cdf(z)
        i = np.arange(1, v.size + 1)
        return max(np.max(i / v.size - cdf), np.max(cdf - (i - 1) / v.size))

    d0 = ks(x)
    rng = np.random.default_rng(seed)
    null = np.array([ks(rng.standard_normal(x.size)) for _ in range(resamples)])
    crit = float(np.quantile(null, 1 - alpha))
    return NormalityResult(float(d0), crit, bool(d0 <= crit), alpha)


def bootstrap_ci(samples, statistic=np.var, level=0.95, resamples=2000, seed=0, axis=0):
    """Percentile bootstrap interval; returns (estimate, lo, hi, midpoint)."""
    x = np.asarray(samples)
    n = x.shape[axis]
    rng = np.random.default_rng(seed)
    est = statistic(x)
    boot = np.empty(resamples)
    for b in range(resamples):
        idx = rng.integers(0, n, n)
        boot[b] = statistic(np.take(x, idx, axis=axis))
    a = (1 - level) / 2
    lo, hi = np.quantile(boot, [a, 1 - a])
    return float(est), float(lo), float(hi), float(0.5 * (lo + hi))


def sample_variance(x):
    return float(np.var(x, ddof=1))


def increment_variance_rate(times, samples):
    """Pooled variance rate of increments: mean over intervals of Var(dX) / dt.

    ``samples`` has shape (len(times), paths).  For a process with
    independent increments this estimates d Var / dt with far less noise
    than regressing the cumulative variances.
    """
    times = np.asarray(times, dtype=float)
    inc = np.diff(samples, axis=0)
    dt = np.diff(times)
    rates = inc.var(axis=1, ddof=1) / dt
    return float(np.sum(rates * dt) / np.sum(dt)), rates


def variance_slope(times, samples):
    """Least-squares slope and R^2 of the pathwise variance against time."""
    v = np.var(samples, axis=1, ddof=1)
    return linear_fit(times, v)
