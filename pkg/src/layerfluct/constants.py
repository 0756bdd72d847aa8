"""Interface constants: surface tension, noise strength, cubic corrections.

Line integrals over the standing wave are computed two ways.  The default
route substitutes v = U0(z), dz = dv / sqrt(2 V(v)), which turns every
integral into one over [rho_minus, rho_plus] without truncation.  The grid
route integrates on a WaveProfile with exponential tail closure.
"""
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .reaction import BistableReaction, NoiseAmplitudes, constant_amplitudes


@dataclass
class ConstantReport:
    surface_tension: float
    c_star: float
    c_star_sq: float
    grad_part: float
    flip_part: float
    c2: float
    c3: float
    c3_by_parts: float
    method: str
    sigma_sq_minus: float = None
    sigma_sq_plus: float = None
    errors: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _as_reaction(obj):
    """Accept a BistableReaction or anything carrying one (a WaveProfile)."""
    return getattr(obj, "reaction", obj)


def _quad(g, a, b, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        return integrate.quad(g, a, b, **kw)


def _vquad(reaction, g, errors=None, key=None):
    rm, _, rp = reaction.zeros
    val, err = _quad(g, rm, rp, epsabs=1e-14, epsrel=1e-13, limit=200)
    if errors is not None:
        errors[key] = float(err)
    return val


def surface_tension(reaction):
    """||U0'||^2 = int sqrt(2 V(v)) dv."""
    reaction = _as_reaction(reaction)
    return _vquad(reaction, reaction.sqrt_2v)


def noise_parts(reaction, amplitudes):
    """(||d_w e g1(U0(-w))||^2, ||e g2(U0(-w))||^2) for e = U0'(-w)/||U0'||."""
    reaction = _as_reaction(reaction)
    S = surface_tension(reaction)
    f, s2v = reaction.f, reaction.sqrt_2v

    def grad(v):
        r = s2v(v)
        return 0.0 if r <= 0 else f(v) ** 2 * amplitudes.g1(v) ** 2 / r

    flip = lambda v: s2v(v) * amplitudes.g2(v) ** 2
    return _vquad(reaction, grad) / S, _vquad(reaction, flip) / S


def c_star(reaction, amplitudes=None):
    """Noise strength of the interface equation."""
    reaction = _as_reaction(reaction)
    amplitudes = amplitudes or constant_amplitudes()
    a, b = noise_parts(reaction, amplitudes)
    return float(np.sqrt(a + b))


def c2_constant(reaction):
    """(1 / (2 S^{3/2})) int f''(U0) U0'^3 dz; vanishes for balanced f."""
    reaction = _as_reaction(reaction)
    S = surface_tension(reaction)
    g = lambda v: reaction.df(v, 2) * 2.0 * reaction.potential(v)
    return _vquad(reaction, g) / (2.0 * S ** 1.5)


def c3_constant(reaction):
    """(1 / (6 S^2)) int f'''(U0) U0'^4 dz."""
    reaction = _as_reaction(reaction)
    S = surface_tension(reaction)
    g = lambda v: reaction.df(v, 3) * reaction.sqrt_2v(v) ** 3
    return _vquad(reaction, g) / (6.0 * S ** 2)


def c3_by_parts(reaction):
    """Integrated-by-parts form (1 / (2 S^2)) int f''(U0) f(U0) U0'^2 dz."""
    reaction = _as_reaction(reaction)
    S = surface_tension(reaction)
    g = lambda v: reaction.df(v, 2) * reaction.f(v) * reaction.sqrt_2v(v)
    return _vquad(reaction, g) / (2.0 * S ** 2)


def compute_constants(reaction, amplitudes=None):
    """All interface constants by the substitution route."""
    reaction = _as_reaction(reaction)
    amplitudes = amplitudes or constant_amplitudes()
    errors = {}
    S = _vquad(reaction, reaction.sqrt_2v, errors, "surface_tension")
    a, b = noise_parts(reaction, amplitudes)
    rm, _, rp = reaction.zeros
    sm = sigma_sq(-reaction.df(rm), float(amplitudes.g2(rm)))
    sp_ = sigma_sq(-reaction.df(rp), float(amplitudes.g2(rp)))
    return ConstantReport(surface_tension=S, c_star=float(np.sqrt(a + b)),
                          c_star_sq=a + b, grad_part=a, flip_part=b,
                          c2=c2_constant(reaction), c3=c3_constant(reaction),
                          c3_by_parts=c3_by_parts(reaction), method="substitution",
                          sigma_sq_minus=sm, sigma_sq_plus=sp_, errors=errors)


def grid_constants(wave, amplitudes=None):
    """Same constants from a WaveProfile grid with tail closure."""
    amplitudes = amplitudes or constant_amplitudes()
    r, c = wave.reaction, wave.speed
    dd = lambda U, dU: -c * dU - r.f(U)
    S = wave.tail_integral(lambda U, dU: dU ** 2)
    a = wave.tail_integral(lambda U, dU: dd(U, dU) ** 2 * amplitudes.g1(U) ** 2) / S
    b = wave.tail_integral(lambda U, dU: dU ** 2 * amplitudes.g2(U) ** 2) / S
    c2 = wave.tail_integral(lambda U, dU: r.df(U, 2) * dU ** 3) / (2 * S ** 1.5)
    c3 = wave.tail_integral(lambda U, dU: r.df(U, 3) * dU ** 4) / (6 * S ** 2)
    c3p = wave.tail_integral(lambda U, dU: r.df(U, 2) * r.f(U) * dU ** 2) / (2 * S ** 2)
    return ConstantReport(surface_tension=S, c_star=float(np.sqrt(a + b)), c_star_sq=a + b,
                          grad_part=a, flip_part=b, c2=c2, c3=c3, c3_by_parts=c3p,
                          method="grid")


def sigma_sq(c, amp=1.0, method="quad"):
    """Pointwise variance amp^2 / sqrt(8 pi) int_0^inf e^{-2cu} u^{-1/2} du.

    ``method="closed"`` returns amp^2 / (4 sqrt(c)).
    """
    if c <= 0:
        raise ValueError("need c > 0")
    if method == "closed":
        return float(amp ** 2 / (4.0 * np.sqrt(c)))
    # u = s^2 removes the endpoint singularity
    val, _ = _quad(lambda s: 2.0 * np.exp(-2.0 * c * s * s), 0.0, np.inf,
                   epsabs=1e-15, epsrel=1e-14)
    return float(amp ** 2 / np.sqrt(8.0 * np.pi) * val)


def interface_variance_rate(reaction, amplitudes=None):
    """c*^2 / ||U0'||^2, the variance rate of the tracked layer position."""
    rep = compute_constants(reaction, amplitudes)
    return rep.c_star_sq / rep.surface_tension
