"""Standing, traveling and periodic layer profiles of ``v'' + c v' + f(v) = 0``.

Tail values are carried as offsets from the nearest stable zero so that
exponentially small distances keep their relative precision.
"""
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize

from .reaction import BistableReaction

_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


class ProfileError(RuntimeError):
    pass


class _Hermite5:
    """Quintic Hermite interpolant on a uniform grid from values and two derivatives."""

    def __init__(self, z, p, d, s):
        self.z0, self.m = z[0], z.size - 1
        self.h = (z[-1] - z[0]) / self.m
        self.p, self.d, self.s = p, d, s

    def __call__(self, z):
        i = np.clip(((z - self.z0) / self.h).astype(int), 0, self.m - 1)
        h = self.h
        t = (z - self.z0) / h - i
        t2, t3 = t * t, t * t * t
        t4, t5 = t3 * t, t3 * t2
        h0 = 1 - 10 * t3 + 15 * t4 - 6 * t5
        h1 = t - 6 * t3 + 8 * t4 - 3 * t5
        h2 = 0.5 * (t2 - 3 * t3 + 3 * t4 - t5)
        h3 = 0.5 * (t3 - 2 * t4 + t5)
        h4 = -4 * t3 + 7 * t4 - 3 * t5
        h5 = 10 * t3 - 15 * t4 + 6 * t5
        return (h0 * self.p[i] + h1 * h * self.d[i] + h2 * h * h * self.s[i]
                + h5 * self.p[i + 1] + h4 * h * self.d[i + 1] + h3 * h * h * self.s[i + 1])


@dataclass
class WaveProfile:
    """Heteroclinic profile U0 on a uniform grid with exponential tails.

    ``U0(-inf) = rho_minus``, ``U0(+inf) = rho_plus``, ``U0(0) = rho_star``.
    Outside the grid the linearized tails ``rho + A exp(mu z)`` are used.
    """
    z: np.ndarray
    U: np.ndarray
    dU: np.ndarray
    speed: float
    reaction: BistableReaction
    mu_left: float
    mu_right: float

    def __post_init__(self):
        # quintic Hermite pieces; higher derivatives come from the ODE
        c, r = self.speed, self.reaction
        ddU = -c * self.dU - r.f(self.U)
        d3U = -c * ddU - r.df(self.U) * self.dU
        self._spl = _Hermite5(self.z, self.U, self.dU, ddU)
        self._dspl = _Hermite5(self.z, self.dU, ddU, d3U)
        rm, _, rp = self.reaction.zeros
        self._amp_left = self.U[0] - rm
        self._amp_right = self.U[-1] - rp

    @property
    def dz(self):
        return float(self.z[1] - self.z[0])

    def __call__(self, z):
        return self.evaluate(z)[0]

    def evaluate(self, z):
        """Values and first derivatives at arbitrary points."""
        z = np.asarray(z, dtype=float)
        rm, _, rp = self.reaction.zeros
        z0, z1 = self.z[0], self.z[-1]
        inner = (z >= z0) & (z <= z1)
        U = np.empty_like(z)
        dU = np.empty_like(z)
        U[inner] = self._spl(z[inner])
        dU[inner] = self._dspl(z[inner])
        lo = z < z0
        tail = self._amp_left * np.exp(self.mu_left * (z[lo] - z0))
        U[lo] = rm + tail
        dU[lo] = self.mu_left * tail
        hi = z > z1
        tail = self._amp_right * np.exp(self.mu_right * (z[hi] - z1))
        U[hi] = rp + tail
        dU[hi] = self.mu_right * tail
        return U, dU

    def tail_integral(self, g_of_state):
        """Integrate g(U, U') over the line: trapezoid on the grid plus tails.

        ``g_of_state`` must vanish at the stable zeros.  Tails are closed by
        integrating the linearized profile on a stretched grid.
        """
        vals = g_of_state(self.U, self.dU)
        total = integrate.trapezoid(vals, self.z)
        for side in (-1, 1):
            mu = self.mu_left if side < 0 else self.mu_right
            edge = self.z[0] if side < 0 else self.z[-1]
            s = np.linspace(0.0, 40.0 / abs(mu), 4001)
            zz = edge + side * s
            U, dU = self.evaluate(zz)
            total += integrate.trapezoid(g_of_state(U, dU), s)
        return float(total)

    def norm_derivative_sq(self):
        """||U0'||^2 over the line from the grid with tail closure."""
        return self.tail_integral(lambda U, dU: dU ** 2)

    def ode_residual(self):
        """sup |U'' + c U' + f(U)| with U'' from a fourth-order difference of U'."""
        d = self.dU
        ddU = (-d[4:] + 8 * d[3:-1] - 8 * d[1:-3] + d[:-4]) / (12 * self.dz)
        r = ddU + self.speed * d[2:-2] + self.reaction.f(self.U[2:-2])
        return float(np.max(np.abs(r)))

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.z, self.U, self.dU]), delimiter=",",
                   header="z,U,dU", comments="", fmt="%.17g")
        meta = {"speed": self.speed, "dz": self.dz, "z_max": float(self.z[-1]),
                "norm_derivative_sq": self.norm_derivative_sq(),
                "reaction": self.reaction.to_dict()}
        with open(str(path).rsplit(".", 1)[0] + ".json", "w") as fh:
            json.dump(meta, fh, indent=2)


def _linear_rates(reaction, c):
    """Unstable rate at rho_minus and stable rate at rho_plus of y'' + c y' + f'(rho) y = 0."""
    rm, _, rp = reaction.zeros
    am, ap = reaction.df(rm), reaction.df(rp)
    mu_left = (-c + np.sqrt(c * c - 4 * am)) / 2
    mu_right = (-c - np.sqrt(c * c - 4 * ap)) / 2
    return float(mu_left), float(mu_right)


def _divided_difference(poly, u, delta):
    """(W(u) - W(delta)) / (u - delta) for a Polynomial W, without cancellation."""
    c = poly.coef
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    # h_k = sum_{j<k} u^j delta^{k-1-j}, built by h_{k+1} = u h_k + delta^k
    h = np.zeros_like(u)
    dpow = 1.0
    for k in range(1, len(c)):
        h = u * h + dpow
        dpow *= delta
        out = out + c[k] * h
    return out


def _march_offsets(W, y0, steps, dz):
    """Offsets y_i from a stable zero along a standing wave, stepping dz outward.

    Solves int_{y_{i+1}}^{y_i} dy / sqrt(2 W(y)) = dz by Newton, with the
    integral done by Gauss-Legendre on each short panel.
    """
    ys = np.empty(steps + 1)
    ys[0] = y0
    c = W.coef[::-1].copy()
    dc = W.deriv().coef[::-1].copy()

    def horner(coef, y):
        acc = 0.0
        for a in coef:
            acc = acc * y + a
        return acc

    y = y0
    for i in range(steps):
        yi = y
        s = np.sqrt(2 * horner(c, yi))
        # second-order guess from y'' = W'(y)
        guess = yi - dz * s + 0.5 * dz * dz * horner(dc, yi)
        y = min(max(guess, 0.25 * yi), yi)
        for _ in range(8):
            mid, half = 0.5 * (yi + y), 0.5 * (yi - y)
            nodes = mid + half * _GL_X
            G = half * np.dot(_GL_W, 1.0 / np.sqrt(2 * np.polyval(c, nodes))) - dz
            step = G * np.sqrt(2 * horner(c, y))
            y = y + step
            if abs(step) <= 1e-15 * y:
                break
        ys[i + 1] = y
    return ys


def solve_standing_wave(reaction, half_width=24.0, dz=0.01):
    """Standing wave U0'' + f(U0) = 0, U0(0) = rho_star, by quadrature inversion.

    Inverts z(v) = int_{rho_star}^v dw / sqrt(2 V(w)) on the uniform grid
    ``[-half_width, half_width]``.  Requires a balanced reaction.
    """
    if not reaction.is_balanced(1e-10):
        raise ProfileError("standing wave needs a balanced reaction; use solve_traveling_wave")
    rm, rs, rp = reaction.zeros
    steps = int(round(half_width / dz))
    Wm = reaction.local_potential(rm)
    Wp = reaction.local_potential(rp)(Polynomial([0.0, -1.0]))
    y_right = _march_offsets(Wp, rp - rs, steps, dz)
    y_left = _march_offsets(Wm, rs - rm, steps, dz)
    z = dz * np.arange(-steps, steps + 1)
    U = np.concatenate([rm + y_left[:0:-1], rp - y_right])
    U[steps] = rs
    dU = np.concatenate([np.sqrt(2 * Wm(y_left[:0:-1])), np.sqrt(2 * Wp(y_right))])
    mu_l, mu_r = _linear_rates(reaction, 0.0)
    return WaveProfile(z, U, dU, 0.0, reaction, mu_l, mu_r)


def _branch(reaction, c, side, offset, span):
    """Integrate the unstable (side=-1) or stable (side=+1) manifold to rho_star."""
    rm, rs, rp = reaction.zeros
    mu_l, mu_r = _linear_rates(reaction, c)
    f = reaction.f

    def rhs(z, y):
        return [y[1], -c * y[1] - f(y[0])]

    def hit(z, y):
        return y[0] - rs
    hit.terminal = True

    if side < 0:
        y0 = [rm + offset, mu_l * offset]
        t_span = (0.0, span)
    else:
        y0 = [rp - offset, -mu_r * offset]
        t_span = (0.0, -span)
    sol = integrate.solve_ivp(rhs, t_span, y0, method="DOP853", rtol=1e-12,
                              atol=1e-15, events=hit, dense_output=True)
    if sol.t_events[0].size == 0:
        return None
    zc = sol.t_events[0][0]
    return zc, sol.y_events[0][0][1], sol


def _mismatch(reaction, c, offset, span):
    left = _branch(reaction, c, -1, offset, span)
    right = _branch(reaction, c, +1, offset, span)
    if left is None or right is None:
        return np.nan
    return left[1] - right[1]


def find_wave_speed(reaction, offset=1e-9, span=80.0, c_max=None, xtol=1e-14):
    """Speed c of the heteroclinic front by shooting and root bracketing.

    The mismatch of U0' at the crossing of rho_star between the unstable
    manifold of rho_minus and the stable manifold of rho_plus is monotone in c.
    """
    if c_max is None:
        c_max = 4.0 * np.sqrt(max(abs(reaction.df(z)) for z in reaction.zeros))
    g = lambda c: _mismatch(reaction, c, offset, span)
    g0 = g(0.0)
    if g0 == 0.0:
        return 0.0
    step = 1e-3
    lo, hi = 0.0, 0.0
    while step <= c_max:
        a, b = g(-step), g(step)
        if np.isfinite(a) and np.sign(a) != np.sign(g0):
            lo, hi = -step, 0.0
            break
        if np.isfinite(b) and np.sign(b) != np.sign(g0):
            lo, hi = 0.0, step
            break
        step *= 2
    else:
        raise ProfileError("could not bracket the wave speed")
    return float(optimize.brentq(g, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


def solve_traveling_wave(reaction, half_width=24.0, dz=0.01, speed=None, offset=1e-9):
    """Traveling wave U0'' + c U0' + f(U0) = 0 with U0(0) = rho_star.

    The speed is found by shooting unless given.  The left half follows the
    unstable manifold of rho_minus forward, the right half the stable manifold
    of rho_plus backward, which keeps both integrations stable.
    """
    c = find_wave_speed(reaction, offset=offset) if speed is None else float(speed)
    rm, rs, rp = reaction.zeros
    mu_l, mu_r = _linear_rates(reaction, c)
    left = _branch(reaction, c, -1, offset, 80.0)
    right = _branch(reaction, c, +1, offset, 80.0)
    if left is None or right is None:
        raise ProfileError("shooting branch did not reach rho_star")
    steps = int(round(half_width / dz))
    z = dz * np.arange(-steps, steps + 1)
    U = np.empty_like(z)
    dU = np.empty_like(z)
    zl, _, sl = left
    zr, _, sr = right
    for mask, zc, sol, rho, mu, sgn in ((z <= 0, zl, sl, rm, mu_l, 1.0),
                                        (z > 0, zr, sr, rp, mu_r, -1.0)):
        t = z[mask] + zc
        inside = (t >= min(sol.t[0], sol.t[-1])) & (t <= max(sol.t[0], sol.t[-1]))
        vals = np.empty((2, t.size))
        vals[:, inside] = sol.sol(t[inside])
        # linearized manifold beyond the starting offset
        tail = offset * np.exp(mu * t[~inside])
        vals[0, ~inside] = rho + sgn * tail
        vals[1, ~inside] = sgn * mu * tail
        U[mask], dU[mask] = vals
    U[steps] = rs
    return WaveProfile(z, U, dU, c, reaction, mu_l, mu_r)


@dataclass
class PeriodicProfile:
    """Two-layer periodic profile of ``v_xx + K f(v) = 0`` on [0, 1).

    Layers sit at x = 0 (decreasing) and x = h2 (increasing); the profile is
    near rho_minus on (0, h2) and near rho_plus on (h2, 1).
    """
    K: float
    x: np.ndarray
    v: np.ndarray
    vx: np.ndarray
    h2: float
    m1: float
    m2: float
    energy: float
    delta_minus: float
    delta_plus: float
    reaction: BistableReaction
    junction: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.x.size

    @property
    def eps(self):
        return 1.0 / np.sqrt(self.K)

    def junction_residual(self):
        return max(self.junction.values()) if self.junction else 0.0

    def hat(self, wave):
        """Piecewise profile built from the standing wave and its derivative."""
        sk = np.sqrt(self.K)
        x = self.x
        z = np.where(x <= self.m1, -sk * x,
                     np.where(x <= self.m2, sk * (x - self.h2), sk * (1.0 - x)))
        sgn = np.where(x <= self.m1, -1.0, np.where(x <= self.m2, 1.0, -1.0))
        U, dU = wave.evaluate(z)
        return U, sgn * sk * dU

    def hat_errors(self, wave):
        vh, vhx = self.hat(wave)
        return float(np.max(np.abs(self.v - vh))), float(np.max(np.abs(self.vx - vhx)))

    def centered(self):
        """Grid, values and derivatives rolled onto x in [-1/2, 1/2)."""
        shift = self.n // 2
        x = np.roll(self.x, shift)
        x = np.where(x >= 0.5, x - 1.0, x)
        return x, np.roll(self.v, shift), np.roll(self.vx, shift)

    def stretched(self):
        """Grid z = sqrt(K) x on sqrt(K)T with the stretched profile."""
        x, v, vx = self.centered()
        sk = np.sqrt(self.K)
        return sk * x, v, vx / sk

    def energy_residual(self):
        """max |(eps^2/2) v_x^2 - V(v) - e_star| over the grid."""
        e = 0.5 * self.vx ** 2 / self.K - self.reaction.potential(self.v)
        return float(np.max(np.abs(e - self.energy)))

    def to_csv(self, path):
        """Columns x, v, v_x plus a JSON sidecar with the scalar metadata."""
        np.savetxt(path, np.column_stack([self.x, self.v, self.vx]), delimiter=",",
                   header="x,v,vx", comments="", fmt="%.17g")
        with open(str(path).rsplit(".", 1)[0] + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2)

    def metadata(self):
        return {"K": self.K, "n": self.n, "h2": self.h2, "m1": self.m1, "m2": self.m2,
                "e_star": self.energy, "delta_minus": self.delta_minus,
                "delta_plus": self.delta_plus, "junction_residual": self.junction_residual(),
                "sup_v": float(np.max(np.abs(self.v))), "sup_vx": float(np.max(np.abs(self.vx))),
                "l2_vx": float(np.sqrt(np.mean(self.vx ** 2))),
                "reaction": self.reaction.to_dict()}


def hat_profile(wave, K, h2, x):
    """Piecewise standing-wave profile on [0, 1) with layers at 0 and h2."""
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    sk = np.sqrt(K)
    m1, m2 = 0.5 * h2, 0.5 * (h2 + 1.0)
    z = np.where(x <= m1, -sk * x, np.where(x <= m2, sk * (x - h2), sk * (1.0 - x)))
    return wave.evaluate(z)[0]


def _excursion_integral(W, delta, D):
    """int_delta^D du / sqrt(2 (W(u) - W(delta))) for a turning point at offset delta.

    Substituting u = delta cosh^2 t removes both the inverse square-root
    singularity at the turning point and the near-logarithmic peak at small
    delta.
    """
    t_max = np.arccosh(np.sqrt(max(D / delta, 1.0)))
    sd = np.sqrt(delta)

    def integrand(t):
        ch = np.cosh(t)
        q = _divided_difference(W, delta * ch * ch, delta)
        return 2.0 * sd * ch / np.sqrt(2.0 * q)

    with warnings.catch_warnings():
        # roundoff warnings at the 1e-13 level; lengths are cross-checked by the panel rule
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(integrand, 0.0, t_max, epsabs=1e-15, epsrel=1e-13, limit=400)
    return val


def _turning_offset(W, energy, D):
    """Offset delta in (0, D) with W(delta) = energy."""
    if energy <= 0:
        return 0.0
    if energy >= W(D):
        # rounding at the top of the energy range
        return D * (1 - 1e-15)
    g = lambda ld: W(np.exp(ld)) - energy
    lo = np.log(np.finfo(float).tiny) / 2
    return float(np.exp(optimize.brentq(g, lo, np.log(D), xtol=1e-15, rtol=1e-15)))


_GL16_X, _GL16_W = np.polynomial.legendre.leggauss(16)


class _Excursion:
    """Offset y(s) at distance s from a turning point, by inverting the arclength.

    With u = delta cosh^2 t the arclength s(t) = K^{-1/2} int_0^t g is a smooth
    cumulative integral.  It is tabulated panelwise with Gauss-Legendre and
    inverted by Newton, so offsets keep full relative precision.
    """

    def __init__(self, W, delta, D, K, panel=0.05):
        self.W, self.delta, self.sk = W, delta, np.sqrt(K)
        self.t_max = float(np.arccosh(np.sqrt(max(D / delta, 1.0))))
        npan = max(16, int(np.ceil(self.t_max / panel)))
        self.edges = np.linspace(0.0, self.t_max, npan + 1)
        a, b = self.edges[:-1], self.edges[1:]
        self.cum = np.concatenate([[0.0], np.cumsum(self._panel(a, b))])

    def _g(self, t):
        ch = np.cosh(t)
        q = _divided_difference(self.W, self.delta * ch * ch, self.delta)
        return 2.0 * np.sqrt(self.delta) * ch / np.sqrt(2.0 * q)

    def _panel(self, a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[..., None] + half[..., None] * _GL16_X
        return half * (self._g(nodes) @ _GL16_W)

    @property
    def length(self):
        """Half-excursion length in x units."""
        return self.cum[-1] / self.sk

    def __call__(self, s):
        """Offsets y and |dy/ds| at distances s >= 0 from the turning point."""
        s = np.asarray(s, dtype=float)
        target = np.clip(s * self.sk, 0.0, self.cum[-1])
        k = np.clip(np.searchsorted(self.cum, target, side="right") - 1, 0, self.cum.size - 2)
        a = self.edges[k]
        frac = (target - self.cum[k]) / (self.cum[k + 1] - self.cum[k])
        t = a + frac * (self.edges[k + 1] - a)
        for _ in range(30):
            F = self.cum[k] + self._panel(a, t) - target
            step = F / self._g(t)
            t = np.clip(t - step, self.edges[k], self.edges[k + 1])
            if np.max(np.abs(step)) < 1e-16:
                break
        ch, sh = np.cosh(t), np.sinh(t)
        y = self.delta * ch * ch
        q = _divided_difference(self.W, y, self.delta)
        yp = self.sk * np.sqrt(self.delta) * sh * np.sqrt(2.0 * q)
        return y, yp


def small_oscillation_period(reaction, K):
    """Period 2 pi / sqrt(K f'(rho_star)) of the linearized oscillation."""
    return 2 * np.pi / np.sqrt(K * reaction.df(reaction.rho_star))


def default_grid_size(K):
    return int(max(256, 2 ** int(np.ceil(np.log2(32 * np.sqrt(K))))))


def solve_periodic_profile(reaction, K, n=None):
    """Periodic two-layer profile by the energy method.

    The first integral (eps^2/2) v_x^2 - V(v) = e fixes half-excursion
    lengths between turning points as functions of e; e is adjusted so the
    two excursions fill the unit torus.  Grid values come from inverting the
    arclength of each excursion, parametrized in offset coordinates.
    """
    if not reaction.is_balanced(1e-10):
        raise ProfileError("the periodic profile is built for balanced reactions")
    if small_oscillation_period(reaction, K) >= 1.0:
        raise ProfileError(f"K={K} too small: no two-layer profile of period 1")
    n = default_grid_size(K) if n is None else int(n)
    rm, rs, rp = reaction.zeros
    Wm = reaction.local_potential(rm)
    Wp = reaction.local_potential(rp)(Polynomial([0.0, -1.0]))
    Dm, Dp = rs - rm, rp - rs
    sk = np.sqrt(K)

    def lengths(log_dm):
        dm = np.exp(log_dm)
        E = Wm(dm)
        dp = _turning_offset(Wp, E, Dp)
        Lm = 2.0 / sk * _excursion_integral(Wm, dm, Dm)
        Lp = 2.0 / sk * _excursion_integral(Wp, dp, Dp)
        return Lm, Lp, dm, dp, E

    def excess(log_dm):
        Lm, Lp, *_ = lengths(log_dm)
        return Lm + Lp - 1.0

    lo = np.log(1e-140)
    hi = np.log(Dm) - 1e-6
    if excess(lo) < 0:
        raise ProfileError(f"K={K} too large for double precision turning points")
    log_dm = optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=300)
    Lm, Lp, dm, dp, E = lengths(log_dm)
    # rescale lengths so they add to one exactly; the mismatch is at quadrature level
    total = Lm + Lp
    h2 = Lm / total
    m1 = 0.5 * h2
    m2 = h2 + 0.5 * Lp / total

    lower = _Excursion(Wm, dm, Dm, K)
    upper = _Excursion(Wp, dp, Dp, K)
    half_up = 0.5 * Lp / total

    x = np.arange(n) / n
    v = np.empty(n)
    vx = np.empty(n)
    low = x <= h2
    y, yp = lower(np.abs(x[low] - m1))
    v[low] = rm + y
    vx[low] = np.sign(x[low] - m1) * yp
    up = ~low
    y, yp = upper(np.abs(x[up] - m2))
    v[up] = rp - y
    vx[up] = -np.sign(x[up] - m2) * yp

    # both excursions must meet rho_star with the same slope at x = h2 and x = 1
    yl, ypl = lower(np.array([m1]))
    yu, ypu = upper(np.array([half_up]))
    junction = {
        "value_lower": float(abs(rm + yl[0] - rs)),
        "value_upper": float(abs(rp - yu[0] - rs)),
        "slope": float(abs(ypl[0] - ypu[0])),
    }
    return PeriodicProfile(K=float(K), x=x, v=v, vx=vx, h2=h2, m1=m1, m2=m2,
                           energy=-E, delta_minus=dm, delta_plus=dp,
                           reaction=reaction, junction=junction)
