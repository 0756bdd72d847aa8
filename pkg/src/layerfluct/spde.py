"""Discrete noises and integrators for the fluctuation SPDEs.

Conventions: a white-noise increment on a cell of volume ``vol`` over a step
``dt`` is a centered Gaussian with variance ``dt / vol``.  Conservative noise
lives on cell edges and enters through a discrete divergence, so its spatial
sum telescopes to zero.  Every ensemble draws path p from its own generator
spawned from ``SeedSequence(seed)``, so results do not depend on batching.
"""
from dataclasses import dataclass, field

import numpy as np

from .reaction import constant_amplitudes


class SPDEError(RuntimeError):
    pass


class BlowUpError(SPDEError):
    pass


DEFAULT_GUARD = 1e6


def path_generators(seed, paths):
    """One independent numpy Generator per path."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(paths)]


# ---------------------------------------------------------------- noise

@dataclass
class NoiseSpec:
    """Noise description.

    kind: "white" or "regularized".  A regularized channel is either a
    Fourier cutoff (keep |k| <= cutoff along every axis) or a kernel table
    Q(x_i, x_j) on the flattened grid.
    """
    kind: str = "white"
    channels: int = 2
    cutoff: int = None
    kernel: np.ndarray = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("white", "regularized"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "regularized" and self.cutoff is None and self.kernel is None:
            raise ValueError("regularized noise needs a cutoff or a kernel table")
        self._sqrt = None
        if self.kernel is not None:
            Q = np.asarray(self.kernel, dtype=float)
            if not np.allclose(Q, Q.T, atol=1e-12 * max(1.0, np.abs(Q).max())):
                raise SPDEError("kernel table is not symmetric")
            w, V = np.linalg.eigh(Q)
            if w.min() < -1e-10 * max(1.0, w.max()):
                raise SPDEError("kernel table is not positive semidefinite")
            self._sqrt = V * np.sqrt(np.clip(w, 0.0, None))


def _fourier_cutoff(x, cutoff, axes):
    for ax in axes:
        X = np.fft.rfft(x, axis=ax)
        k = np.arange(X.shape[ax])
        shape = [1] * X.ndim
        shape[ax] = k.size
        X = X * (k <= cutoff).reshape(shape)
        x = np.fft.irfft(X, n=x.shape[ax], axis=ax)
    return x


def sample_noise(spec, shape, cellvol, dt, rng):
    """Per-channel increment fields of shape (channels, *shape)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    shape = tuple(shape)
    xi = rng.standard_normal((spec.channels,) + shape)
    if spec.kind == "white":
        return xi * np.sqrt(dt / cellvol)
    if spec._sqrt is not None:
        m = int(np.prod(shape))
        if spec._sqrt.shape[0] != m:
            raise SPDEError("kernel table does not match the grid")
        flat = xi.reshape(spec.channels, m) @ spec._sqrt.T
        return flat.reshape((spec.channels,) + shape) * np.sqrt(dt)
    out = _fourier_cutoff(xi * np.sqrt(dt / cellvol), spec.cutoff, range(1, xi.ndim))
    return out


def rescale_kernel(Q, K, d=1):
    """Pull a kernel on T^d back to sqrt(K) T x T^{d-1}: only the first coordinate is scaled.

    For d >= 2 points carry their coordinates on the last axis.
    """
    s = 1.0 / np.sqrt(K)
    if d == 1:
        return lambda z, w: Q(np.asarray(z) * s, np.asarray(w) * s)
    scale = np.array([s] + [1.0] * (d - 1))
    return lambda z, w: Q(np.asarray(z) * scale, np.asarray(w) * scale)


def kernel_table(Q, points):
    """Dense table Q(x_i, x_j) for a 1d array of points."""
    p = np.asarray(points, dtype=float)
    return Q(p[:, None], p[None, :])


def stretch_white(dW_torus, K):
    """Reinterpret white increments on a torus grid as a field on sqrt(K) T.

    Values are unchanged pointwise (the field is evaluated at z / sqrt K); in
    law this equals K^{1/4} times white noise on the stretched grid, since the
    cell volume grows by sqrt K.
    """
    return np.asarray(dW_torus, dtype=float).copy()


# ---------------------------------------------------------------- series

@dataclass
class FieldSeries:
    """Snapshots ``data[t, path, ...]`` of a field with grid and scaling metadata.

    kind: "Phi" (torus fluctuation field), "Psi_tilde" or "Psi" (stretched),
    "psi" (interface field), "offsite".
    """
    times: np.ndarray
    data: np.ndarray
    grid: dict
    kind: str
    meta: dict = field(default_factory=dict)
    aborted: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise SPDEError("times must be strictly increasing")
        if self.data.shape[0] != self.times.size:
            raise SPDEError("one snapshot per time required")

    def finite(self):
        return bool(np.all(np.isfinite(self.data)))

    def to_psi(self):
        """Psi = K^{-3/4} Psi_tilde."""
        if self.kind == "Psi":
            return self
        if self.kind != "Psi_tilde":
            raise SPDEError(f"cannot convert {self.kind} to Psi")
        K = self.meta["K"]
        return FieldSeries(self.times, self.data / K ** 0.75, dict(self.grid), "Psi",
                           dict(self.meta), self.aborted)

    def to_psi_tilde(self):
        if self.kind == "Psi_tilde":
            return self
        if self.kind != "Psi":
            raise SPDEError(f"cannot convert {self.kind} to Psi_tilde")
        K = self.meta["K"]
        return FieldSeries(self.times, self.data * K ** 0.75, dict(self.grid), "Psi_tilde",
                           dict(self.meta), self.aborted)

    def to_csv(self, path, path_index=0):
        """Long-format CSV: time, grid index, value (first spatial axis flattened)."""
        snaps = self.data[:, path_index].reshape(self.times.size, -1)
        idx = np.arange(snaps.shape[1])
        rows = np.column_stack([np.repeat(self.times, idx.size), np.tile(idx, self.times.size),
                                snaps.ravel()])
        np.savetxt(path, rows, delimiter=",", header="t,index,value", comments="",
                   fmt=["%.10g", "%d", "%.17g"])


def _snapshot_steps(T, dt, every):
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be a positive multiple of dt")
    every = max(1, int(every))
    return steps, every


def _phi_weights(mu, dt):
    """Exact per-mode factors: decay e^{-mu dt}, noise sqrt((1 - e^{-2 mu dt}) / (2 mu dt)),
    drift (1 - e^{-mu dt}) / (mu dt)."""
    x = mu * dt
    small = np.abs(x) < 1e-8
    xs = np.where(small, 1.0, x)
    decay = np.exp(-x)
    noise = np.where(small, 1.0 - 0.5 * x, np.sqrt(np.abs(-np.expm1(-2 * xs) / (2 * xs))))
    drift = np.where(small, 1.0 - 0.5 * x, -np.expm1(-xs) / xs)
    return decay, noise, drift


def _edge_midpoints(u, axis=-1):
    return 0.5 * (u + np.roll(u, -1, axis=axis))


def _divergence(F, h, axis):
    """Backward difference of edge values F_{i+1/2} -> cell i; sums to zero."""
    return (F - np.roll(F, 1, axis=axis)) / h


# ---------------------------------------------------------------- density field on T^d

def integrate_density_spde(reaction, profile, N, K, n=1, noise=None, amplitudes=None, T=1.0,
                           dt=1e-4, paths=1, seed=0, d=1, n_ux=None, phi0=None,
                           advection=None, guard=DEFAULT_GUARD, every=None, record=True):
    """Semi-implicit Euler for the fluctuation field Phi on T^d (d = 1, 2).

    dPhi = Lap Phi dt + K F_n(u, Phi) dt + div(g1(u) dW) + sqrt(K) g2(u) dW'.
    ``profile`` is a PeriodicProfile or an array of u values on the x1 grid.
    ``advection`` = c adds c sqrt(K) d_x1 Phi with upwinding.
    """
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    amp = amplitudes or constant_amplitudes()
    u = np.asarray(getattr(profile, "v", profile), dtype=float)
    nx = u.size
    dx = 1.0 / nx
    n_ux = n_ux or (nx if d == 2 else 1)
    dux = 1.0 / n_ux
    shape = (nx,) if d == 1 else (n_ux, nx)
    cellvol = dx * (dux if d == 2 else 1.0)
    fp = reaction.df(u)
    if dt * K * np.max(np.abs(fp)) > 1.0:
        raise SPDEError("explicit reaction step unstable: need dt K max|f'| <= 1")
    if advection is not None and abs(advection) * np.sqrt(K) * dt / dx > 1.0:
        raise SPDEError("advection CFL violated")
    noise = noise or NoiseSpec(channels=d + 1)
    if noise.channels != d + 1:
        raise SPDEError("need d + 1 noise channels")
    g1e = amp.g1(_edge_midpoints(u))
    g2c = amp.g2(u) * np.sqrt(K)
    # implicit Laplacian symbol
    kx = np.fft.rfftfreq(nx, d=dx)
    lam = (2 - 2 * np.cos(2 * np.pi * kx * dx)) / dx ** 2
    if d == 2:
        ku = np.fft.fftfreq(n_ux, d=dux)
        lam = lam[None, :] + ((2 - 2 * np.cos(2 * np.pi * ku * dux)) / dux ** 2)[:, None]
    inv = 1.0 / (1.0 + dt * lam)
    steps, every = _snapshot_steps(T, dt, every or max(1, int(round(T / dt)) // 10))
    rngs = path_generators(seed, paths)
    Phi = np.zeros((paths,) + shape) if phi0 is None else np.broadcast_to(phi0, (paths,) + shape).copy()
    times, snaps = [0.0], [Phi.copy()]
    aborted = False
    for s in range(1, steps + 1):
        dW = np.stack([sample_noise(noise, shape, cellvol, dt, r) for r in rngs])
        incr = dt * K * reaction.taylor_drift(u, Phi, n=n, N=N, d=d)
        incr = incr + _divergence(g1e * dW[:, 0], dx, axis=-1)
        if d == 2:
            incr = incr + _divergence(amp.g1(u) * dW[:, 1], dux, axis=-2)
        incr = incr + g2c * dW[:, d]
        if advection is not None:
            c = advection * np.sqrt(K)
            if c >= 0:
                grad = (np.roll(Phi, -1, axis=-1) - Phi) / dx
            else:
                grad = (Phi - np.roll(Phi, 1, axis=-1)) / dx
            incr = incr + dt * c * grad
        rhs = Phi + incr
        axes = (-1,) if d == 1 else (-2, -1)
        if d == 1:
            Phi = np.fft.irfft(np.fft.rfft(rhs, axis=-1) * inv, n=nx, axis=-1)
        else:
            Phi = np.fft.irfft2(np.fft.rfft2(rhs, axes=axes) * inv, s=shape, axes=axes)
        if not np.all(np.isfinite(Phi)) or np.max(np.abs(Phi)) > guard:
            aborted = True
            times.append(s * dt)
            snaps.append(np.where(np.isfinite(Phi), Phi, np.nan))
            break
        if record and s % every == 0:
            times.append(s * dt)
            snaps.append(Phi.copy())
    grid = {"domain": "torus", "d": d, "nx": nx, "n_ux": n_ux if d == 2 else None, "dx": dx}
    meta = {"N": N, "K": K, "n": n, "seed": seed, "paths": paths, "dt": dt}
    series = FieldSeries(np.array(times), np.array(snaps), grid, "Phi", meta, aborted)
    if aborted:
        series.meta["abort"] = f"sup-norm exceeded {guard:g} at t={times[-1]:g}"
    return series


def conservative_mass_increment(g1_edges, dW_edges, dx):
    """Spatial integral of the discrete divergence term; zero up to rounding."""
    return float(np.sum(_divergence(g1_edges * dW_edges, dx, axis=-1)) * dx)


# ---------------------------------------------------------------- stretched field

class StretchedIntegrator:
    """Exponential integrator for Psi on sqrt(K) T x T^{d-1}.

    The linear part -K A + Lap_ux is diagonalized exactly (z eigenmodes times
    ux Fourier modes); noise enters with the exact per-mode variance factor
    and the optional polynomial nonlinearity by exponential Euler.
    """

    def __init__(self, profile, d=1, n_ux=8, amplitudes=None, N=None, nonlinear=False,
                 channels=("grad", "ux", "flip"), n=None):
        from .spectral import StretchedSemigroup

        if d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        if nonlinear and N is None:
            raise ValueError("nonlinear run needs N")
        self.sg = StretchedSemigroup(profile, n)
        self.K = profile.K
        self.d, self.N, self.nonlinear = d, N, nonlinear
        self.reaction = profile.reaction
        self.amp = amplitudes or constant_amplitudes()
        self.channels = set(channels)
        self.z = self.sg.z
        self.dz = self.sg.dz
        self.vbar = self.sg.v
        self.n_ux = n_ux if d == 2 else 1
        self.dux = 1.0 / self.n_ux
        self.shape = (self.z.size,) if d == 1 else (self.n_ux, self.z.size)
        self.cellvol = self.dz * (self.dux if d == 2 else 1.0)
        self.g1e = self.amp.g1(_edge_midpoints(self.vbar))
        self.g1c = self.amp.g1(self.vbar)
        self.g2c = self.amp.g2(self.vbar)
        mu = self.K * self.sg.values
        if d == 2:
            ku = np.fft.fftfreq(self.n_ux, d=self.dux)
            mu = mu[None, :] + (2 * np.pi * ku)[:, None] ** 2
        self.mu = mu

    def to_coef(self, F):
        C = self.sg.to_modes(F)
        return np.fft.fft(C, axis=-2) if self.d == 2 else C

    def from_coef(self, C):
        if self.d == 2:
            C = np.fft.ifft(C, axis=-2).real
        return self.sg.from_modes(C)

    def noise_field(self, dW):
        """Combine channel increments (paths, 3, *shape) into one field increment."""
        out = np.zeros(dW.shape[:1] + self.shape)
        if "grad" in self.channels:
            out += _divergence(self.g1e * dW[:, 0], self.dz, axis=-1)
        if self.d == 2 and "ux" in self.channels:
            out += self.K ** -0.5 * self.g1c * _divergence(dW[:, 1], self.dux, axis=-2)
        if "flip" in self.channels:
            out += self.g2c * dW[:, 2]
        return out

    def drift(self, Psi):
        K, N, d, r = self.K, self.N, self.d, self.reaction
        return (K ** 1.75 * N ** (-d / 2) * 0.5 * r.df(self.vbar, 2) * Psi ** 2
                + K ** 2.5 * N ** (-d) / 6.0 * r.df(self.vbar, 3) * Psi ** 3)

    def run(self, T, dt, paths=1, seed=0, psi0=None, every=None, guard=DEFAULT_GUARD):
        steps, every = _snapshot_steps(T, dt, every or max(1, int(round(T / dt)) // 10))
        decay, wnoise, wdrift = _phi_weights(self.mu, dt)
        rngs = path_generators(seed, paths)
        full = (paths,) + self.shape
        Psi = np.zeros(full) if psi0 is None else np.broadcast_to(psi0, full).copy()
        C = self.to_coef(Psi)
        times, snaps = [0.0], [Psi.copy()]
        aborted = False
        spec = NoiseSpec(channels=3)
        for s in range(1, steps + 1):
            # all channels are always drawn so that switching one off keeps the others fixed
            dW = np.stack([sample_noise(spec, self.shape, self.cellvol, dt, r) for r in rngs])
            C = decay * C + wnoise * self.to_coef(self.noise_field(dW))
            if self.nonlinear:
                C = C + wdrift * dt * self.to_coef(self.drift(Psi))
            need = self.nonlinear or s % every == 0 or s == steps
            if need:
                Psi = self.from_coef(C)
                if not np.all(np.isfinite(Psi)) or np.max(np.abs(Psi)) > guard:
                    aborted = True
                    times.append(s * dt)
                    snaps.append(Psi)
                    break
            if s % every == 0:
                times.append(s * dt)
                snaps.append(Psi.copy())
        grid = {"domain": "stretched", "d": self.d, "z": self.z, "dz": self.dz,
                "n_ux": self.n_ux if self.d == 2 else None}
        meta = {"K": self.K, "N": self.N, "seed": seed, "paths": paths, "dt": dt,
                "nonlinear": self.nonlinear, "channels": sorted(self.channels)}
        return FieldSeries(np.array(times), np.array(snaps), grid, "Psi", meta, aborted)


def integrate_stretched_spde(profile, T=1.0, dt=1e-3, paths=1, seed=0, d=1, n_ux=8,
                             amplitudes=None, N=None, nonlinear=False,
                             channels=("grad", "ux", "flip"), n=None, every=None):
    integ = StretchedIntegrator(profile, d=d, n_ux=n_ux, amplitudes=amplitudes, N=N,
                                nonlinear=nonlinear, channels=channels, n=n)
    return integ.run(T, dt, paths=paths, seed=seed, every=every)


# ---------------------------------------------------------------- limit interface

def integrate_limit_interface(c_star, c3=0.0, d=1, T=1.0, dt=1e-3, seed=0, paths=1, n=64,
                              psi0=None, every=None, guard=DEFAULT_GUARD):
    """psi on T^{d-1}: d=1 is the SDE dpsi = c3 psi^3 dt + c* dB; d=2 the stochastic
    heat equation on the circle, linear part exact per Fourier mode."""
    if d not in (1, 2):
        raise SPDEError("only d = 1, 2 are supported; the limit is distribution valued for d >= 3")
    steps, every = _snapshot_steps(T, dt, every or max(1, int(round(T / dt)) // 10))
    rngs = path_generators(seed, paths)
    if d == 1:
        x = np.zeros(paths) if psi0 is None else np.broadcast_to(psi0, (paths,)).astype(float)
        times, snaps = [0.0], [x.copy()]
        for s in range(1, steps + 1):
            dB = np.array([r.standard_normal() for r in rngs]) * np.sqrt(dt)
            x = x + c3 * x ** 3 * dt + c_star * dB
            if s % every == 0:
                times.append(s * dt)
                snaps.append(x.copy())
        return FieldSeries(np.array(times), np.array(snaps), {"domain": "point", "d": 1},
                           "psi", {"c_star": c_star, "c3": c3, "seed": seed, "dt": dt})
    h = 1.0 / n
    k = np.fft.rfftfreq(n, d=h)
    mu = (2 * np.pi * k) ** 2
    decay, wnoise, wdrift = _phi_weights(mu, dt)
    psi = np.zeros((paths, n)) if psi0 is None else np.broadcast_to(psi0, (paths, n)).copy()
    P = np.fft.rfft(psi, axis=-1)
    times, snaps = [0.0], [psi.copy()]
    aborted = False
    for s in range(1, steps + 1):
        dW = np.stack([r.standard_normal(n) for r in rngs]) * np.sqrt(dt / h)
        P = decay * P + wnoise * c_star * np.fft.rfft(dW, axis=-1)
        if c3 != 0.0:
            P = P + wdrift * dt * c3 * np.fft.rfft(psi ** 3, axis=-1)
        if c3 != 0.0 or s % every == 0:
            psi = np.fft.irfft(P, n=n, axis=-1)
            if not np.all(np.isfinite(psi)) or np.max(np.abs(psi)) > guard:
                aborted = True
                times.append(s * dt)
                snaps.append(psi)
                break
        if s % every == 0:
            times.append(s * dt)
            snaps.append(psi.copy())
    grid = {"domain": "circle", "d": 2, "n": n, "dx": h}
    meta = {"c_star": c_star, "c3": c3, "seed": seed, "dt": dt, "paths": paths}
    return FieldSeries(np.array(times), np.array(snaps), grid, "psi", meta, aborted)


def mode_variance(series, k, burn_in=0.0):
    """Pooled E|psi_hat_k|^2 (psi_hat = rfft / n) over paths and snapshots after burn-in."""
    sel = series.times >= burn_in
    X = np.fft.rfft(series.data[sel], axis=-1) / series.data.shape[-1]
    return np.mean(np.abs(X[..., k]) ** 2, axis=(0, 1))


# ---------------------------------------------------------------- off-interface field

def _offsite_symbols(n, K, c):
    h = 1.0 / n
    k = np.fft.rfftfreq(n, d=h)
    lap = (2 - 2 * np.cos(2 * np.pi * k * h)) / h ** 2
    return h, k, lap + c * K, lap


def integrate_offsite(K, c, amp_grad=1.0, amp_flip=1.0, T=1.0, dt=0.1, seed=0, paths=1,
                      n=256, every=None):
    """d Psi = (Lap - cK) Psi dt + amp_grad K^{-1/4} div dW1 + amp_flip K^{1/4} dW2 on T.

    Exact in law per discrete Fourier mode, so dt only sets the snapshot spacing.
    """
    if c <= 0:
        raise ValueError("need c > 0")
    h, k, mu, lap = _offsite_symbols(n, K, c)
    decay, wnoise, _ = _phi_weights(mu, dt)
    steps, every = _snapshot_steps(T, dt, every or 1)
    rngs = path_generators(seed, paths)
    P = np.zeros((paths, k.size), dtype=complex)
    times, snaps = [0.0], [np.zeros((paths, n))]
    for s in range(1, steps + 1):
        W = np.stack([r.standard_normal((2, n)) for r in rngs]) * np.sqrt(dt / h)
        inc = (amp_grad * K ** -0.25 * _divergence(W[:, 0], h, axis=-1)
               + amp_flip * K ** 0.25 * W[:, 1])
        P = decay * P + wnoise * np.fft.rfft(inc, axis=-1)
        if s % every == 0:
            times.append(s * dt)
            snaps.append(np.fft.irfft(P, n=n, axis=-1))
    return FieldSeries(np.array(times), np.array(snaps), {"domain": "torus", "d": 1, "n": n, "dx": h},
                       "offsite", {"K": K, "c": c, "amp_grad": amp_grad, "amp_flip": amp_flip,
                                   "seed": seed, "dt": dt, "paths": paths})


def offsite_discrete_covariance(K, c, amp_grad, amp_flip, n=256, t=np.inf, lag=0):
    """Exact covariance of Psi(t, x) and Psi(t, x + lag h) for the discrete scheme from zero data."""
    h, k, mu, lap = _offsite_symbols(n, K, c)
    full = np.fft.fftfreq(n, d=h)
    lap_f = (2 - 2 * np.cos(2 * np.pi * full * h)) / h ** 2
    mu_f = lap_f + c * K
    # spectral density of the combined noise per unit time, per mode (DFT normalized by n)
    dens = (amp_grad ** 2 * K ** -0.5 * lap_f + amp_flip ** 2 * K ** 0.5) / h
    if np.isinf(t):
        acc = 1.0 / (2 * mu_f)
    else:
        acc = -np.expm1(-2 * mu_f * t) / (2 * mu_f)
    return float(np.sum(dens * acc * np.cos(2 * np.pi * full * lag * h)) / n)
