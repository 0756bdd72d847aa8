"""Linearization of the periodic layer profile, its semigroup and projections.

The torus operator is ``L = -eps^2 d_xx - f'(v)`` with eps^2 = 1/K.  On the
stretched torus z = sqrt(K) x the same matrix represents
``A = -d_zz - f'(vbar(z))``, so both views share one discretization.

The two-layer profile has two exponentially small eigenvalues: the
translation mode (eigenvector ~ v_x, eigenvalue ~ 0) and a layer-interaction
mode (eigenvector ~ |v_x|) whose eigenvalue is *negative*, because the two
layers attract.  Eigenvalues are stored in ascending order; the two slow
modes are labelled explicitly.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .profile import PeriodicProfile


class SpectralError(RuntimeError):
    pass


# ---------------------------------------------------------------- cutoffs

def _smooth_step(t, kind="smooth"):
    """Monotone step from 0 (t <= 0) to 1 (t >= 1)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    if kind == "smooth":
        with np.errstate(divide="ignore", over="ignore"):
            a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
            b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
        return a / (a + b)
    if kind == "cosine":
        return np.sin(0.5 * np.pi * t) ** 2
    if kind == "linear":
        return t
    raise ValueError(f"unknown cutoff kind {kind!r}")


def cutoff(x, a, b, margin, kind="smooth"):
    """Periodic cutoff on the unit torus: 1 on [a+margin, b-margin], 0 off [a, b]."""
    L = b - a
    if not 0 < 2 * margin < L <= 1:
        raise ValueError("need 0 < 2 margin < b - a <= 1")
    y = np.mod(np.asarray(x, dtype=float) - a, 1.0)
    inside = y <= L
    up = _smooth_step(y / margin, kind)
    down = _smooth_step((L - y) / margin, kind)
    return np.where(inside, up * down, 0.0)


# ---------------------------------------------------------------- operators

def torus_matrix(v, K, reaction, dx):
    """Sparse periodic 3-point discretization of -eps^2 d_xx - f'(v)."""
    n = v.size
    a = 1.0 / (K * dx * dx)
    main = 2 * a - reaction.df(v)
    off = -a * np.ones(n)
    M = sp.diags([main, off[:-1], off[:-1]], [0, 1, -1], shape=(n, n), format="lil")
    M[0, n - 1] = -a
    M[n - 1, 0] = -a
    return M.tocsr()


def quadratic_form(a, b, v, K, reaction, dx):
    """<L a, b> in gradient form; avoids the cancellation of applying L first."""
    da = np.roll(a, -1) - a
    db = np.roll(b, -1) - b
    return float(np.dot(da, db) / (K * dx) - dx * np.dot(reaction.df(v) * a, b))


def _layer_frame(profile):
    """Centered positions of the layers and the midpoints m1, m2 (mod 1)."""
    h2 = profile.h2
    return {"h1": 0.0, "h2": h2, "m1": profile.m1, "m2": profile.m2, "m3": profile.m1 + 1.0}


def tau_functions(profile, x, vx, kind="smooth"):
    """Normalized tau_j = -gamma_j v_x for the layer at h2 (j=1) and at 0 (j=2)."""
    fr = _layer_frame(profile)
    eps = 1.0 / np.sqrt(profile.K)
    dx = float(np.mean(np.diff(np.sort(np.mod(x, 1.0))))) if x.size > 1 else 1.0
    out = []
    for a, b in ((fr["m1"], fr["m2"]), (fr["m2"], fr["m3"])):
        tau = -cutoff(x, a, b, 2 * eps, kind) * vx
        out.append(tau / np.sqrt(np.sum(tau ** 2) * dx))
    return np.column_stack(out)


def discrete_equilibrium(profile, n=None, iters=6, tol=1e-12):
    """Centered grid and profile polished to solve the discrete equation.

    Sampling the continuum profile leaves an O(dx^2) residual which shifts
    the translation eigenvalue by O(dx^2).  Newton steps restricted to the
    complement of the two slow directions remove it without moving layers.
    """
    from .profile import solve_periodic_profile

    if n is not None and n != profile.n:
        profile = solve_periodic_profile(profile.reaction, profile.K, n)
    x, v, vx = profile.centered()
    K, r = profile.K, profile.reaction
    n = v.size
    dx = 1.0 / n
    S = tau_functions(profile, x, vx) * np.sqrt(dx)
    Sm = sp.csr_matrix(S)
    hist = []
    for _ in range(iters):
        F = (np.roll(v, 1) - 2 * v + np.roll(v, -1)) / (K * dx * dx) + r.f(v)
        F_perp = F - S @ (S.T @ F)
        hist.append(float(np.max(np.abs(F_perp))))
        # stop at tolerance or once round-off stalls the iteration
        if hist[-1] < tol or (len(hist) > 1 and hist[-1] > 0.1 * hist[-2]):
            break
        J = -torus_matrix(v, K, r, dx)
        B = sp.bmat([[J, Sm], [Sm.T, None]], format="csc")
        sol = spla.spsolve(B, np.concatenate([-F, np.zeros(2)]))
        v = v + sol[:n]
    return x, v, vx, hist


@dataclass
class SpectralDecomposition:
    """Lowest eigenpairs of the discretized torus operator.

    ``values`` ascend; ``vectors`` are orthonormal for the weight ``dx``.
    ``translation`` and ``interaction`` index the two slow modes.
    """
    K: float
    x: np.ndarray
    v: np.ndarray
    values: np.ndarray
    vectors: np.ndarray
    translation: int
    interaction: int
    alignment: float
    dx: float
    domain: str = "torus"
    newton_residuals: list = field(default_factory=list)

    @property
    def n(self):
        return self.x.size

    def by_mode(self):
        """(translation, interaction, remaining ascending) eigenvalues."""
        rest = [i for i in range(self.values.size) if i not in (self.translation, self.interaction)]
        return np.concatenate([[self.values[self.translation], self.values[self.interaction]],
                               self.values[rest]])

    def gap(self):
        """Lowest eigenvalue outside the two slow modes."""
        return float(self.by_mode()[2])

    def stretched(self):
        """Same decomposition viewed on sqrt(K)T; vectors renormalized for dz."""
        sk = np.sqrt(self.K)
        return SpectralDecomposition(self.K, sk * self.x, self.v, self.values,
                                     self.vectors / sk ** 0.5, self.translation,
                                     self.interaction, self.alignment, self.dx * sk,
                                     domain="stretched",
                                     newton_residuals=self.newton_residuals)


def _refine_slow(vectors, v, K, reaction, dx):
    """Rayleigh-Ritz in the span of the two slow eigenvectors, using the gradient form."""
    S = vectors[:, :2]
    Q = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            Q[i, j] = quadratic_form(S[:, i], S[:, j], v, K, reaction, dx)
    G = dx * S.T @ S
    w, C = sla.eigh(Q, G)
    return w, S @ C


def eigenpairs(profile: PeriodicProfile, k=5, n=None, dense_limit=4096):
    """Lowest k eigenpairs of L = -eps^2 d_xx - f'(v) on the torus."""
    if k < 3:
        raise ValueError("k >= 3 required")
    x, v, vx, hist = discrete_equilibrium(profile, n)
    n = v.size
    dx = 1.0 / n
    K, r = profile.K, profile.reaction
    if dx * dx * K > 0.5:
        raise SpectralError("grid does not resolve the layer: need dz^2 <= 0.5")
    M = torus_matrix(v, K, r, dx)
    if n <= dense_limit:
        w, U = sla.eigh(M.toarray(), subset_by_index=[0, k - 1], driver="evr")
    else:
        try:
            w, U = spla.eigsh(M.tocsc(), k=k, sigma=-1.0, which="LM", tol=1e-13)
        except spla.ArpackNoConvergence as exc:
            raise SpectralError("shift-invert iteration did not converge") from exc
        order = np.argsort(w)
        w, U = w[order], U[:, order]
    U = U / np.sqrt(dx)
    ws, Us = _refine_slow(U, v, K, r, dx)
    w = w.copy()
    w[:2], U[:, :2] = ws, Us
    for j in range(U.shape[1]):
        U[:, j] *= np.sign(U[np.argmax(np.abs(U[:, j])), j])
    e = vx / np.sqrt(np.sum(vx ** 2) * dx)
    align = np.abs(dx * U[:, :2].T @ e)
    tr = int(np.argmax(align))
    return SpectralDecomposition(K=K, x=x, v=v, values=w, vectors=U, translation=tr,
                                 interaction=1 - tr, alignment=float(align[tr]), dx=dx,
                                 newton_residuals=hist)


# ---------------------------------------------------------------- semigroup

class StretchedSemigroup:
    """e^{t(-K A + Delta_ux)} on sqrt(K)T x T^{d-1} by full eigen-expansion in z.

    Fields have shape (..., n_ux, n_z) in d >= 2 or (..., n_z) in d = 1.
    """

    def __init__(self, profile, n=None, max_dense=2048):
        x, v, vx, hist = discrete_equilibrium(profile, n)
        nz = v.size
        if nz > max_dense:
            raise SpectralError(f"dense semigroup limited to n <= {max_dense}")
        self.K = profile.K
        self.profile = profile
        dx = 1.0 / nz
        self.z = np.sqrt(self.K) * x
        self.dz = dx * np.sqrt(self.K)
        self.v = v
        M = torus_matrix(v, self.K, profile.reaction, dx).toarray()
        w, U = sla.eigh(M)
        U = U / np.sqrt(dx)
        ws, Us = _refine_slow(U, v, self.K, profile.reaction, dx)
        w[:2], U[:, :2] = ws, Us
        self.values = w
        # orthonormal in the dz-weighted inner product
        self.modes = U / np.sqrt(np.sqrt(self.K))
        self.newton_residuals = hist

    def to_modes(self, G):
        return self.dz * G @ self.modes

    def from_modes(self, c):
        return c @ self.modes.T

    def factors(self, t):
        return np.exp(-t * self.K * self.values)

    def apply(self, G, t, ux_axis=None):
        """Apply the semigroup to G (last axis z; optional ux axis gets the heat flow)."""
        G = np.asarray(G, dtype=float)
        if t == 0:
            return G.copy()
        out = self.from_modes(self.to_modes(G) * self.factors(t))
        if ux_axis is not None:
            out = heat_flow_torus(out, t, axis=ux_axis)
        return out

    def growth_bound(self, t):
        """Operator norm e^{t K max(0, -lambda_min)} of the z-semigroup."""
        return float(np.exp(t * self.K * max(0.0, -self.values.min())))


def heat_flow_torus(G, t, axis=-1):
    """e^{t Delta} on the unit torus via the Fourier multiplier."""
    n = G.shape[axis]
    k = np.fft.rfftfreq(n, d=1.0 / n)
    mult = np.exp(-t * (2 * np.pi * k) ** 2)
    shape = [1] * G.ndim
    shape[axis] = mult.size
    return np.fft.irfft(np.fft.rfft(G, axis=axis) * mult.reshape(shape), n=n, axis=axis)


def torus_semigroup_apply(profile, w, t, n=None):
    """e^{-t K L} w on the unit torus grid (scale-matched to the stretched view)."""
    sg = StretchedSemigroup(profile, n)
    return sg.apply(w, t)


# ---------------------------------------------------------------- projections

def limit_direction(wave, z):
    """e(z) = U0'(-z) / ||U0'|| on the line."""
    _, dU = wave.evaluate(-np.asarray(z, dtype=float))
    return dU / np.sqrt(wave.norm_derivative_sq())


def projection_limit(G, z, e, dz=None):
    """Coefficient <G, e> and the rank-one field <G, e> e."""
    dz = float(z[1] - z[0]) if dz is None else dz
    coef = float(dz * np.dot(G, e))
    return coef, coef * e


def projection_tau(w, taus, dx):
    """Orthogonal projection of w onto span of the tau functions."""
    G = dx * taus.T @ taus
    c = np.linalg.solve(G, dx * taus.T @ w)
    return taus @ c


# ---------------------------------------------------------------- traveling wave operator

def wave_operator(wave, z, c=None):
    """Conservative discretization of -(d_zz + c d_z + f'(U0)) on a uniform grid.

    Written as -e^{-cz} (e^{cz} u')' - f'(U0) u with zero boundary values, so
    that it is exactly symmetric for the weight e^{cz} dz.
    """
    c = wave.speed if c is None else c
    z = np.asarray(z, dtype=float)
    if abs(c) * np.max(np.abs(z)) > 600:
        raise SpectralError("exponential weight would overflow")
    dz = z[1] - z[0]
    n = z.size
    zh = z[:-1] + 0.5 * dz
    wh = np.exp(c * (zh - z[:-1]))  # e^{c z_{j+1/2}} / e^{c z_j}
    wl = np.exp(c * (zh - z[1:]))   # e^{c z_{j+1/2}} / e^{c z_{j+1}}
    main = np.zeros(n)
    main[:-1] += wh
    main[1:] += wl
    U, _ = wave.evaluate(z)
    main = main / dz ** 2 - wave.reaction.df(U)
    upper = -wh / dz ** 2
    lower = -wl / dz ** 2
    return sp.diags([main, upper, lower], [0, 1, -1], format="csr")


def weighted_inner(a, b, z, c):
    dz = z[1] - z[0]
    return float(dz * np.sum(np.exp(c * z) * a * b))


def weighted_symmetry_residual(wave, u, w, z):
    """|<A u, w>_{e^{cz}} - <u, A w>_{e^{cz}}| for the discretized wave operator."""
    A = wave_operator(wave, z)
    c = wave.speed
    return abs(weighted_inner(A @ u, w, z, c) - weighted_inner(u, A @ w, z, c))


def null_residual(wave, half_width=16.0, dz=0.001):
    """||A U0'|| in the weighted norm, relative to ||U0'||, on a fine grid."""
    z = np.arange(-half_width, half_width + dz / 2, dz)
    A = wave_operator(wave, z)
    _, dU = wave.evaluate(z)
    r = A @ dU
    inner = slice(1, -1)
    c = wave.speed
    num = weighted_inner(r[inner], r[inner], z[inner], c)
    den = weighted_inner(dU, dU, z, c)
    return float(np.sqrt(num / den))


# ---------------------------------------------------------------- heat kernel

def heat_kernel_torus(t, x, y, tol=1e-16):
    """Periodized kernel of d_t - d_xx on the unit torus."""
    if t <= 0:
        raise ValueError("t > 0 required")
    d = np.mod(np.asarray(x, dtype=float) - np.asarray(y, dtype=float) + 0.5, 1.0) - 0.5
    norm = 1.0 / np.sqrt(4 * np.pi * t)
    total = norm * np.exp(-d * d / (4 * t))
    ell = 1
    while True:
        term = norm * (np.exp(-(d - ell) ** 2 / (4 * t)) + np.exp(-(d + ell) ** 2 / (4 * t)))
        total = total + term
        if np.max(term) < tol * max(1.0, float(np.max(total))) and ell > 0.5:
            break
        ell += 1
        if ell > 10000:
            break
    return total
