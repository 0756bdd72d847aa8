"""Glauber-Kawasaki lattice gas on the discrete torus (d = 1, 2).

Exchanges of neighboring occupations happen at rate N^2 per bond (simple
exclusion), flips at site p at rate K c_p(eta).  The chain is simulated
exactly in law by uniformization: candidate events arrive at a constant
total rate and flips are accepted with probability c_p / c_max.

Along a trajectory the engine integrates, for a set of test functions, the
carre du champ of the Kawasaki and Glauber parts and the two drifts, all
updated locally after each event.
"""
import itertools
import struct
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .reaction import BistableReaction, NoiseAmplitudes


class ParticleError(ValueError):
    pass


MAX_WINDOW_CONFIGS = 2 ** 20


# ---------------------------------------------------------------- flip rates

class FlipRateFamily:
    """Translation-invariant flip rates given by a table over window contents.

    ``offsets`` lists the window sites relative to p; offset 0 (the site
    itself) must be first.  ``table[code]`` is the rate for the window
    configuration with bits ``code = sum_i eta_{p+off_i} 2^i``.
    """

    def __init__(self, offsets, table, name="custom"):
        offsets = np.atleast_2d(np.asarray(offsets, dtype=np.int64))
        if np.any(offsets[0] != 0):
            raise ParticleError("first window offset must be the site itself")
        if 2 ** offsets.shape[0] > MAX_WINDOW_CONFIGS:
            raise ParticleError("window too large for exact enumeration")
        table = np.asarray(table, dtype=float)
        if table.size != 2 ** offsets.shape[0]:
            raise ParticleError("table size must be 2^(window size)")
        if np.any(table <= 0):
            raise ParticleError("flip rates must be positive")
        self.offsets = offsets
        self.table = table
        self.name = name

    @property
    def d(self):
        return self.offsets.shape[1]

    @property
    def window(self):
        return self.offsets.shape[0]

    @property
    def c_max(self):
        return float(self.table.max())

    @classmethod
    def from_function(cls, offsets, rate, name="custom"):
        """Tabulate ``rate(window_bits)`` where window_bits[0] is eta_p."""
        offsets = np.atleast_2d(np.asarray(offsets, dtype=np.int64))
        m = offsets.shape[0]
        table = np.empty(2 ** m)
        for code in range(2 ** m):
            bits = np.array([(code >> i) & 1 for i in range(m)])
            table[code] = rate(bits)
        return cls(offsets, table, name)

    def rate(self, bits):
        code = int(np.dot(np.asarray(bits, dtype=np.int64), 1 << np.arange(self.window)))
        return float(self.table[code])

    def _moments(self, u, signed):
        m = self.window
        codes = np.arange(2 ** m)
        bits = (codes[:, None] >> np.arange(m)[None, :]) & 1
        ones = bits.sum(axis=1)
        w = u ** ones * (1.0 - u) ** (m - ones)
        vals = self.table * (1 - 2 * bits[:, 0]) if signed else self.table
        return float(np.dot(w, vals))

    def ensemble_f(self, u):
        """E over Bernoulli(u) of c_p (1 - 2 eta_p)."""
        if not 0 <= u <= 1:
            raise ParticleError("u must lie in [0, 1]")
        return self._moments(u, True)

    def ensemble_c0(self, u):
        """E over Bernoulli(u) of c_p."""
        if not 0 <= u <= 1:
            raise ParticleError("u must lie in [0, 1]")
        return self._moments(u, False)

    def polynomial_coefficients(self, which="f"):
        """Exact polynomial in u of ensemble_f (or ensemble_c0), ascending powers."""
        m = self.window
        from numpy.polynomial import Polynomial
        total = Polynomial([0.0])
        for code in range(2 ** m):
            bits = [(code >> i) & 1 for i in range(m)]
            k = sum(bits)
            term = Polynomial([0.0, 1.0]) ** k * Polynomial([1.0, -1.0]) ** (m - k)
            val = self.table[code] * ((1 - 2 * bits[0]) if which == "f" else 1.0)
            total = total + val * term
        return total.coef

    def reaction(self):
        """The ensemble reaction u -> E[c_p (1 - 2 eta_p)] as a BistableReaction."""
        return BistableReaction(self.polynomial_coefficients("f"), name=f"ensemble[{self.name}]",
                                window=(0.0, 1.0))

    def amplitudes(self):
        """g1 = sqrt(2 u (1 - u)), g2 = sqrt(<c0>(u))."""
        from numpy.polynomial import Polynomial
        c0 = Polynomial(self.polynomial_coefficients("c0"))
        g1 = lambda u: np.sqrt(np.maximum(2 * np.asarray(u) * (1 - np.asarray(u)), 0.0))
        g2 = lambda u: np.sqrt(np.maximum(c0(u), 0.0))
        return NoiseAmplitudes(g1, g2, name=f"particle[{self.name}]")


def _nn_offsets(d):
    offs = [[0] * d]
    for i in range(d):
        for s in (-1, 1):
            o = [0] * d
            o[i] = s
            offs.append(o)
    return np.array(offs, dtype=np.int64)


def constant_rates(d=1, c=1.0):
    return FlipRateFamily(np.zeros((1, d), dtype=np.int64), [c, c], name=f"constant({c:g})")


def linear_neighbor_rates(a, d=1):
    """c_p = 1 + a * (sum of nearest-neighbor occupations)."""
    offs = _nn_offsets(d)
    return FlipRateFamily.from_function(offs, lambda b: 1.0 + a * b[1:].sum(),
                                        name=f"linear({a:g})")


def bistable_rates(b=8.0):
    """Particle-hole symmetric nearest-neighbor rates in d = 1.

    A vacant site is filled at rate 1 + b [both neighbors occupied]; an
    occupied site is emptied at rate 1 + b [both neighbors vacant].  The
    ensemble reaction is (1 - 2u)(1 - b u (1 - u)): balanced, and bistable
    for b > 4.
    """
    if b <= 4:
        raise ParticleError("b > 4 is needed for bistability")

    def rate(bits):
        s = bits[1] + bits[2]
        if bits[0] == 0:
            return 1.0 + b * (s == 2)
        return 1.0 + b * (s == 0)

    return FlipRateFamily.from_function(_nn_offsets(1), rate, name=f"bistable({b:g})")


RATE_FAMILIES = {
    "constant": lambda d=1: constant_rates(d),
    "bistable": lambda d=1: bistable_rates(),
}


def rate_family_from_id(rid, d=1):
    if rid not in RATE_FAMILIES:
        raise ParticleError(f"unknown rate family {rid!r}")
    fam = RATE_FAMILIES[rid](d)
    if fam.d != d:
        raise ParticleError(f"rate family {rid!r} is defined for d={fam.d}")
    return fam


def ensemble_f(rates, u):
    return rates.ensemble_f(u)


def ensemble_c0(rates, u):
    return rates.ensemble_c0(u)


# ---------------------------------------------------------------- lattice tables

def _site_index(coords, N):
    idx = 0
    for c in coords:
        idx = idx * N + (c % N)
    return idx


def lattice_tables(N, d, offsets):
    """Neighbor table (M, 2d) with +e_i at column 2i+1, and window table (M, w)."""
    M = N ** d
    coords = np.array(list(itertools.product(range(N), repeat=d)), dtype=np.int64)
    strides = N ** np.arange(d - 1, -1, -1)

    def shift(off):
        return (((coords + off) % N) * strides).sum(axis=1)

    nbr = np.empty((M, 2 * d), dtype=np.int64)
    for i in range(d):
        e = np.zeros(d, dtype=np.int64)
        e[i] = 1
        nbr[:, 2 * i] = shift(-e)
        nbr[:, 2 * i + 1] = shift(e)
    win = np.column_stack([shift(o) for o in offsets]).astype(np.int64)
    # inverse window: sites q whose window contains p are p - off
    inv = np.column_stack([shift(-o) for o in offsets]).astype(np.int64)
    return coords, nbr, win, inv


def lattice_points(N, d):
    coords = np.array(list(itertools.product(range(N), repeat=d)), dtype=float)
    return coords / N


def discrete_laplacian(phi_vals, nbr, N):
    """Delta^N phi(p) = N^2 sum_q (phi(q) - phi(p))."""
    return N ** 2 * (phi_vals[..., nbr].sum(axis=-1) - nbr.shape[1] * phi_vals)


# ---------------------------------------------------------------- engine

@numba.njit
def _rate_at(eta, win, table, p):
    code = 0
    for i in range(win.shape[1]):
        code += eta[win[p, i]] << i
    return table[code]


@numba.njit
def _bond_term(eta, phi, a, b):
    de = eta[a] - eta[b]
    dp = phi[b] - phi[a]
    return de * de * dp * dp


@numba.njit
def _gk_engine(eta, nbr, win, inv, table, c_max, N2, K, T, phis, lapphis, snap_times,
               seed, exchange_on, flip_on, record_events, max_events, max_iter):
    M = eta.size
    d2 = nbr.shape[1]
    d = d2 // 2
    m = phis.shape[0]
    np.random.seed(seed)
    lam_k = N2 * d * M if exchange_on else 0.0
    lam_g = K * c_max * M if flip_on else 0.0
    lam = lam_k + lam_g
    rate = np.empty(M)
    for p in range(M):
        rate[p] = _rate_at(eta, win, table, p)
    # running sums per test function
    sk = np.zeros(m)
    sg = np.zeros(m)
    bg = np.zeros(m)
    bk = np.zeros(m)
    for j in range(m):
        for p in range(M):
            for i in range(d):
                sk[j] += _bond_term(eta, phis[j], p, nbr[p, 2 * i + 1])
            sg[j] += rate[p] * phis[j, p] ** 2
            bg[j] += rate[p] * (1 - 2 * eta[p]) * phis[j, p]
            bk[j] += eta[p] * lapphis[j, p]
    int_sk = np.zeros(m)
    int_sg = np.zeros(m)
    int_bk = np.zeros(m)
    int_bg = np.zeros(m)
    nsnap = snap_times.size
    snaps = np.zeros((nsnap, M), dtype=np.uint8)
    snap_int = np.zeros((nsnap, 4, m))
    ev_log = np.zeros((max_events if record_events else 0, 4))
    nev = 0
    counts = np.zeros(4, dtype=np.int64)  # exchanges, no-op exchanges, flips, rejected flips
    mark = np.zeros(M, dtype=np.int64)
    stamp = 0
    aff = np.empty(2 * inv.shape[1] + 2, dtype=np.int64)
    chg = np.empty(2, dtype=np.int64)
    t = 0.0
    si = 0
    it = 0
    while it < max_iter:
        it += 1
        tau = np.random.exponential(1.0 / lam) if lam > 0 else 2.0 * T + 1.0
        t_next = t + tau
        while si < nsnap and snap_times[si] <= min(t_next, T):
            dtt = snap_times[si] - t
            for j in range(m):
                snap_int[si, 0, j] = int_sk[j] + sk[j] * dtt
                snap_int[si, 1, j] = int_sg[j] + sg[j] * dtt
                snap_int[si, 2, j] = int_bk[j] + bk[j] * dtt
                snap_int[si, 3, j] = int_bg[j] + bg[j] * dtt
            for p in range(M):
                snaps[si, p] = eta[p]
            si += 1
        if t_next >= T:
            dtt = T - t
            for j in range(m):
                int_sk[j] += sk[j] * dtt
                int_sg[j] += sg[j] * dtt
                int_bk[j] += bk[j] * dtt
                int_bg[j] += bg[j] * dtt
            t = T
            break
        for j in range(m):
            int_sk[j] += sk[j] * tau
            int_sg[j] += sg[j] * tau
            int_bk[j] += bk[j] * tau
            int_bg[j] += bg[j] * tau
        t = t_next
        r = np.random.random() * lam
        changed0 = -1
        changed1 = -1
        if r < lam_k:
            p = np.random.randint(M)
            i = np.random.randint(d)
            q = nbr[p, 2 * i + 1]
            if eta[p] == eta[q]:
                counts[1] += 1
                continue
            counts[0] += 1
            changed0 = p
            changed1 = q
        else:
            p = np.random.randint(M)
            if np.random.random() * c_max >= rate[p]:
                counts[3] += 1
                continue
            counts[2] += 1
            changed0 = p
        # collect affected sites (windows containing a changed site)
        stamp += 1
        na = 0
        chg[0] = changed0
        chg[1] = changed1
        nchg = 1 if changed1 < 0 else 2
        for ci in range(nchg):
            c = chg[ci]
            for k in range(inv.shape[1]):
                s = inv[c, k]
                if mark[s] != stamp:
                    mark[s] = stamp
                    aff[na] = s
                    na += 1
            if mark[c] != stamp:
                mark[c] = stamp
                aff[na] = c
                na += 1
        # remove old contributions
        for j in range(m):
            for a in range(na):
                s = aff[a]
                sg[j] -= rate[s] * phis[j, s] ** 2
                bg[j] -= rate[s] * (1 - 2 * eta[s]) * phis[j, s]
            for ci in range(nchg):
                c = chg[ci]
                bk[j] -= eta[c] * lapphis[j, c]
                for k in range(d2):
                    nb = nbr[c, k]
                    if nb == changed0 and c == changed1:
                        continue
                    sk[j] -= _bond_term(eta, phis[j], c, nb)
        # apply the event
        if changed1 >= 0:
            tmp = eta[changed0]
            eta[changed0] = eta[changed1]
            eta[changed1] = tmp
        else:
            eta[changed0] = 1 - eta[changed0]
        for a in range(na):
            s = aff[a]
            rate[s] = _rate_at(eta, win, table, s)
        for j in range(m):
            for a in range(na):
                s = aff[a]
                sg[j] += rate[s] * phis[j, s] ** 2
                bg[j] += rate[s] * (1 - 2 * eta[s]) * phis[j, s]
            for ci in range(nchg):
                c = chg[ci]
                bk[j] += eta[c] * lapphis[j, c]
                for k in range(d2):
                    nb = nbr[c, k]
                    if nb == changed0 and c == changed1:
                        continue
                    sk[j] += _bond_term(eta, phis[j], c, nb)
        if record_events and nev < max_events:
            ev_log[nev, 0] = t
            ev_log[nev, 1] = changed0
            ev_log[nev, 2] = changed1
            ev_log[nev, 3] = 1.0 if changed1 >= 0 else 0.0
            nev += 1
    integrals = np.zeros((4, m))
    for j in range(m):
        integrals[0, j] = int_sk[j]
        integrals[1, j] = int_sg[j]
        integrals[2, j] = int_bk[j]
        integrals[3, j] = int_bg[j]
    return snaps, snap_int, integrals, counts, ev_log[:nev], t


@dataclass
class LatticeTrajectory:
    """Snapshots of eta plus event counters and integrated diagnostics.

    ``qv_kawasaki[s, j]`` and ``qv_glauber[s, j]`` are the time integrals up to
    snapshot s of the carre du champ of the fluctuation pairing <Phi^N, phi_j>
    (that is N^d times the carre du champ of <rho^N, phi_j>).  ``drift_*`` are
    the time integrals of b_K^N and b_G^N for <rho^N, phi_j>.
    """
    N: int
    d: int
    K: float
    seed: int
    rate_id: str
    times: np.ndarray
    snapshots: np.ndarray
    counts: dict
    qv_kawasaki: np.ndarray = None
    qv_glauber: np.ndarray = None
    drift_kawasaki: np.ndarray = None
    drift_glauber: np.ndarray = None
    events: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def particle_numbers(self):
        return self.snapshots.reshape(self.snapshots.shape[0], -1).sum(axis=1)

    def config(self, s):
        return self.snapshots[s].reshape((self.N,) * self.d)


def _seed_int(seed):
    return int(np.random.SeedSequence(seed).generate_state(1, dtype=np.uint32)[0])


def initial_configuration(N, d, init, rng):
    M = N ** d
    if callable(init):
        pts = lattice_points(N, d)
        dens = np.asarray(init(pts[:, 0] if d == 1 else pts), dtype=float).reshape(M)
        return (rng.random(M) < dens).astype(np.int64)
    arr = np.asarray(init)
    if arr.ndim == 0:
        return (rng.random(M) < float(arr)).astype(np.int64)
    arr = arr.reshape(M)
    if np.all((arr == 0) | (arr == 1)) and arr.dtype.kind in "iub":
        return arr.astype(np.int64).copy()
    return (rng.random(M) < arr).astype(np.int64)


def simulate_gk(rates, N, K, d=1, T=0.01, init=0.5, seed=0, snap_times=None, test_functions=(),
                exchange=True, flips=True, record_events=False, max_events=10 ** 6,
                event_cap=5 * 10 ** 8, max_iter=2 ** 62):
    """Simulate the Glauber-Kawasaki chain on the discrete torus of side N.

    ``init``: a density in [0, 1] (scalar, array or callable on [0,1)^d) sampled
    as a product Bernoulli measure, or an explicit 0/1 configuration.
    ``test_functions``: callables on lattice points x = p / N (x has shape
    (M,) for d=1 and (M, d) otherwise); their diagnostics are integrated.
    """
    if N < 16:
        raise ParticleError("N >= 16 required")
    if rates.d != d:
        raise ParticleError("rate family dimension does not match d")
    if K < 0:
        raise ParticleError("K must be nonnegative")
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    eta = initial_configuration(N, d, init, rng)
    coords, nbr, win, inv = lattice_tables(N, d, rates.offsets)
    M = N ** d
    projected = (N ** 2 * d * M * exchange + K * rates.c_max * M * flips) * T
    if projected > event_cap:
        warnings.warn(f"projected {projected:.3g} candidate events exceeds cap {event_cap:.3g}")
    pts = lattice_points(N, d)
    x = pts[:, 0] if d == 1 else pts
    phis = np.array([np.asarray(f(x), dtype=float).reshape(M) for f in test_functions]).reshape(-1, M)
    lap = discrete_laplacian(phis, nbr, N) if phis.size else phis
    snap_times = np.array([0.0, T] if snap_times is None else snap_times, dtype=float)
    if np.any(np.diff(snap_times) <= 0) or snap_times[0] < 0 or snap_times[-1] > T:
        raise ParticleError("snapshot times must increase within [0, T]")
    snaps, snap_int, integrals, counts, ev, t_end = _gk_engine(
        eta.astype(np.int64), nbr, win, inv, rates.table, rates.c_max, float(N ** 2),
        float(K), float(T), phis, lap, snap_times, _seed_int(seed), bool(exchange), bool(flips),
        bool(record_events), int(max_events), int(max_iter))
    if t_end < T:
        raise ParticleError(f"iteration cap reached at t={t_end:g} < T={T:g}")
    Md = float(M)
    # carre du champ of <Phi, phi> = N^d * carre du champ of <rho, phi>
    qk = snap_int[:, 0, :] * N ** 2 / Md
    qg = snap_int[:, 1, :] * K / Md
    bk = snap_int[:, 2, :] / Md
    bg = snap_int[:, 3, :] * K / Md
    return LatticeTrajectory(
        N=N, d=d, K=K, seed=seed, rate_id=rates.name, times=snap_times, snapshots=snaps,
        counts={"exchange": int(counts[0]), "exchange_noop": int(counts[1]),
                "flip": int(counts[2]), "flip_rejected": int(counts[3])},
        qv_kawasaki=qk, qv_glauber=qg, drift_kawasaki=bk, drift_glauber=bg,
        events=ev if record_events else None,
        meta={"exchange": exchange, "flips": flips, "projected_events": projected})


# ---------------------------------------------------------------- drift and carre du champ

def pairing(eta, phi_vals):
    """<rho^N, phi> = N^{-d} sum_p eta_p phi(p/N)."""
    return float(np.dot(eta.reshape(-1), phi_vals) / eta.size)


def generator_drifts(eta, phi_vals, rates, N, K, d=1):
    """b_K and b_G obtained by applying the generator to <rho^N, phi> event by event."""
    eta = np.asarray(eta, dtype=np.int64).reshape(-1)
    _, nbr, win, _ = lattice_tables(N, d, rates.offsets)
    M = eta.size
    base = pairing(eta, phi_vals)
    bK = 0.0
    for p in range(M):
        for k in range(2 * d):
            q = nbr[p, k]
            e2 = eta.copy()
            e2[p], e2[q] = eta[q], eta[p]
            bK += 0.5 * (pairing(e2, phi_vals) - base)
    bK *= N ** 2
    bG = 0.0
    for p in range(M):
        e2 = eta.copy()
        e2[p] = 1 - eta[p]
        code = int(np.dot(eta[win[p]], 1 << np.arange(win.shape[1])))
        bG += rates.table[code] * (pairing(e2, phi_vals) - base)
    return bK, K * bG


def closed_form_drifts(eta, phi_vals, rates, N, K, d=1):
    """<rho^N, Delta^N phi> and (K / N^d) sum_p cbar_p phi(p/N)."""
    eta = np.asarray(eta, dtype=np.int64).reshape(-1)
    _, nbr, win, _ = lattice_tables(N, d, rates.offsets)
    lap = discrete_laplacian(phi_vals, nbr, N)
    codes = (eta[win] << np.arange(win.shape[1])).sum(axis=1)
    cbar = rates.table[codes] * (1 - 2 * eta)
    return pairing(eta, lap), K * float(np.dot(cbar, phi_vals)) / eta.size


def carre_du_champ(eta, phi_vals, rates, N, K, d=1):
    """(Gamma_K, Gamma_G) of <rho^N, phi> from the closed forms."""
    eta = np.asarray(eta, dtype=np.int64).reshape(-1)
    _, nbr, win, _ = lattice_tables(N, d, rates.offsets)
    M = eta.size
    de = eta[:, None] - eta[nbr]
    dp = phi_vals[nbr] - phi_vals[:, None]
    gK = N ** 2 / (2.0 * M ** 2) * float(np.sum(de ** 2 * dp ** 2))
    codes = (eta[win] << np.arange(win.shape[1])).sum(axis=1)
    gG = K / M ** 2 * float(np.dot(rates.table[codes], phi_vals ** 2))
    return gK, gG


def generator_carre_du_champ(eta, phi_vals, rates, N, K, d=1):
    """Gamma = L <rho,phi>^2 - 2 <rho,phi> L <rho,phi>, by enumerating transitions."""
    eta = np.asarray(eta, dtype=np.int64).reshape(-1)
    _, nbr, win, _ = lattice_tables(N, d, rates.offsets)
    base = pairing(eta, phi_vals)
    gK = 0.0
    for p in range(eta.size):
        for k in range(2 * d):
            q = nbr[p, k]
            e2 = eta.copy()
            e2[p], e2[q] = eta[q], eta[p]
            gK += 0.5 * (pairing(e2, phi_vals) - base) ** 2
    gG = 0.0
    for p in range(eta.size):
        e2 = eta.copy()
        e2[p] = 1 - eta[p]
        code = int(np.dot(eta[win[p]], 1 << np.arange(win.shape[1])))
        gG += rates.table[code] * (pairing(e2, phi_vals) - base) ** 2
    return N ** 2 * gK, K * gG


# ---------------------------------------------------------------- fields

def default_block(N):
    """Largest divisor of N not exceeding sqrt(N)."""
    b = int(np.floor(np.sqrt(N)))
    while N % b:
        b -= 1
    return b


def empirical_density(eta, block=1):
    """Block-averaged occupation field on the coarse grid of side N / block."""
    eta = np.asarray(eta, dtype=float)
    N = eta.shape[0]
    if N % block:
        raise ParticleError("block must divide N")
    nb = N // block
    shape = []
    for _ in range(eta.ndim):
        shape += [nb, block]
    return eta.reshape(shape).mean(axis=tuple(range(1, 2 * eta.ndim, 2)))


def fluctuation_field(traj, u, block=None):
    """Phi^N = N^{d/2} (rho_block - u_block) for each snapshot.

    ``u`` is a callable on [0, 1) (d = 1; extended constantly in the other
    coordinate for d = 2) or an array of u on the lattice.
    """
    from .spde import FieldSeries

    N, d = traj.N, traj.d
    block = block or default_block(N)
    if callable(u):
        x = np.arange(N) / N
        ul = np.asarray(u(x), dtype=float)
        if d == 2:
            ul = np.broadcast_to(ul[:, None], (N, N))
    else:
        ul = np.asarray(u, dtype=float).reshape((N,) * d)
    ub = empirical_density(ul, block)
    data = np.array([N ** (d / 2) * (empirical_density(traj.config(s), block) - ub)
                     for s in range(traj.times.size)])
    grid = {"domain": "torus", "d": d, "nx": N // block, "dx": block / N, "block": block}
    return FieldSeries(traj.times, data[:, None], grid, "Phi",
                       {"N": N, "K": traj.K, "seed": traj.seed})


def boltzmann_gibbs_residual(eta, u_vals, rates, N, K, n=3, block=None):
    """Block-wise gap between the measured Glauber drift of Phi and K F_n(u, Phi).

    Returns the root-mean-square residual over blocks.  A diagnostic only.
    """
    eta = np.asarray(eta, dtype=np.int64).reshape(-1)
    d = rates.d
    block = block or default_block(N)
    _, _, win, _ = lattice_tables(N, d, rates.offsets)
    codes = (eta[win] << np.arange(win.shape[1])).sum(axis=1)
    cbar = (rates.table[codes] * (1 - 2 * eta)).reshape((N,) * d)
    f = rates.reaction()
    u_vals = np.asarray(u_vals, dtype=float).reshape((N,) * d)
    ub = empirical_density(u_vals, block)
    phi = N ** (d / 2) * (empirical_density(eta.reshape((N,) * d), block) - ub)
    measured = K * N ** (d / 2) * (empirical_density(cbar, block) - f.f(ub))
    model = K * f.taylor_drift(ub, phi, n=n, N=N, d=d)
    return float(np.sqrt(np.mean((measured - model) ** 2)))


# ---------------------------------------------------------------- run file

_MAGIC = b"GKTRAJ01"
_HEADER = struct.Struct("<8sIIdQ32sI")


def write_trajectory(path, traj):
    """Binary run file: header (N, d, K, seed, rate id, count), then per
    snapshot a float64 time and the bit-packed configuration."""
    rid = traj.rate_id.encode()[:32].ljust(32, b"\0")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, traj.N, traj.d, float(traj.K), int(traj.seed) & (2 ** 64 - 1),
                              rid, traj.times.size))
        for t, snap in zip(traj.times, traj.snapshots):
            fh.write(struct.pack("<d", float(t)))
            fh.write(np.packbits(snap.astype(np.uint8)).tobytes())


def read_trajectory(path):
    """Inverse of write_trajectory; returns a LatticeTrajectory without diagnostics."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, N, d, K, seed, rid, count = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ParticleError("not a trajectory file")
    M = N ** d
    nbytes = (M + 7) // 8
    off = _HEADER.size
    times, snaps = [], []
    for _ in range(count):
        times.append(struct.unpack_from("<d", raw, off)[0])
        off += 8
        bits = np.frombuffer(raw, dtype=np.uint8, count=nbytes, offset=off)
        snaps.append(np.unpackbits(bits)[:M])
        off += nbytes
    return LatticeTrajectory(N=N, d=d, K=K, seed=seed, rate_id=rid.rstrip(b"\0").decode(),
                             times=np.array(times), snapshots=np.array(snaps, dtype=np.uint8),
                             counts={})


def trajectory_to_csv(path_in, path_out, block=None):
    """Emit block-averaged density fields as CSV rows: t, cell index, density."""
    traj = read_trajectory(path_in)
    block = block or default_block(traj.N)
    rows = []
    for s, t in enumerate(traj.times):
        rho = empirical_density(traj.config(s), block).reshape(-1)
        rows.append(np.column_stack([np.full(rho.size, t), np.arange(rho.size), rho]))
    np.savetxt(path_out, np.vstack(rows), delimiter=",", header="t,cell,density", comments="",
               fmt=["%.10g", "%d", "%.10g"])
    return traj
