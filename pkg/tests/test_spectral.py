import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerfluct import spectral
from layerfluct.profile import solve_periodic_profile, solve_traveling_wave
from layerfluct.reaction import make_tilted_cubic


@given(a=st.floats(0.1, 0.4), w=st.floats(0.05, 0.3), kind=st.sampled_from(["smooth", "cosine", "linear"]))
def test_cutoff_range_and_support(a, w, kind):
    x = np.linspace(0, 1, 2001, endpoint=False)
    b = a + 0.5
    m = min(w, 0.2)
    g = spectral.cutoff(x, a, b, m, kind)
    assert np.all((g >= 0) & (g <= 1))
    inside = (x >= a + m) & (x <= b - m)
    outside = (x <= a) | (x >= b)
    assert np.all(g[inside] == 1)
    assert np.all(g[outside] == 0)


def test_heat_kernel_mass_and_flow():
    x = np.arange(256) / 256
    k = spectral.heat_kernel_torus(0.01, x, 0.3)
    assert np.sum(k) / 256 == pytest.approx(1.0, abs=1e-10)
    # e^{t Delta} of a Fourier mode
    f = np.cos(2 * np.pi * 3 * x)
    out = spectral.heat_flow_torus(f, 0.01)
    assert np.allclose(out, np.exp(-0.01 * (6 * np.pi) ** 2) * f, atol=1e-12)


@pytest.fixture(scope="module")
def dec100(profile100):
    return spectral.eigenpairs(profile100, k=5, n=1024)


def test_slow_modes(dec100):
    lam = dec100.by_mode()
    assert abs(lam[0]) < 1e-8
    assert dec100.alignment > 0.9999
    # two layers on the torus: the interaction eigenvalue is negative and small
    assert -0.1 < lam[1] < -0.05
    assert lam[2] > 1.0
    assert np.all(np.diff(dec100.values) >= 0)


def test_eigenvectors_orthonormal(dec100):
    G = dec100.dx * dec100.vectors.T @ dec100.vectors
    assert np.allclose(G, np.eye(G.shape[0]), atol=1e-8)


def test_interaction_mode_is_even(dec100):
    # translation ~ v_x (odd about the layers), interaction ~ |v_x|
    ui = dec100.vectors[:, dec100.interaction]
    corr = dec100.dx * np.abs(ui) @ np.abs(ui)
    # overlap approaches 1 as K grows; 0.9875 at K = 100
    assert abs(dec100.dx * ui @ np.abs(dec100.vectors[:, dec100.translation])) > 0.98 * corr


def test_eigen_solver_routes_agree(profile100):
    a = spectral.eigenpairs(profile100, k=4, n=1024, dense_limit=4096)
    b = spectral.eigenpairs(profile100, k=4, n=1024, dense_limit=100)
    assert np.allclose(a.by_mode(), b.by_mode(), atol=1e-9)


def test_resolution_guard(profile100):
    with pytest.raises(spectral.SpectralError):
        spectral.eigenpairs(profile100, k=3, n=8)


def test_quadratic_form_matches_matrix(profile100):
    x, v, vx, _ = spectral.discrete_equilibrium(profile100, 512)
    dx = 1 / 512
    M = spectral.torus_matrix(v, 100.0, profile100.reaction, dx)
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 512))
    assert spectral.quadratic_form(a, b, v, 100.0, profile100.reaction, dx) == pytest.approx(
        dx * a @ (M @ b), rel=1e-10)


def test_discrete_equilibrium_polishes(profile100):
    _, _, _, hist = spectral.discrete_equilibrium(profile100, 1024)
    assert hist[-1] < 1e-9 < hist[0]


@pytest.fixture(scope="module")
def semigroup(profile100):
    return spectral.StretchedSemigroup(profile100, 512)


def test_semigroup_identity_and_composition(semigroup):
    z = semigroup.z
    G = np.exp(-(z - 1) ** 2)
    assert np.array_equal(semigroup.apply(G, 0.0), G)
    a = semigroup.apply(semigroup.apply(G, 0.3), 0.2)
    b = semigroup.apply(G, 0.5)
    assert np.allclose(a, b, atol=1e-9 * np.max(np.abs(b)))


@given(seed=st.integers(0, 10 ** 6), t=st.floats(0.01, 1.0))
def test_semigroup_growth_bound(semigroup, seed, t):
    # contraction fails for two layers; the norm is bounded by e^{tK|lambda_interaction|}
    G = np.random.default_rng(seed).normal(size=semigroup.z.size)
    out = semigroup.apply(G, t)
    assert np.linalg.norm(out) <= semigroup.growth_bound(t) * np.linalg.norm(G) * (1 + 1e-9)


def test_semigroup_growth_exceeds_one(semigroup):
    assert semigroup.growth_bound(1.0) > 1.0


def test_tau_projection_idempotent(profile100):
    x, v, vx, _ = spectral.discrete_equilibrium(profile100, 512)
    taus = spectral.tau_functions(profile100, x, vx)
    w = np.sin(2 * np.pi * x) + x ** 2
    p1 = spectral.projection_tau(w, taus, 1 / 512)
    p2 = spectral.projection_tau(p1, taus, 1 / 512)
    assert np.allclose(p1, p2, atol=1e-12)
    assert np.allclose(1 / 512 * taus.T @ taus, np.eye(2), atol=1e-12)


def test_limit_direction_normalized(wave):
    z = np.arange(-20, 20, 0.01)
    e = spectral.limit_direction(wave, z)
    assert 0.01 * e @ e == pytest.approx(1.0, abs=1e-6)
    c, field = spectral.projection_limit(3 * e, z, e)
    assert c == pytest.approx(3.0, abs=1e-5)


@pytest.fixture(scope="module")
def tilted_wave():
    return solve_traveling_wave(make_tilted_cubic(0.2))


@given(a=st.floats(-3, 3), b=st.floats(0.1, 3), s=st.floats(-2, 2))
def test_wave_operator_weighted_symmetry(tilted_wave, a, b, s):
    z = np.arange(-10, 10, 0.02)
    u = np.exp(-(z - a) ** 2)
    w = np.sin(b * z + s) * np.exp(-z ** 2 / 4)
    assert spectral.weighted_symmetry_residual(tilted_wave, u, w, z) < 1e-9


def test_wave_operator_kernel(tilted_wave):
    assert spectral.null_residual(tilted_wave) < 1e-6


def test_tau_projection_insensitive_to_mollifier(cubic):
    # the cutoff shape only matters where v_x is exponentially small
    rel = {}
    for K in (400.0, 1600.0):
        p = solve_periodic_profile(cubic, K)
        x, v, vx, _ = spectral.discrete_equilibrium(p)
        w = np.cos(2 * np.pi * x) + 0.3 * np.sin(4 * np.pi * x)
        dx = 1 / x.size
        proj = {k: spectral.projection_tau(w, spectral.tau_functions(p, x, vx, k), dx)
                for k in ("smooth", "cosine", "linear")}
        ref = np.linalg.norm(proj["smooth"])
        rel[K] = max(np.linalg.norm(proj[k] - proj["smooth"]) / ref for k in ("cosine", "linear"))
    assert rel[400.0] < 5e-3
    assert rel[1600.0] < 1e-2 * rel[400.0]
