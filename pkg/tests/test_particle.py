import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerfluct import particle as pt


@pytest.fixture(scope="module")
def bistable():
    return pt.bistable_rates()


@given(u=st.floats(0.0, 1.0))
def test_bistable_ensemble_reaction(u):
    fam = pt.bistable_rates(8.0)
    # (1 - 2u)(1 - 8 u (1 - u))
    assert fam.ensemble_f(u) == pytest.approx((1 - 2 * u) * (1 - 8 * u * (1 - u)), abs=1e-12)
    assert fam.reaction().f(u) == pytest.approx(fam.ensemble_f(u), abs=1e-12)
    c0 = (1 - u) * (1 + 8 * u * u) + u * (1 + 8 * (1 - u) ** 2)
    assert fam.ensemble_c0(u) == pytest.approx(c0, abs=1e-12)


def test_bistable_zeros(bistable):
    f = bistable.reaction()
    assert f.zeros == pytest.approx((0.5 - np.sqrt(2) / 4, 0.5, 0.5 + np.sqrt(2) / 4), abs=1e-12)
    assert f.is_balanced()


@given(a=st.floats(0.0, 3.0), u=st.floats(0.0, 1.0))
def test_linear_rates_moments(a, u):
    fam = pt.linear_neighbor_rates(a)
    # independent site: E[c (1 - 2 eta)] = (1 + 2 a u)(1 - 2u)
    assert fam.ensemble_f(u) == pytest.approx((1 + 2 * a * u) * (1 - 2 * u), abs=1e-12)


def test_rate_family_validation():
    with pytest.raises(pt.ParticleError):
        pt.bistable_rates(3.0)
    with pytest.raises(pt.ParticleError):
        pt.FlipRateFamily([[1]], [1.0, 1.0])
    with pytest.raises(pt.ParticleError):
        pt.FlipRateFamily([[0]], [1.0, -1.0])
    with pytest.raises(pt.ParticleError):
        pt.rate_family_from_id("bistable", d=2)
    assert pt.rate_family_from_id("constant", d=2).d == 2


def test_lattice_tables_2d():
    coords, nbr, win, inv = pt.lattice_tables(4, 2, pt._nn_offsets(2))
    assert nbr.shape == (16, 4)
    # every site is a neighbor of exactly 4 sites
    assert np.all(np.bincount(nbr.ravel(), minlength=16) == 4)
    lap = pt.discrete_laplacian(np.ones((1, 16)), nbr, 4)
    assert np.allclose(lap, 0.0)


def test_simulation_reproducible(bistable):
    phi = lambda x: np.cos(2 * np.pi * x)
    a = pt.simulate_gk(bistable, 32, 2.0, T=0.01, seed=4, test_functions=[phi])
    b = pt.simulate_gk(bistable, 32, 2.0, T=0.01, seed=4, test_functions=[phi])
    assert np.array_equal(a.snapshots, b.snapshots)
    assert np.array_equal(a.qv_kawasaki, b.qv_kawasaki)
    c = pt.simulate_gk(bistable, 32, 2.0, T=0.01, seed=5, test_functions=[phi])
    assert not np.array_equal(a.snapshots, c.snapshots)


@given(seed=st.integers(0, 2 ** 32))
def test_kawasaki_only_conserves_mass(seed):
    fam = pt.bistable_rates()
    tr = pt.simulate_gk(fam, 24, 5.0, T=0.01, seed=seed, flips=False,
                        snap_times=np.linspace(0, 0.01, 4))
    n = tr.particle_numbers()
    assert np.all(n == n[0])
    assert tr.counts["flip"] == 0


def test_glauber_only_keeps_exchanges_off(bistable):
    tr = pt.simulate_gk(bistable, 16, 5.0, T=0.05, seed=1, exchange=False)
    assert tr.counts["exchange"] == 0 and tr.counts["flip"] > 0


@given(seed=st.integers(0, 10 ** 6))
def test_carre_du_champ_closed_form(seed):
    fam = pt.bistable_rates()
    rng = np.random.default_rng(seed)
    N = 16
    eta = (rng.random(N) < 0.5).astype(np.int64)
    phi = rng.normal(size=N)
    a = pt.generator_carre_du_champ(eta, phi, fam, N, 3.0)
    b = pt.carre_du_champ(eta, phi, fam, N, 3.0)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-14)
    a = pt.generator_drifts(eta, phi, fam, N, 3.0)
    b = pt.closed_form_drifts(eta, phi, fam, N, 3.0)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-14)


def test_carre_du_champ_2d():
    fam = pt.linear_neighbor_rates(0.5, d=2)
    rng = np.random.default_rng(0)
    N = 16
    eta = (rng.random(N * N) < 0.4).astype(np.int64)
    phi = rng.normal(size=N * N)
    assert pt.generator_carre_du_champ(eta, phi, fam, N, 2.0, d=2) == pytest.approx(
        pt.carre_du_champ(eta, phi, fam, N, 2.0, d=2), rel=1e-12)


def test_dynkin_martingale_moments(bistable):
    # M = <rho_t, phi> - <rho_0, phi> - int b has mean zero and E M^2 = E int Gamma
    N, K, T = 32, 4.0, 0.05
    phi = lambda x: np.sin(2 * np.pi * x)
    ph = phi(np.arange(N) / N)
    Ms, Qs = [], []
    for s in range(300):
        tr = pt.simulate_gk(bistable, N, K, T=T, init=0.5, seed=1000 + s, test_functions=[phi])
        dp = pt.pairing(tr.snapshots[-1], ph) - pt.pairing(tr.snapshots[0], ph)
        Ms.append(dp - tr.drift_kawasaki[-1, 0] - tr.drift_glauber[-1, 0])
        Qs.append((tr.qv_kawasaki[-1, 0] + tr.qv_glauber[-1, 0]) / N)
    Ms, Qs = np.array(Ms), np.array(Qs)
    assert abs(Ms.mean()) < 4 * Ms.std() / np.sqrt(Ms.size)
    m2 = Ms ** 2
    assert abs(m2.mean() - Qs.mean()) < 4 * m2.std() / np.sqrt(m2.size)


def test_trajectory_roundtrip(tmp_path, bistable):
    tr = pt.simulate_gk(bistable, 40, 1.0, T=0.01, seed=2, snap_times=[0.0, 0.005, 0.01])
    p = tmp_path / "run.bin"
    pt.write_trajectory(p, tr)
    back = pt.read_trajectory(p)
    assert back.N == 40 and back.K == 1.0 and back.seed == 2 and back.rate_id == tr.rate_id
    assert np.array_equal(back.times, tr.times)
    assert np.array_equal(back.snapshots, tr.snapshots)
    q = tmp_path / "run.csv"
    pt.trajectory_to_csv(p, q, block=4)
    rows = np.loadtxt(q, delimiter=",", skiprows=1)
    assert rows.shape == (30, 3)
    with pytest.raises(pt.ParticleError):
        (tmp_path / "bad.bin").write_bytes(b"x" * 100)
        pt.read_trajectory(tmp_path / "bad.bin")


@given(N=st.integers(16, 5000))
def test_default_block(N):
    b = pt.default_block(N)
    assert N % b == 0 and b * b <= N


def test_empirical_density_and_field(bistable):
    eta = np.array([1, 0, 1, 1] * 4)
    assert np.allclose(pt.empirical_density(eta, 4), 0.75)
    tr = pt.simulate_gk(bistable, 64, 1.0, T=0.001, seed=1)
    F = pt.fluctuation_field(tr, lambda x: 0.5 + 0 * x)
    assert F.data.shape == (2, 1, 8)
    assert F.data[0, 0] == pytest.approx(8 * (pt.empirical_density(tr.config(0), 8) - 0.5))


def test_boltzmann_gibbs_residual_finite(bistable):
    rng = np.random.default_rng(0)
    eta = (rng.random(256) < 0.5).astype(np.int64)
    r = pt.boltzmann_gibbs_residual(eta, np.full(256, 0.5), bistable, 256, 4.0)
    assert np.isfinite(r)


def test_input_validation(bistable):
    with pytest.raises(pt.ParticleError):
        pt.simulate_gk(bistable, 8, 1.0)
    with pytest.raises(pt.ParticleError):
        pt.simulate_gk(bistable, 16, -1.0)
    with pytest.raises(pt.ParticleError):
        pt.simulate_gk(bistable, 16, 1.0, T=0.01, snap_times=[0.0, 0.02])
