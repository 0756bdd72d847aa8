import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerfluct import spde
from layerfluct.constants import sigma_sq
from layerfluct.reaction import constant_amplitudes, make_cubic


def test_path_generators_reproducible_and_prefix_stable():
    a = [g.standard_normal(3) for g in spde.path_generators(5, 2)]
    b = [g.standard_normal(3) for g in spde.path_generators(5, 4)]
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert not np.array_equal(a[0], a[1])


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        spde.NoiseSpec(kind="pink")
    with pytest.raises(ValueError):
        spde.NoiseSpec(kind="regularized")
    with pytest.raises(spde.SPDEError):
        spde.NoiseSpec(kind="regularized", kernel=np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(spde.SPDEError):
        spde.NoiseSpec(kind="regularized", kernel=np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_white_noise_variance():
    rng = np.random.default_rng(0)
    x = spde.sample_noise(spde.NoiseSpec(channels=1), (50000,), 0.01, 1e-3, rng)
    assert x.var() == pytest.approx(0.1, rel=0.03)


def test_kernel_noise_covariance():
    pts = np.linspace(0, 1, 6, endpoint=False)
    Q = spde.kernel_table(lambda x, y: np.exp(-((x - y) ** 2) * 4), pts)
    spec = spde.NoiseSpec(kind="regularized", channels=1, kernel=Q)
    rng = np.random.default_rng(1)
    X = np.array([spde.sample_noise(spec, (6,), 1.0, 0.5, rng)[0] for _ in range(40000)])
    assert np.allclose(np.cov(X.T), 0.5 * Q, atol=0.02)


def test_fourier_cutoff_removes_high_modes():
    spec = spde.NoiseSpec(kind="regularized", channels=1, cutoff=3)
    x = spde.sample_noise(spec, (64,), 1 / 64, 1.0, np.random.default_rng(2))[0]
    X = np.fft.rfft(x)
    assert np.all(np.abs(X[4:]) < 1e-10) and np.any(np.abs(X[1:4]) > 0)


def test_rescale_kernel():
    Q = lambda x, y: np.exp(-np.abs(x - y))
    R = spde.rescale_kernel(Q, 100.0)
    assert R(10.0, 0.0) == pytest.approx(Q(1.0, 0.0))


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=64))
def test_divergence_conserves_mass(vals):
    F = np.array(vals)
    assert abs(spde.conservative_mass_increment(np.ones_like(F), F, 0.1)) < 1e-9 * (1 + np.abs(F).sum())


def test_field_series_conversion_roundtrip():
    s = spde.FieldSeries(np.array([0.0, 1.0]), np.ones((2, 1, 4)), {}, "Psi", {"K": 16.0})
    t = s.to_psi_tilde()
    assert np.allclose(t.data, 8.0)
    assert np.allclose(t.to_psi().data, 1.0)
    with pytest.raises(spde.SPDEError):
        spde.FieldSeries(np.array([1.0, 0.0]), np.ones((2, 1, 4)), {}, "Psi")


def test_field_series_csv(tmp_path):
    s = spde.FieldSeries(np.array([0.0, 0.5]), np.arange(8.0).reshape(2, 1, 4), {}, "Phi")
    p = tmp_path / "s.csv"
    s.to_csv(p)
    d = np.loadtxt(p, delimiter=",", skiprows=1)
    assert d.shape == (8, 3) and d[-1, 2] == 7.0


def test_limit_interface_d1_variance():
    c = np.sqrt(1.4)
    S = spde.integrate_limit_interface(c, 0.0, d=1, T=1.0, dt=0.01, seed=3, paths=4000, every=100)
    v = S.data[-1].var(ddof=1)
    se = v * np.sqrt(2 / 3999)
    assert abs(v - 1.4) < 4 * se


def test_limit_interface_rejects_d3():
    with pytest.raises(spde.SPDEError):
        spde.integrate_limit_interface(1.0, d=3)


def test_offsite_matches_scheme_oracle():
    K, c = 400.0, 2.0
    O = spde.integrate_offsite(K, c, 1.0, 1.0, T=0.5, dt=0.25, seed=4, paths=4000, n=64)
    X = O.data[-1]
    for lag in (0, 1, 3):
        exact = spde.offsite_discrete_covariance(K, c, 1.0, 1.0, 64, t=0.5, lag=lag)
        per_path = np.mean(X * np.roll(X, -lag, axis=1), axis=1)
        se = per_path.std(ddof=1) / np.sqrt(per_path.size)
        assert abs(per_path.mean() - exact) < 4 * se


def test_offsite_variance_converges_in_grid():
    # flip channel only: second-order convergence to amp^2 / (4 sqrt c) as the grid refines
    vals = [spde.offsite_discrete_covariance(1600.0, 2.0, 0.0, 1.0, n) for n in (256, 512, 1024)]
    errs = np.abs(np.array(vals) / sigma_sq(2.0) - 1)
    assert errs[0] > errs[1] > errs[2]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_offsite_path_prefix_stable():
    a = spde.integrate_offsite(100.0, 1.0, T=0.2, dt=0.1, seed=9, paths=1, n=32)
    b = spde.integrate_offsite(100.0, 1.0, T=0.2, dt=0.1, seed=9, paths=3, n=32)
    assert np.array_equal(a.data[:, 0], b.data[:, 0])


def test_density_spde_conserves_mass_without_flips():
    u = np.tanh(np.sin(2 * np.pi * np.arange(64) / 64))
    S = spde.integrate_density_spde(make_cubic(), u, N=100, K=0.0, T=0.01, dt=1e-4, paths=3,
                                    seed=1)
    assert np.max(np.abs(S.data.sum(axis=-1))) < 1e-9


def test_density_spde_stability_and_guard():
    u = np.zeros(32)
    with pytest.raises(spde.SPDEError):
        spde.integrate_density_spde(make_cubic(), u, N=10, K=1e6, T=0.01, dt=1e-3)
    S = spde.integrate_density_spde(make_cubic(), u, N=10, K=1.0, T=0.01, dt=1e-3, guard=1e-6,
                                    seed=0)
    assert S.aborted and "abort" in S.meta


def test_density_spde_d2_shapes():
    u = np.zeros(16)
    S = spde.integrate_density_spde(make_cubic(), u, N=10, K=1.0, T=0.002, dt=1e-3, d=2, n_ux=8,
                                    paths=2, every=1)
    assert S.data.shape == (3, 2, 8, 16) and S.finite()


@pytest.fixture(scope="module")
def profile400():
    from layerfluct.profile import solve_periodic_profile
    return solve_periodic_profile(make_cubic(), 400.0, n=256)


def test_stretched_common_random_numbers(profile400):
    # in d = 1 the cross channel does not exist, so switching it must change nothing
    a = spde.integrate_stretched_spde(profile400, T=0.05, dt=0.01, paths=2, seed=3)
    b = spde.integrate_stretched_spde(profile400, T=0.05, dt=0.01, paths=2, seed=3,
                                      channels=("grad", "flip"))
    assert np.array_equal(a.data, b.data)


def test_stretched_noise_is_conservative(profile400):
    I = spde.StretchedIntegrator(profile400, d=1, amplitudes=constant_amplitudes(1.0, 0.0))
    dW = np.random.default_rng(0).standard_normal((2, 3) + I.shape)
    assert np.max(np.abs(I.noise_field(dW).sum(axis=-1))) < 1e-9


def test_stretched_nonlinear_guard(profile400):
    I = spde.StretchedIntegrator(profile400, d=1, N=1.0, nonlinear=True)
    S = I.run(0.05, 0.01, paths=1, seed=0, psi0=5.0, guard=10.0)
    assert S.aborted
