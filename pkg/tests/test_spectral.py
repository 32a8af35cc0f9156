import math

import numpy as np
import pytest
from scipy.linalg import expm

from rdblow.errors import ConfigurationError, DomainError
from rdblow.spectral import (DomainSpec, apply_semigroup, basis_to_csv, build_basis,
                             fit_kernel_bound, heat_kernel_matrix, integrate,
                             principal_mode, semigroup_decay_bound,
                             semigroup_sup_norm, semigroup_sup_norm_profile)

PI2 = math.pi ** 2


@pytest.fixture(scope="module")
def unit_basis():
    return build_basis(DomainSpec.interval(1.0, 200), 100)


def test_interval_eigenvalues(unit_basis):
    assert unit_basis.lambda1 == pytest.approx(PI2, rel=1e-15)
    assert unit_basis.lambda2 == pytest.approx(4 * PI2, rel=1e-15)
    assert unit_basis.second_gap == pytest.approx(3 * PI2, rel=1e-14)


def test_phi_normalization_and_sup(unit_basis):
    assert integrate(unit_basis, unit_basis.phi) == pytest.approx(1.0, abs=1e-10)
    # grid-quadrature oracle: phi_sup = 1 / trapz(sin(pi x))
    x = np.linspace(0, 1, 201)
    w = np.full(201, 1 / 200); w[0] = w[-1] = 0.5 / 200
    oracle = 1.0 / float(np.sin(np.pi * x) @ w)
    assert unit_basis.phi_sup == pytest.approx(oracle, rel=1e-14)
    assert unit_basis.phi_sup == pytest.approx(math.pi / 2, rel=1e-3)


def test_rectangle_eigenvalues():
    basis = build_basis(DomainSpec.rectangle(1.0, 1.0, 32, 32), 12)
    assert basis.lambda1 == pytest.approx(2 * PI2, rel=1e-15)
    assert np.all(np.diff(basis.eigenvalues) >= 0)
    assert integrate(basis, basis.phi) == pytest.approx(1.0, abs=1e-10)


def test_n_modes_validation():
    with pytest.raises(ConfigurationError):
        build_basis(DomainSpec.interval(1.0, 16), 16)
    with pytest.raises(ConfigurationError):
        build_basis(DomainSpec.interval(1.0, 16), 0)


def test_eigen_residual_order():
    # discrete Laplacian applied to phi vs lambda1*phi: second-order decay
    errs = {}
    for n in (100, 200):
        basis = build_basis(DomainSpec.interval(1.0, n), 8)
        phi = basis.phi
        dx = 1.0 / n
        lap = (phi[:-2] - 2 * phi[1:-1] + phi[2:]) / dx ** 2
        resid = np.max(np.abs(-lap - basis.lambda1 * phi[1:-1])) / basis.phi_sup
        errs[n] = resid
    order = math.log2(errs[100] / errs[200])
    assert order >= 1.9


def test_semigroup_eigen_identity(unit_basis):
    for t in (0.01, 0.1, 1.0):
        out = apply_semigroup(unit_basis, unit_basis.phi, t)
        rel = np.max(np.abs(out - math.exp(-unit_basis.lambda1 * t) * unit_basis.phi))
        rel /= unit_basis.phi_sup
        assert rel <= 1e-8


def test_semigroup_identity_at_zero(unit_basis):
    f = np.random.default_rng(0).random(201)
    f[0] = f[-1] = 0.0
    out = apply_semigroup(unit_basis, f, 0.0)
    assert np.array_equal(out, f)
    with pytest.raises(DomainError):
        apply_semigroup(unit_basis, f, -0.1)


def test_semigroup_linearity_on_modes(unit_basis):
    e1, e2 = unit_basis.eigenfunctions[0], unit_basis.eigenfunctions[1]
    l1, l2 = unit_basis.eigenvalues[:2]
    out = apply_semigroup(unit_basis, e1 + e2, 1.0)
    expected = math.exp(-l1) * e1 + math.exp(-l2) * e2
    assert np.max(np.abs(out - expected)) <= 1e-12


def test_semigroup_property_and_positivity(unit_basis):
    f = np.abs(np.sin(3 * np.pi * unit_basis.nodes[:, 0]))
    f[0] = f[-1] = 0.0
    two = apply_semigroup(unit_basis, apply_semigroup(unit_basis, f, 0.05), 0.03)
    one = apply_semigroup(unit_basis, f, 0.08)
    assert np.max(np.abs(two - one)) <= 1e-10
    assert apply_semigroup(unit_basis, f, 0.2).min() >= -1e-12


def test_semigroup_submarkov(unit_basis):
    ones = np.ones(201)
    ones[0] = ones[-1] = 0.0
    for t in (0.001, 0.05, 0.5):
        out = apply_semigroup(unit_basis, ones, t)
        assert out.max() <= 1.0 + 1e-8
        assert out.min() >= -1e-8


def test_sup_norm_trivial_and_leading_mode(unit_basis):
    assert semigroup_sup_norm(unit_basis, 0.0, 0.0) == 1.0
    val = semigroup_sup_norm(unit_basis, 0.0, 1.0)
    lead = 4 / math.pi * math.exp(-PI2)
    assert val == pytest.approx(lead, rel=1e-4)


def test_sup_norm_against_dense_matrix_exponential():
    # oracle: dense expm of the finite-difference Dirichlet Laplacian
    n = 200
    basis = build_basis(DomainSpec.interval(1.0, n), n - 1)
    dx = 1.0 / n
    main = np.full(n - 1, -2.0)
    a = (np.diag(main) + np.diag(np.ones(n - 2), 1) + np.diag(np.ones(n - 2), -1))
    a /= dx ** 2
    for t in (0.05, 0.2, 1.0):
        dense = expm(a * t) @ np.ones(n - 1)
        oracle = dense.max()
        val = semigroup_sup_norm(basis, 0.0, t)
        assert val == pytest.approx(oracle, rel=1e-2)


def test_sup_norm_gamma_cancellation(unit_basis):
    # gamma = lambda1 cancels the leading decay: profile stays bounded
    ts = np.linspace(1.0, 30.0, 10)
    vals = semigroup_sup_norm_profile(unit_basis, unit_basis.lambda1, ts)
    assert np.all(vals <= 4 / math.pi + 1e-9)
    assert np.all(vals > 0)


def test_sup_norm_decay_rate_band(unit_basis):
    # beyond t = 3/lambda1 the decay tracks exp(-lambda1 t) within factor 2
    t0, t1 = 3.0 / unit_basis.lambda1, 6.0 / unit_basis.lambda1
    v0, v1 = semigroup_sup_norm_profile(unit_basis, 0.0, np.array([t0, t1]))
    observed = v1 / v0
    expected = math.exp(-unit_basis.lambda1 * (t1 - t0))
    assert expected / 2 <= observed <= expected * 2


def test_heat_kernel_symmetry(unit_basis):
    idx = [20, 60, 100, 140, 180]
    p = heat_kernel_matrix(unit_basis, 0.3, idx)
    assert np.array_equal(p, p.T)


@pytest.fixture(scope="module")
def fit_basis():
    return build_basis(DomainSpec.interval(1.0, 512), 500)


def test_kernel_ratio_long_time(fit_basis):
    idx = [256]
    p = heat_kernel_matrix(fit_basis, 5.0, idx)
    phi_t = fit_basis.eigenfunctions[0][idx]
    ratio = math.exp(fit_basis.lambda1 * 5.0) * p[0, 0] / phi_t[0] ** 2
    assert ratio == pytest.approx(1.0, abs=1e-6)


def test_kernel_fit_finite_and_feasible(fit_basis):
    ts = np.geomspace(0.01, 5.0, 20)
    fit = fit_kernel_bound(fit_basis, ts, per_axis=10)
    assert fit.feasible
    assert math.isfinite(fit.c) and fit.c > 0
    assert fit.violations == []
    # upper slack closes at long times
    t_arr, ratio_sup, lower_req, upper_env = fit.residuals.T
    assert upper_env[-1] - ratio_sup[-1] <= upper_env[0] - ratio_sup[0]
    assert np.all(ratio_sup <= upper_env + 1e-9)
    assert np.all(lower_req <= ratio_sup + 1e-9)


def test_kernel_fit_domain_error(fit_basis):
    with pytest.raises(DomainError):
        fit_kernel_bound(fit_basis, [0.0, 1.0])


def test_decay_bound_values(unit_basis):
    c = 2.0
    env0 = semigroup_decay_bound(unit_basis, 1.5, 0.0, c, 0.0)
    assert env0 == pytest.approx(1.5 * unit_basis.phi_sup ** 2 * 3.0, rel=1e-14)
    # gamma = lambda1 freezes the envelope
    ts = np.array([0.0, 1.0, 5.0])
    env = semigroup_decay_bound(unit_basis, 1.0, unit_basis.lambda1, c, ts)
    assert np.allclose(env, env[0])
    with pytest.raises(DomainError):
        semigroup_decay_bound(unit_basis, 0.0, 0.0, c, 1.0)


def test_decay_bound_dominates_semigroup(unit_basis):
    # ||T_t phi||_inf = exp(-lambda1 t) phi_sup stays under the envelope
    c = 0.5
    for t in np.linspace(0.0, 2.0, 21):
        actual = float(np.max(apply_semigroup(unit_basis, unit_basis.phi, t)))
        env = semigroup_decay_bound(unit_basis, 1.0, 0.0, c, t)
        assert actual <= env + 1e-12


def test_principal_mode_conversion(unit_basis):
    mass = principal_mode(unit_basis, "mass")
    l2 = principal_mode(unit_basis, "l2")
    assert integrate(unit_basis, mass) == pytest.approx(1.0, abs=1e-12)
    assert integrate(unit_basis, l2 * l2) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        principal_mode(unit_basis, "sup")


def test_basis_csv_export(tmp_path, unit_basis):
    out = tmp_path / "basis.csv"
    basis_to_csv(unit_basis, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "x,phi,e1,e2"
    assert len(lines) == 202
