import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from rdblow import _stepper_py
from rdblow.errors import ConfigurationError, DomainError
from rdblow.fbm import FbmPath, HurstParameter, TimeGrid, sample_path
from rdblow.solver import (InitialDatum, ModelParams, SolverControls,
                           comparison_probe, lambda_shift, mass_functional, solve,
                           trace_to_csv, transform)
from rdblow.spectral import DomainSpec, build_basis, integrate

H34 = HurstParameter(0.75)


def make_basis(length=1.0, n=100, modes=50):
    return build_basis(DomainSpec.interval(length, n), modes)


def test_model_params_validation_collects_all():
    with pytest.raises(ConfigurationError) as err:
        ModelParams(gamma=-1.0, k=0.0, delta=-0.1, eta=-0.2, p=0.5, q=2.0,
                    m=-1.0, n=2.0, hurst=H34)
    msgs = " ".join(err.value.violations)
    assert "p,q,n>1" in msgs
    assert "k must be positive" in msgs
    assert len(err.value.violations) >= 4


def test_model_params_exponent_chain():
    with pytest.raises(ConfigurationError):
        ModelParams(gamma=0.0, k=1.0, delta=0.0, eta=0.0, p=2.5, q=2.0, m=0.0,
                    n=2.0, hurst=H34)  # q < p
    with pytest.raises(ConfigurationError):
        ModelParams(gamma=0.0, k=1.0, delta=0.0, eta=0.0, p=1.5, q=4.0, m=0.0,
                    n=2.0, hurst=H34)  # m+n < q


def test_lambda_shift():
    params = ModelParams(gamma=0.3, k=1.0, delta=0.0, eta=2.0, p=1.5, q=2.0,
                         m=0.0, n=2.0, hurst=HurstParameter(0.5))
    assert lambda_shift(params).value == pytest.approx(2.0 - 0.3)


def test_datum_validation():
    basis = make_basis()
    with pytest.raises(DomainError):
        InitialDatum.multiple_of_phi(0.0)
    zero = InitialDatum.custom(np.zeros(101))
    with pytest.raises(DomainError):
        zero.resolve(basis)
    neg = np.zeros(101); neg[3] = -1.0
    with pytest.raises(DomainError):
        InitialDatum.custom(neg).resolve(basis)
    bad_boundary = np.ones(101)
    with pytest.raises(DomainError):
        InitialDatum.custom(bad_boundary).resolve(basis)


def test_transform_identity_and_scaling():
    basis = make_basis()
    phi = basis.phi
    assert np.array_equal(transform(phi, 5.0, 0.0), phi)
    out = transform(phi, 1.0, 2.0, "forward")
    assert np.allclose(out, math.exp(-2.0) * phi, rtol=1e-15)
    u = transform(phi, 0.37, 1.7, "inverse")
    back = transform(u, 0.37, 1.7, "forward")
    rel = np.max(np.abs(back - phi) / np.maximum(np.abs(phi), 1e-300))
    assert rel <= 1e-14


def test_transform_overflow_log_route():
    with pytest.warns(RuntimeWarning):
        out = transform(np.array([0.0, 1e-280, 1.0]), 400.0, 2.0, "inverse")
    assert out[0] == 0.0
    assert math.isfinite(out[1])
    assert out[2] == math.inf
    with pytest.raises(DomainError):
        transform(np.ones(3), math.nan, 1.0)


def test_mass_functional_values():
    # oracle: grid quadrature under refinement; analytic pi^2/8 on interval(1)
    for n in (100, 400):
        basis = make_basis(n=n)
        val = mass_functional(basis.phi, basis)
        assert val == pytest.approx(math.pi ** 2 / 8, rel=2e-4)
    basis = make_basis()
    assert mass_functional(np.zeros(101), basis) == 0.0
    val_b = mass_functional(3.0 * basis.phi, basis)
    assert val_b == pytest.approx(3.0 * mass_functional(basis.phi, basis), rel=1e-14)


def decay_params():
    return ModelParams(gamma=0.0, k=1.0, delta=0.0, eta=0.0, p=2.0, q=2.0,
                       m=0.0, n=2.0, hurst=H34)


def test_decay_regime_monotone():
    # |D| <= k with matched local/non-local exponents: sup-norm decays
    basis = make_basis()
    grid = TimeGrid(1.5, 300)
    path = sample_path(0.75, grid, 5)
    tr = solve(decay_params(), basis, InitialDatum.multiple_of_phi(0.01), path)
    assert tr.verdict == "global_until_horizon"
    i0 = int(np.searchsorted(tr.times, 0.1))
    assert np.all(np.diff(tr.sup_norm[i0:]) <= 1e-12)
    # exponential envelope: the tail decays at least at unit rate
    slope = (math.log(tr.sup_norm[-1]) - math.log(tr.sup_norm[i0])) \
        / (tr.times[-1] - tr.times[i0])
    assert slope <= -1.0


def supercritical_params():
    return ModelParams(gamma=0.0, k=1e-6, delta=0.0, eta=0.0, p=2.0, q=2.0,
                       m=0.0, n=2.0, hurst=H34)


def test_supercritical_blowup_matches_scalar_ode():
    basis = make_basis(length=2.0, n=160, modes=64)
    grid = TimeGrid(0.2, 2000)
    path = sample_path(0.75, grid, 6)
    datum = InitialDatum.multiple_of_phi(100.0)
    tr = solve(supercritical_params(), basis, datum, path,
               SolverControls(store_fields=False))
    assert tr.verdict == "blew_up"
    j0 = mass_functional(datum.resolve(basis), basis)
    theta = 1.0 / integrate(basis, basis.phi ** 2)
    lam1 = basis.lambda1

    def rhs(t, y):
        return -lam1 * y + theta * y * y

    event = lambda t, y: y[0] - 1e12
    event.terminal = True
    sol = solve_ivp(rhs, (0, 0.2), [j0], method="LSODA", rtol=1e-12, atol=1e-9,
                    events=event, max_step=1e-4)
    t_sing = float(sol.t_events[0][0])
    assert tr.tau_num == pytest.approx(t_sing, rel=0.10)


def test_grid_convergence_of_tau():
    grid = TimeGrid(0.2, 2000)
    path = sample_path(0.75, grid, 8)
    datum = InitialDatum.multiple_of_phi(100.0)
    taus = {}
    for n in (80, 160):
        basis = make_basis(length=2.0, n=n, modes=40)
        tr = solve(supercritical_params(), basis, datum, path,
                   SolverControls(store_fields=False))
        taus[n] = tr.tau_num
    assert abs(taus[80] - taus[160]) / taus[160] < 0.05
    basis = make_basis(length=2.0, n=160, modes=40)
    fine = solve(supercritical_params(), basis, datum, path,
                 SolverControls(store_fields=False, safety=0.05, cfl=0.4))
    assert abs(fine.tau_num - taus[160]) / taus[160] < 0.05


def test_vmax_sensitivity():
    grid = TimeGrid(0.2, 2000)
    path = sample_path(0.75, grid, 9)
    basis = make_basis(length=2.0, n=120, modes=40)
    datum = InitialDatum.multiple_of_phi(100.0)
    taus = []
    for vmax in (1e6, 1e8, 1e10):
        tr = solve(supercritical_params(), basis, datum, path,
                   SolverControls(store_fields=False, v_max=vmax))
        taus.append(tr.tau_num)
    assert (max(taus) - min(taus)) / max(taus) < 0.02


def test_nonnegativity_no_deep_clips():
    basis = make_basis(length=3.0, n=120, modes=60)
    params = ModelParams(gamma=0.0, k=0.1, delta=0.2, eta=0.5, p=1.5, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    grid = TimeGrid(0.75, 1536)
    for seed in (11, 12):
        tr = solve(params, basis, InitialDatum.multiple_of_phi(60.0),
                   sample_path(0.75, grid, seed), SolverControls(store_fields=True))
        assert tr.n_deep_clips == 0
        assert min(f.min() for f in tr.fields) >= -1e-12


def test_comparison_probe_ordering():
    basis = make_basis()
    grid = TimeGrid(1.0, 200)
    path = sample_path(0.75, grid, 13)
    params = decay_params()
    lo = solve(params, basis, InitialDatum.multiple_of_phi(0.5), path)
    hi = solve(params, basis, InitialDatum.multiple_of_phi(1.0), path)
    verdict = comparison_probe(lo, hi)
    assert verdict.ok
    # oracle at halved mesh: ordering is not a discretization artifact
    basis2 = make_basis(n=200)
    lo2 = solve(params, basis2, InitialDatum.multiple_of_phi(0.5), path)
    hi2 = solve(params, basis2, InitialDatum.multiple_of_phi(1.0), path)
    assert comparison_probe(lo2, hi2).ok


def test_comparison_probe_identical_data_bitwise():
    basis = make_basis()
    grid = TimeGrid(0.5, 100)
    path = sample_path(0.75, grid, 14)
    params = decay_params()
    a = solve(params, basis, InitialDatum.multiple_of_phi(0.7), path)
    b = solve(params, basis, InitialDatum.multiple_of_phi(0.7), path)
    assert np.array_equal(a.J, b.J)
    assert np.array_equal(a.fields, b.fields)


def test_comparison_probe_common_lifetime():
    basis = make_basis(length=2.0, n=100, modes=40)
    grid = TimeGrid(0.5, 1000)
    path = sample_path(0.75, grid, 15)
    params = supercritical_params()
    lo = solve(params, basis, InitialDatum.multiple_of_phi(0.05), path)
    hi = solve(params, basis, InitialDatum.multiple_of_phi(100.0), path)
    assert hi.verdict == "blew_up" and lo.verdict == "global_until_horizon"
    verdict = comparison_probe(lo, hi)
    assert verdict.ok
    assert verdict.n_times_checked < len(lo.times)


def test_transformation_consistency_along_trace():
    basis = make_basis(length=3.0, n=90, modes=40)
    params = ModelParams(gamma=0.0, k=0.5, delta=0.1, eta=0.8, p=1.5, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    grid = TimeGrid(0.3, 300)
    path = sample_path(0.75, grid, 16)
    tr = solve(params, basis, InitialDatum.multiple_of_phi(2.0), path,
               SolverControls(store_fields=True))
    worst = 0.0
    for i, t in enumerate(tr.times):
        b_val = float(np.interp(t, path.times(), path.values))
        u = transform(tr.fields[i], b_val, params.eta, "inverse")
        v_back = transform(u, b_val, params.eta, "forward")
        scale = max(1.0, float(np.abs(tr.fields[i]).max()))
        worst = max(worst, float(np.abs(v_back - tr.fields[i]).max()) / scale)
    assert worst <= 1e-6


def test_brownian_ito_shift_changes_drift():
    # H = 1/2 solves with the shifted linear part: stronger damping than H > 1/2
    basis = make_basis()
    grid = TimeGrid(0.5, 200)
    zero_path = lambda h: FbmPath(grid=grid, values=np.zeros(201),
                                  hurst=HurstParameter(h), seed=0, method="circulant")
    p_half = ModelParams(gamma=0.0, k=1.0, delta=0.0, eta=2.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=HurstParameter(0.5))
    p_frac = ModelParams(gamma=0.0, k=1.0, delta=0.0, eta=2.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=HurstParameter(0.75))
    tr_half = solve(p_half, basis, InitialDatum.multiple_of_phi(0.01), zero_path(0.5))
    tr_frac = solve(p_frac, basis, InitialDatum.multiple_of_phi(0.01), zero_path(0.75))
    assert tr_half.sup_norm[-1] < tr_frac.sup_norm[-1]
    ratio = tr_half.sup_norm[-1] / tr_frac.sup_norm[-1]
    assert ratio == pytest.approx(math.exp(-0.5 * 4.0 * 0.5), rel=1e-2)


def test_solver_guards():
    basis = make_basis()
    grid = TimeGrid(0.5, 100)
    path = sample_path(0.75, grid, 17)
    params = decay_params()
    with pytest.raises(ConfigurationError):
        solve(params, basis, InitialDatum.multiple_of_phi(1.0), path,
              SolverControls(output_times=np.linspace(0, 1.0, 11)))  # beyond path
    with pytest.raises(ConfigurationError):
        solve(params, basis, InitialDatum.multiple_of_phi(1.0), path,
              SolverControls(output_times=np.linspace(0, 0.5, 501)))  # path 5x coarser
    p_half = ModelParams(gamma=0.0, k=1.0, delta=0.0, eta=0.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=HurstParameter(0.5))
    with pytest.raises(ConfigurationError):
        solve(p_half, basis, InitialDatum.multiple_of_phi(1.0), path)  # hurst mismatch


def test_kernel_fault_on_nan_state():
    v = np.zeros(11)
    v[5] = math.nan
    work = np.empty_like(v)
    status, *_ = _stepper_py.run_block_1d(
        v, work, 0.1, 0.0, 1.0, 0.0, 2.0, 2.0, 0.0, 2.0, 0.0, 0.0, 0.0,
        0.5, np.zeros(3), 0.0, 1.0, 0.8, 0.1, 1e8, 1e-12, 1000)
    assert status == _stepper_py.FAULT


def test_rectangle_solve_smoke():
    basis = build_basis(DomainSpec.rectangle(1.0, 1.0, 24, 24), 16)
    params = ModelParams(gamma=0.0, k=2.0, delta=0.0, eta=0.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    grid = TimeGrid(0.05, 50)
    path = sample_path(0.75, grid, 18)
    tr = solve(params, basis, InitialDatum.multiple_of_phi(0.1), path)
    assert tr.verdict == "global_until_horizon"
    assert tr.backend == "python"
    assert np.all(tr.J >= 0)


def test_trace_csv_export(tmp_path):
    basis = make_basis()
    grid = TimeGrid(0.2, 50)
    tr = solve(decay_params(), basis, InitialDatum.multiple_of_phi(0.5),
               sample_path(0.75, grid, 19))
    out = tmp_path / "trace.csv"
    trace_to_csv(tr, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "t,J,sup_norm"
    assert len(lines) == len(tr.times) + 1
