import math

import numpy as np
import pytest
from scipy.integrate import quad

from rdblow.bounds import (LowerBoundInputs, barrier_admissible, build_upper_inputs,
                           global_certificate, mass_comparison_ode,
                           minimal_barrier_factor, phi_power_integral,
                           sigma_bounds_h_half, tau_lower, tau_upper_excess,
                           tau_upper_matched)
from rdblow.errors import ConfigurationError, DomainError
from rdblow.fbm import FbmPath, HurstParameter, TimeGrid, sample_path
from rdblow.solver import InitialDatum, ModelParams, SolverControls, solve
from rdblow.spectral import DomainSpec, build_basis

H34 = HurstParameter(0.75)
H12 = HurstParameter(0.5)


@pytest.fixture(scope="module")
def basis3():
    return build_basis(DomainSpec.interval(3.0, 120), 60)


@pytest.fixture(scope="module")
def basis1():
    return build_basis(DomainSpec.interval(1.0, 120), 60)


def params_matched(eta=0.5, hurst=H34, delta=0.2, k=0.1, gamma=0.0):
    return ModelParams(gamma=gamma, k=k, delta=delta, eta=eta, p=1.5, q=2.0,
                       m=0.0, n=2.0, hurst=hurst)


def params_excess(eta=0.5, hurst=H34):
    return ModelParams(gamma=0.0, k=0.1, delta=0.2, eta=eta, p=1.5, q=2.0,
                       m=1.0, n=2.0, hurst=hurst)


def zero_path(t_max=10.0, n=1000, hurst=H34):
    grid = TimeGrid(t_max, n)
    return FbmPath(grid=grid, values=np.zeros(n + 1), hurst=hurst, seed=0,
                   method="circulant")


def test_tau_lower_constant_integrand(basis1):
    # eta=0 and unit weight: crossing at exactly the threshold value
    params = ModelParams(gamma=0.0, k=0.5, delta=1.0, eta=0.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    path = zero_path(t_max=1.0, n=6000)
    res = tau_lower(path, params, basis1, f_sup=1.0, weight_mode="unit")
    # M=max(1, 1)=1, m+n+q-1=3, threshold = 1/6
    assert res.threshold == pytest.approx(1.0 / 6.0, rel=1e-14)
    assert res.value == pytest.approx(1.0 / 6.0, abs=2.0 / 6000)


def test_tau_lower_infinite_for_tiny_datum(basis1):
    params = params_matched(k=0.5)
    path = zero_path(t_max=1.0, n=500, hurst=H34)
    res = tau_lower(path, params, basis1, f_sup=1e-9)
    assert math.isinf(res.value)


def test_tau_lower_refined_quadrature_oracle(basis3):
    params = params_matched()
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 42)
    f_sup = 60.0 * basis3.phi_sup
    v1 = tau_lower(path, params, basis3, f_sup).value
    # oracle: same integrand, 4x denser quadrature of the interpolated path
    from rdblow._util import first_crossing_time, log_cumtrapz0
    from rdblow.spectral import semigroup_sup_norm_profile
    fine_t = np.linspace(0, grid.t_max, 4 * grid.n_steps + 1)
    fine_b = np.interp(fine_t, path.times(), path.values)
    drive = np.maximum(0.5 * params.eta * fine_b * 2.0,
                       params.eta * fine_b)  # (q-1)=1 and (m+n-1)=1 coincide here
    logw = np.log(semigroup_sup_norm_profile(basis3, params.gamma, fine_t))
    inputs = LowerBoundInputs.from_params(params, basis3.domain.volume, f_sup)
    cum = log_cumtrapz0(drive + logw, fine_t)
    v2 = first_crossing_time(fine_t, cum, math.log(inputs.threshold))
    assert abs(v1 - v2) <= 2 * grid.dt


def test_tau_lower_requires_large_domain(basis1):
    params = ModelParams(gamma=0.0, k=5.0, delta=0.0, eta=0.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    with pytest.raises(ConfigurationError):
        tau_lower(zero_path(1.0, 100), params, basis1, f_sup=1.0)


def test_tau_lower_monotone_in_threshold_drivers(basis3):
    params = params_matched()
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 43)
    base = tau_lower(path, params, basis3, f_sup=30.0).value
    bigger_f = tau_lower(path, params, basis3, f_sup=60.0).value
    assert bigger_f <= base
    # larger delta increases M
    params_d = params_matched(delta=2.0)
    assert tau_lower(path, params_d, basis3, f_sup=30.0).value <= base


def test_tau_lower_no_lookahead(basis3):
    params = params_matched()
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 44)
    f_sup = 60.0 * basis3.phi_sup
    v = tau_lower(path, params, basis3, f_sup).value
    idx = int(round(v / grid.dt))
    assert idx >= 1
    truncated = FbmPath(grid=TimeGrid(idx * grid.dt, idx),
                        values=path.values[:idx + 1].copy(), hurst=path.hurst,
                        seed=path.seed, method=path.method)
    assert tau_lower(truncated, params, basis3, f_sup).value == v


def test_global_certificate_closed_form(basis1):
    # eta=0, gamma=0: the decay integral is exactly K/(lambda1*(m+n-1))
    params = ModelParams(gamma=0.0, k=0.5, delta=0.0, eta=0.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    c0 = 1e-4
    f_sup = c0 * basis1.phi_sup
    kernel_c = 4.0
    path = zero_path(t_max=40.0, n=4000, hurst=H34)
    rep = global_certificate(path, params, basis1, f_sup, c0=c0, kernel_c=kernel_c)
    mn1 = params.m + params.n - 1.0
    kconst = (2.0 * basis1.domain.volume * (params.m + params.n + params.q - 1.0)
              * (c0 * basis1.phi_sup ** 2 * (1.0 + kernel_c)) ** mn1)
    expected = 1.0 - kconst / (basis1.lambda1 * mn1)
    assert rep.kind == "global_K"
    assert rep.margin == pytest.approx(expected, rel=1e-3)
    # oracle: scalar quadrature of the decay integral
    integral, _ = quad(lambda r: math.exp(-basis1.lambda1 * mn1 * r), 0, np.inf)
    assert 1.0 - kconst * integral == pytest.approx(expected, rel=1e-12)


def test_global_certificate_refuses_nondecaying(basis1):
    params = ModelParams(gamma=15.0, k=0.5, delta=0.0, eta=0.0, p=2.0, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    rep = global_certificate(zero_path(5.0, 500), params, basis1, f_sup=1e-4,
                             c0=1e-4, kernel_c=4.0)
    assert "K_refused" in rep.witness
    assert rep.kind != "global_K"


def test_global_certificate_none_on_excursion(basis3):
    params = params_matched(eta=1.5)
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 45)
    rep = global_certificate(path, params, basis3, f_sup=60.0 * basis3.phi_sup)
    assert rep.kind == "none"
    assert rep.margin <= 0


def test_barrier_admissibility_monotone_and_minimal(basis1):
    params = ModelParams(gamma=0.0, k=0.1, delta=1.0, eta=0.3, p=2.0, q=2.5,
                         m=1.0, n=2.0, hurst=H34)
    bmin = minimal_barrier_factor(0.0, params, basis1)
    # oracle: bisection on the admissibility predicate
    lo, hi = 1.0, 1e9
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if barrier_admissible(mid, 0.0, params, basis1).ok:
            hi = mid
        else:
            lo = mid
    assert bmin == pytest.approx(hi, rel=1e-6)
    assert barrier_admissible(bmin * 1.01, 0.0, params, basis1).ok
    assert not barrier_admissible(max(1.0 + 1e-9, bmin * 0.99), 0.0, params, basis1).ok
    # increasing the running sup only shrinks margins
    m0 = barrier_admissible(bmin * 2, 0.0, params, basis1).margins
    m1 = barrier_admissible(bmin * 2, 1.0, params, basis1).margins
    assert all(a >= b for a, b in zip(m0, m1))


def test_barrier_explicit_rhs(basis1):
    # eta=0 reduces condition 1 to b^(q-p) >= (k C1^p + lambda1 C1)/|D|^(1-q)
    params = ModelParams(gamma=0.0, k=0.1, delta=1.0, eta=0.0, p=2.0, q=2.5,
                         m=1.0, n=2.0, hurst=H34)
    c1 = basis1.phi_sup
    rhs1 = (0.1 * c1 ** 2 + basis1.lambda1 * c1) / basis1.domain.volume ** (1 - 2.5)
    rep = barrier_admissible(rhs1 ** (1 / 0.5) * 1.0001, 0.0, params, basis1)
    assert rep.margins[0] > 0
    rep_low = barrier_admissible(rhs1 ** (1 / 0.5) * 0.9999, 0.0, params, basis1)
    assert rep_low.margins[0] < 0


def test_barrier_close_to_one_fails(basis1):
    params = ModelParams(gamma=0.0, k=0.1, delta=1.0, eta=0.0, p=2.0, q=2.5,
                         m=1.0, n=2.0, hurst=H34)
    assert not barrier_admissible(1.0 + 1e-9, 0.0, params, basis1).ok
    with pytest.raises(DomainError):
        barrier_admissible(1.0, 0.0, params, basis1)


def test_upper_inputs_quadrature_constants(basis3):
    params = params_matched()
    up = build_upper_inputs(params, basis3, b=60.0)
    # oracle: grid refinement of the phi power integrals
    fine = build_basis(DomainSpec.interval(3.0, 480), 60)
    for expo in (params.q / (params.q - params.p), params.n / (params.n - 1.0),
                 params.p + 1.0):
        coarse_val = phi_power_integral(basis3, expo)
        fine_val = phi_power_integral(fine, expo)
        assert coarse_val == pytest.approx(fine_val, rel=5e-4)
    mu = params.m + params.n
    ntilde = (0.5 * phi_power_integral(basis3, mu / (mu - params.p))
              ** ((params.p - mu) / params.p)
              + params.delta * phi_power_integral(basis3, 2.0) ** (-1.0))
    assert up.Ntilde == pytest.approx(ntilde, rel=1e-12)
    assert up.J0 == pytest.approx(60.0 * phi_power_integral(basis3, 2.0), rel=1e-12)


def test_phi_integral_refinement_order():
    vals = {}
    for n in (60, 120, 240):
        b = build_basis(DomainSpec.interval(3.0, n), 8)
        vals[n] = phi_power_integral(b, 4.0)
    e1 = abs(vals[60] - vals[240])
    e2 = abs(vals[120] - vals[240])
    assert math.log2(e1 / e2) >= 1.9


def test_tau_upper_matched_closed_form(basis3):
    # eta=0, gamma=0: tau1 = -ln(1 - lam1 (mu-1) RHS)/(lam1 (mu-1))
    params = params_matched(eta=0.0)
    up = build_upper_inputs(params, basis3, b=60.0)
    path = zero_path(t_max=2.0, n=20000, hurst=H34)
    res = tau_upper_matched(path, up, params, basis3)
    lam1 = basis3.lambda1
    mu = 2.0
    rhs = up.J0 ** (1 - mu) / ((mu - 1) * up.Ntilde)
    closed = -math.log(1.0 - lam1 * (mu - 1) * rhs) / (lam1 * (mu - 1))
    assert res.value == pytest.approx(closed, abs=2 * 2.0 / 20000)
    # tiny datum: crossing impossible, bound infinite
    up_small = build_upper_inputs(params, basis3, b=1e-4)
    rhs_small = up_small.J0 ** (1 - mu) / ((mu - 1) * up_small.Ntilde)
    assert lam1 * (mu - 1) * rhs_small > 1.0
    assert math.isinf(tau_upper_matched(path, up_small, params, basis3).value)


def test_tau_upper_matched_shrinks_with_datum(basis3):
    params = params_matched()
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 47)
    small = tau_upper_matched(path, build_upper_inputs(params, basis3, b=30.0),
                              params, basis3).value
    large = tau_upper_matched(path, build_upper_inputs(params, basis3, b=300.0),
                              params, basis3).value
    assert large <= small


def test_tau_ordering_fixed_seed(basis3):
    params = params_matched()
    grid = TimeGrid(0.75, 1536)
    up = build_upper_inputs(params, basis3, b=60.0)
    f_sup = 60.0 * basis3.phi_sup
    for seed in (101, 102, 103):
        path = sample_path(0.75, grid, seed)
        low = tau_lower(path, params, basis3, f_sup).value
        high = tau_upper_matched(path, up, params, basis3).value
        assert low <= high


def test_tau_upper_excess_terms(basis3):
    params = params_excess()
    up = build_upper_inputs(params, basis3, b=60.0, eps0_cap_mode="consistent")
    assert up.A0 == pytest.approx((1.0 / 3.0) * (3.0 / 2.0) ** 2, rel=1e-14)
    assert up.delta_term_coef is not None and up.delta_term_coef > 0
    # delta = 0 drops the second aggregate term
    params0 = ModelParams(gamma=0.0, k=0.1, delta=0.0, eta=0.5, p=1.5, q=2.0,
                          m=1.0, n=2.0, hurst=H34)
    up0 = build_upper_inputs(params0, basis3, b=60.0, eps0_cap_mode="consistent")
    first = up0.integral_q_over_qp ** ((params0.p - params0.q) / params0.p)
    assert up0.Dcoef_printed_aggregate == pytest.approx(first, rel=1e-14)
    assert up0.Dcoef == pytest.approx(0.5 * first, rel=1e-14)


def test_tau_upper_excess_min_drive_envelope(basis3):
    params = params_excess()
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 48)
    b = path.values
    drive = np.minimum((params.q - 1) * params.eta * b,
                       (params.m + params.n - 1) * params.eta * b)
    assert np.all(drive <= (params.q - 1) * params.eta * b + 1e-15)
    assert np.all(drive <= (params.m + params.n - 1) * params.eta * b + 1e-15)


def test_tau_upper_excess_printed_vs_variants(basis3):
    params = params_excess()
    up = build_upper_inputs(params, basis3, b=60.0, eps0_cap_mode="consistent")
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 49)
    res = tau_upper_excess(path, up, params, basis3)
    # printed threshold carries (-lambda1+gamma) < 0 here: flagged, crossing at 0
    assert "printed-threshold-nonpositive" in res.flags
    assert res.value == 0.0
    assert res.variants["derivation_threshold"] > 0.0


def test_eps0_cap_validation(basis3):
    params = params_excess()
    up = build_upper_inputs(params, basis3, b=60.0)  # printed cap default
    assert up.eps0 == pytest.approx(0.5 * up.eps0_cap_printed)
    with pytest.raises(ConfigurationError):
        build_upper_inputs(params, basis3, b=60.0, eps0=10 * up.eps0_cap_printed)


def test_sigma_bounds_closed_form_zero_path(basis3):
    # W = 0 and Lambda > 0: sigma* inverts (1 - exp(-Lambda(m+n-1)t))/(Lambda(m+n-1))
    params = params_matched(eta=1.0, hurst=H12, gamma=0.0)
    lam = 0.5  # eta^2/2
    f_sup = 2.0
    up = build_upper_inputs(params, basis3, b=8.0)
    path = zero_path(t_max=10.0, n=100000, hurst=H12)
    sb = sigma_bounds_h_half(path, params, basis3, f_sup, up)
    mn1 = 1.0
    m_const = max(3.0, params.delta * 3.0)
    thr = 1.0 / (2.0 * m_const * mn1 * f_sup ** mn1)
    closed = -math.log(1.0 - lam * mn1 * thr) / (lam * mn1)
    assert sb.sigma_star.value == pytest.approx(closed, abs=2 * 10.0 / 100000)
    assert sb.Lambda == pytest.approx(lam)


def test_sigma_excess_indicator_zero_measure(basis3):
    # eta=0 makes the indicator support measure zero: no crossing ever
    # (eta=0 collapses the drive, so the indicator integrand support is {0})
    params = ModelParams(gamma=0.0, k=0.1, delta=0.2, eta=1e-12, p=1.5, q=2.0,
                         m=1.0, n=2.0, hurst=H12)
    up = build_upper_inputs(params, basis3, b=8.0, eps0_cap_mode="consistent")
    path = zero_path(t_max=5.0, n=2000, hurst=H12)
    sb = sigma_bounds_h_half(path, params, basis3, 2.0, up)
    res = sb.sigma_upper_excess_indicator
    assert math.isinf(res.variants["lambda_shift_threshold"])


def test_sigma_requires_brownian(basis3):
    params = params_matched()
    up = build_upper_inputs(params, basis3, b=8.0)
    path = sample_path(0.75, TimeGrid(0.5, 512), 50)
    with pytest.raises(ConfigurationError):
        sigma_bounds_h_half(path, params, basis3, 2.0, up)


def test_comparison_ode_linear_case(basis3):
    # coef = 0: pure exponential decay
    params = params_matched(eta=0.0)
    path = zero_path(t_max=1.0, n=500, hurst=H34)
    ode = mass_comparison_ode(path, 5.0, 0.0, params, basis3, check=False)
    expected = 5.0 * np.exp((-basis3.lambda1 + 0.0) * path.times())
    assert np.allclose(ode.values, expected, rtol=1e-12)
    assert math.isinf(ode.singularity_time)


def test_comparison_ode_logistic(basis1):
    # eta=0, mu=2: blow-up iff J0 > lambda1/coef, explicit solution known
    params = ModelParams(gamma=0.0, k=0.5, delta=0.0, eta=0.0, p=1.5, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    lam1 = basis1.lambda1
    coef = 2.0
    path = zero_path(t_max=3.0, n=30000, hurst=H34)
    j0_sub = 0.9 * lam1 / coef
    sub = mass_comparison_ode(path, j0_sub, coef, params, basis1, check=False)
    assert math.isinf(sub.singularity_time)
    j0_super = 2.0 * lam1 / coef
    sup = mass_comparison_ode(path, j0_super, coef, params, basis1, check=False)
    t_exact = math.log(coef * j0_super / (coef * j0_super - lam1)) / lam1
    assert sup.singularity_time == pytest.approx(t_exact, abs=2 * 3.0 / 30000)
    # closed-form track before the singularity
    i = int(np.argmin(np.abs(path.times() - 0.5 * t_exact)))
    t_i = path.times()[i]
    denom = coef / lam1 + (1.0 / j0_super - coef / lam1) * math.exp(lam1 * t_i)
    assert sup.values[i] == pytest.approx(1.0 / denom, rel=1e-6)


def test_comparison_ode_stiff_check_and_tau_consistency(basis3):
    params = params_matched()
    up = build_upper_inputs(params, basis3, b=60.0)
    grid = TimeGrid(0.75, 1536)
    for seed in (201, 202, 203):
        path = sample_path(0.75, grid, seed)
        ode = mass_comparison_ode(path, up.J0, up.Ntilde, params, basis3)
        assert ode.ode_ok, f"seed {seed}: dev {ode.ode_max_rel_dev}"
        res = tau_upper_matched(path, up, params, basis3)
        assert abs(ode.singularity_time - res.value) <= grid.dt


def test_solver_mass_dominates_comparison_ode(basis3):
    # J(t) from the solver never falls below the comparison solution
    params = params_matched()
    grid = TimeGrid(0.75, 1536)
    path = sample_path(0.75, grid, 204)
    datum = InitialDatum.multiple_of_phi(60.0)
    tr = solve(params, basis3, datum, path, SolverControls(store_fields=False))
    up = build_upper_inputs(params, basis3, b=60.0)
    ode = mass_comparison_ode(path, up.J0, up.Ntilde, params, basis3, check=False)
    n = min(len(tr.times), len(ode.times))
    for i in range(n):
        if not math.isfinite(ode.values[i]) or tr.times[i] >= (tr.tau_num or np.inf):
            break
        assert tr.J[i] >= ode.values[i] * (1.0 - 1e-6)


def test_sigma_ordering_with_solver(basis3):
    # Brownian-regime sandwich on real solves: sigma* <= tau_num <= sigma1*
    params = ModelParams(gamma=0.0, k=0.1, delta=0.2, eta=1.0, p=1.5, q=2.0,
                         m=0.0, n=2.0, hurst=H12)
    b = 60.0
    datum = InitialDatum.multiple_of_phi(b)
    f_sup = b * basis3.phi_sup
    up = build_upper_inputs(params, basis3, b=b)
    grid = TimeGrid(1.0, 2048)
    for seed in range(7000, 7010):
        path = sample_path(0.5, grid, seed)
        tr = solve(params, basis3, datum, path, SolverControls(store_fields=False))
        assert tr.verdict == "blew_up"
        sb = sigma_bounds_h_half(path, params, basis3, f_sup, up)
        assert sb.sigma_star.value <= tr.tau_num + grid.dt
        assert tr.tau_num <= sb.sigma_upper_matched.value + grid.dt


def test_solution_stays_above_certified_barrier(basis3):
    # with the barrier conditions holding, v(t, .) never dips below b*phi
    params = ModelParams(gamma=0.0, k=0.1, delta=0.2, eta=0.5, p=1.5, q=2.0,
                         m=0.0, n=2.0, hurst=H34)
    b = 60.0
    datum = InitialDatum.multiple_of_phi(b)
    grid = TimeGrid(0.75, 1536)
    bphi = b * basis3.phi
    for seed in (1, 2, 3):
        path = sample_path(0.75, grid, seed)
        assert barrier_admissible(b, float(path.running_sup()[-1]),
                                  params, basis3).ok
        tr = solve(params, basis3, datum, path, SolverControls(store_fields=True))
        worst = min(float((f - bphi).min()) for f in tr.fields)
        assert worst >= -1e-8
