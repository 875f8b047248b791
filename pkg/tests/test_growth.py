import math

import numpy as np
import pytest
from scipy import integrate

from conftest import linear_problem
from nsfde.errors import CertificationError, DegenerateError, InsufficientDataError, NoRootError
from nsfde.functionals import FunctionalSpec, MaxNorm
from nsfde.growth import (C_p, GrowthBounds, beta_constants, build_lambda, certify, characteristic_value,
                          derive_bounds, empirical_rate, mc_moment_curve, minimize_over_epsilon,
                          regularised_delta, renewal_bound, renewal_kernel, rho_extrapolation,
                          power_inequality_gap, power_split_factor, solve_delta, solve_theta_star,
                          square_inequality_gap, validate_bounds)
from nsfde.measures import DelayMeasure, DensityPiece, exp_tilt_mass

TAU = 1.0
ZERO = DelayMeasure.zero(TAU)


def atom(s, w=1.0):
    return DelayMeasure.dirac(s, w, tau=TAU)


def bounds(nu=ZERO, eta=ZERO, mu=ZERO, C_f=0.0, C_g=0.0, C_D=0.0):
    return GrowthBounds(C_f, C_g, C_D, nu, eta, mu)


def bisect(fn, lo, hi, n=200):
    flo = fn(lo)
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        if (fn(mid) > 0) == (flo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


OMEGA = bisect(lambda d: math.exp(-d) - d, 0.0, 1.0)


def test_C_p_two():
    assert C_p(2.0) == pytest.approx(4.0, rel=1e-15)


@pytest.mark.parametrize("p,eps", [(2.0, 1.0), (2.0, 0.1), (3.0, 0.7), (4.5, 2.0)])
def test_beta_constants_independent_paths(p, eps):
    b = beta_constants(p, eps, C_f=1.3, C_g=0.4)
    assert b.beta1 == pytest.approx(eps * p * (p - 1) / 2, rel=1e-14)
    assert b.beta2 == pytest.approx(1.3 * eps ** (1 - p), rel=1e-14)
    assert b.beta3 == pytest.approx(0.4 * (p - 1) * eps ** (-(p - 2) / 2), rel=1e-14)
    assert b.beta4 == pytest.approx(math.exp((p - 1) * math.log1p(eps ** (1 / (p - 1)))) / eps, rel=1e-14)


def test_power_inequality_harness(rng):
    n = 100_000
    a, b = rng.normal(size=n) * 10, rng.normal(size=n) * 10
    eps = np.exp(rng.uniform(-5, 3, n))
    p = rng.uniform(2.0, 6.0, n)
    gap = power_inequality_gap(a, b, p, eps)
    scale = np.abs(a + b) ** p
    assert np.sum(gap < -1e-12 * np.maximum(scale, 1.0)) == 0
    alpha = rng.uniform(1e-3, 1 - 1e-3, n)
    gap2 = square_inequality_gap(a, b, alpha)
    assert np.sum(gap2 < -1e-12 * np.maximum((a + b) ** 2, 1.0)) == 0


def test_power_split_factor_at_p_two():
    assert power_split_factor(2.0, 0.5) == pytest.approx(1.5)


def test_build_lambda_examples():
    nu, eta = atom(-1.0), DelayMeasure.uniform_density(1.0, -1.0, tau=TAU)
    assert build_lambda(nu, eta, 2.0, 1.0).total_mass() == pytest.approx(2.0)
    assert build_lambda(ZERO, eta, 3.0, 4.0).total_mass() == pytest.approx(2.0 / 2.0)
    # p = 4, eps = 2: 1/2^3 + 3/2^1
    assert build_lambda(atom(-1.0), atom(-1.0), 4.0, 2.0).total_mass() == pytest.approx(1.625)


def test_characteristic_value_examples():
    assert characteristic_value(0.3, 2.0, 1.0, ZERO, ZERO) == 0.0
    for d in (0.1, 1.0, 10.0):
        assert characteristic_value(d, 2.0, 0.5, atom(0.0, 0.7), ZERO) == pytest.approx(0.7)
    for d in (0.2, 0.5671, 2.0):
        assert characteristic_value(d, 2.0, 1e-300, ZERO, atom(-1.0)) == pytest.approx(math.exp(-d) / d)


def explicit_F(delta, b1, mu, lam_density, tau):
    """The characteristic function in its original double-integral form, by quadrature."""
    first = exp_tilt_mass(mu, delta + b1)
    inner = lambda s: integrate.quad(lambda u: math.exp(b1 * u) * lam_density(u), -s, 0.0)[0]
    mid = integrate.quad(lambda s: math.exp(-delta * s) * inner(s), 0.0, tau)[0]
    last = math.exp(-delta * tau) / delta * integrate.quad(lambda u: math.exp(b1 * u) * lam_density(u), -tau, 0.0)[0]
    return first + mid + last


def test_closed_form_matches_double_integral():
    lam = DelayMeasure(pieces=(DensityPiece(-1.0, 0.0, 1.2, -0.8),), tau=TAU)
    mu = atom(-0.5, 0.3)
    for delta in (0.2, 1.0, 3.0):
        b1 = 0.4
        eps = b1  # p = 2 gives beta1 = eps
        got = characteristic_value(delta, 2.0, eps, mu, lam)
        ref = explicit_F(delta, b1, mu, lambda u: 1.2 - 0.8 * u, TAU)
        assert got == pytest.approx(ref, rel=1e-9)


def test_omega_root():
    # at p = 2 the eta weight is 1 for every eps, so a tiny eps leaves lambda = eta and beta1 ~ 0
    sol = solve_delta(2.0, 1e-300, bounds(eta=atom(-1.0)))
    assert sol.delta == pytest.approx(OMEGA, abs=1e-10)
    assert sol.delta == pytest.approx(0.567143, abs=1e-6)


def test_constant_F_below_one_is_degenerate():
    sol = solve_delta(2.0, 0.3, bounds(mu=atom(0.0, 0.5)))
    assert sol.degenerate and sol.rate == pytest.approx(0.3, abs=1e-7)
    with pytest.raises(DegenerateError) as info:
        solve_delta(2.0, 0.3, bounds())
    assert info.value.rate == pytest.approx(0.3)
    with pytest.raises(NoRootError):
        solve_delta(2.0, 0.3, bounds(mu=atom(0.0, 1.0)))


def test_self_consistent_root():
    b = bounds(nu=atom(-1.0), eta=atom(-1.0))
    sol = solve_delta(2.0, 0.1, b)
    assert sol.beta1 == pytest.approx(0.1)
    # nu / eps + eta (p - 1) / eps^0 = 10 + 1
    assert sol.lam.total_mass() == pytest.approx(11.0)
    F = characteristic_value(sol.delta, 2.0, 0.1, b.mu, sol.lam)
    assert abs(F - 1.0) <= 1e-12
    ref = explicit_F(sol.delta, 0.1, b.mu, lambda u: 0.0, TAU) + 11.0 * math.exp(-(sol.delta + 0.1)) / sol.delta
    assert ref == pytest.approx(1.0, abs=1e-10)


def random_measure(rng):
    m = DelayMeasure.zero(TAU)
    for _ in range(rng.integers(1, 4)):
        if rng.random() < 0.5:
            m = m + atom(-float(rng.uniform(0, 1)), float(rng.uniform(0, 2)))
        else:
            lo = -float(rng.uniform(0.1, 1))
            m = m + DelayMeasure.uniform_density(float(rng.uniform(0, 2)), lo, tau=TAU)
    return m


def test_randomised_roots_and_monotonicity(rng):
    for _ in range(50):
        mu = random_measure(rng).scaled(0.4)
        if sum(w for s, w in mu.atoms if abs(s) < 1e-12) >= 1:
            continue
        lam = random_measure(rng)
        eps = float(rng.uniform(0.05, 2))
        sol = solve_delta(2.0, eps, bounds(nu=lam, mu=mu))
        assert abs(characteristic_value(sol.delta, 2.0, eps, mu, sol.lam) - 1.0) <= 1e-10
        probes = np.geomspace(1e-3, 50, 20)
        vals = [characteristic_value(d, 2.0, eps, mu, sol.lam) for d in probes]
        assert np.all(np.diff(vals) < 0)
        bigger = solve_delta(2.0, eps, bounds(nu=lam + random_measure(rng), mu=mu))
        assert bigger.delta >= sol.delta - 1e-10


def test_epsilon_minimiser():
    b = bounds(nu=atom(-1.0), eta=atom(-1.0))
    opt = minimize_over_epsilon(2.0, b)
    assert np.all(opt.rate <= opt.rates[np.isfinite(opt.rates)] + 1e-12)
    assert opt.grid[0] < opt.eps < opt.grid[-1]
    single = minimize_over_epsilon(2.0, b, eps_grid=[0.3])
    assert single.eps == 0.3
    assert single.rate == pytest.approx(solve_delta(2.0, 0.3, b).rate)


def test_theta_star_examples():
    assert solve_theta_star(atom(-1.0, math.e)) == pytest.approx(1.0, abs=1e-10)
    assert solve_theta_star(atom(-1.0, 0.5)) is None
    theta = solve_theta_star(DelayMeasure.uniform_density(2.0, -1.0, tau=TAU))
    ref = bisect(lambda t: 2 * (1 - math.exp(-t)) / t - 1, 0.1, 5.0)
    assert theta == pytest.approx(ref, abs=1e-10)
    assert theta == pytest.approx(1.59362, abs=1e-5)


def test_bounds_from_linear_problem():
    prob = linear_problem()
    b = derive_bounds(prob.D, prob.f, prob.g)
    assert b.C_g == pytest.approx(0.5) and b.C_f == 0.0
    assert b.nu.total_mass() == pytest.approx(1.0)
    assert b.mu.total_mass() == pytest.approx(0.3)
    validate_bounds(b, prob.D, prob.f, prob.g, n_segments=2000)
    lifted = b.pth_power(2.0)
    assert lifted.C_g == pytest.approx(0.25)
    assert lifted.mu.total_mass() == pytest.approx(0.09)


def test_bounds_refuse_max_terms():
    D = FunctionalSpec((MaxNorm(0.5, (-1.0, 0.0)),), TAU)
    with pytest.raises(CertificationError):
        derive_bounds(D, FunctionalSpec((), TAU), FunctionalSpec((), TAU))


def test_validate_bounds_catches_understatement():
    prob = linear_problem()
    b = derive_bounds(prob.D, prob.f, prob.g)
    bad = GrowthBounds(b.C_f, b.C_g, b.C_D, b.nu.scaled(0.5), b.eta, b.mu)
    with pytest.raises(CertificationError):
        validate_bounds(bad, prob.D, prob.f, prob.g, n_segments=2000)


def test_moment_curve_needs_enough_paths():
    with pytest.raises(InsufficientDataError):
        mc_moment_curve(np.ones((10, 5)), 2.0, np.arange(5.0))


def test_empirical_rate_on_exact_exponential():
    t = np.linspace(0, 4, 81)
    est = empirical_rate(np.exp(0.7 * t), t)
    assert est.rate == pytest.approx(0.7)
    paths = np.exp(np.outer(np.linspace(0.1, 0.3, 600), t))
    est = empirical_rate(paths, t, mode="as", quantile=0.5)
    assert est.rate == pytest.approx(0.2, abs=1e-3)


def test_certificate_case_split():
    b = bounds(nu=atom(-1.0), mu=atom(-1.0, 1.2))
    cert = certify(b)
    assert cert.case == "i"
    assert cert.theta_star == pytest.approx(math.log(1.2))
    assert cert.as_rate == pytest.approx(max(cert.gamma_mean / 2, math.log(1.2)))
    cert2 = certify(bounds(nu=atom(-1.0), mu=atom(-1.0, 0.5)))
    assert cert2.case == "ii" and cert2.as_rate == pytest.approx(cert2.gamma_mean / 2)
    assert "pth_mean_rate" in cert.to_text()


# --- renewal kernel and rho regularisation -------------------------------------

RENEWAL_BOUNDS = bounds(nu=atom(-1.0), eta=DelayMeasure.uniform_density(0.5, -1.0, tau=TAU), mu=atom(-0.5, 0.3),
                        C_g=0.25)


def test_renewal_kernel_mass_matches_closed_form_at_second_order():
    mu, lam = RENEWAL_BOUNDS.mu, build_lambda(RENEWAL_BOUNDS.nu, RENEWAL_BOUNDS.eta, 2.0, 1.0)
    delta = 0.9
    exact = characteristic_value(delta, 2.0, 1.0, mu, lam, weighting="proof", rho=1e-6)
    errs = []
    for h in (0.04, 0.02, 0.01):
        k = renewal_kernel(delta, 2.0, 1.0, mu, lam, rho=1e-6, grid_step=h)
        errs.append(abs(float(k.total_mass()) - exact))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_renewal_kernel_without_lambda_is_exact():
    # p = 2, eps = 1: beta1 = 1 and the neutral weight is (1 + 1) / 1 = 2
    k = renewal_kernel(0.7, 2.0, 1.0, atom(-0.5, 0.3), ZERO, rho=1e-3)
    assert float(k.total_mass()) == pytest.approx(2.0 * 0.3 * math.exp(-1.7 * 0.5) + 1e-3 / 0.7, rel=1e-12)


def test_renewal_bound_limits_and_roots():
    rb = renewal_bound(2.0, 1.0, RENEWAL_BOUNDS, c=2.0)
    assert float(rb.kernel.total_mass()) == pytest.approx(1.0, abs=1e-12)
    assert abs(rb.delta - rb.delta_closed_form) < 1e-5
    assert rb.limit.agrees
    assert rb.limit.key_renewal_limit <= rb.limit.upper_bound


def test_rho_extrapolation_approaches_unregularised_root():
    mu, lam = RENEWAL_BOUNDS.mu, build_lambda(RENEWAL_BOUNDS.nu, RENEWAL_BOUNDS.eta, 2.0, 1.0)
    target = bisect(lambda d: characteristic_value(d, 2.0, 1.0, mu, lam, weighting="proof") - 1.0, 1e-6, 50.0)
    ex = rho_extrapolation(2.0, 1.0, mu, lam)
    assert np.all(np.diff(ex.deltas) < 0)  # smaller rho, smaller root
    assert abs(ex.delta_at_zero - target) < abs(ex.deltas[-1] - target)
    assert ex.delta_at_zero == pytest.approx(target, abs=1e-8)


def test_regularised_root_exists_when_unregularised_has_none():
    # no lambda and a tiny neutral part: F < 1 for every delta, so only rho produces a root
    mu = atom(-0.5, 0.01)
    assert solve_delta(2.0, 1.0, bounds(mu=mu), weighting="proof").degenerate
    d = regularised_delta(2.0, 1.0, mu, ZERO, rho=1e-4)
    assert characteristic_value(d, 2.0, 1.0, mu, ZERO, weighting="proof", rho=1e-4) == pytest.approx(1.0, rel=1e-10)
