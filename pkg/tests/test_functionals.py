import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsfde.errors import CertificationError, SelectionError, SupportError
from nsfde.functionals import (IDENTITY, Distributed, FunctionalSpec, MaxNorm, PointDelay, PointwiseMap,
                               check_mao_contraction, decompose, evaluate, rho0, scalar, select_T1_alpha,
                               validate_map)
from nsfde.measures import DelayMeasure, Segment

TAU = 1.0


def spec(*terms):
    return FunctionalSpec(tuple(terms), TAU)


def uniform(c, lo=-1.0, hi=0.0):
    return DelayMeasure.uniform_density(c, lo, hi, tau=TAU)


def test_evaluate_worked_values():
    assert float(evaluate(spec(PointDelay(0.0, scalar(0.5))), Segment.constant(2.0, TAU, 0.01))[0]) == 1.0
    assert float(evaluate(spec(Distributed(uniform(2.0))), Segment.constant(1.0, TAU, 0.01))[0]) == pytest.approx(2.0)
    seg = Segment.from_function(lambda s: s + 1.0, TAU, 0.01)
    assert float(evaluate(spec(MaxNorm(1.0, (-1.0, 0.0))), seg)[0]) == pytest.approx(1.0)


def test_max_norm_includes_off_grid_window_ends():
    seg = Segment.from_function(lambda s: -3.0 * s, TAU, 0.1)
    val = float(evaluate(spec(MaxNorm(1.0, (-0.75, -0.25))), seg)[0])
    assert val == pytest.approx(2.25)


def test_rho0_worked_values():
    D = spec(Distributed(uniform(2.0)))
    assert rho0(D, 0.25) == pytest.approx(0.5)
    assert rho0(D, 1.0) == pytest.approx(2.0)
    assert rho0(spec(), 0.7) == 0.0
    eps = 0.5
    D = spec(PointDelay(0.0, scalar(1 - eps)), Distributed(uniform(1.0)))
    for s in (0.0, 0.1, 0.3, 0.5):
        assert rho0(D, s) == pytest.approx(0.5 + s)


def test_rho0_point_delay_step():
    D = spec(PointDelay(-0.4, scalar(3.0)))
    assert rho0(D, 0.39) == 0.0
    assert rho0(D, 0.4) == pytest.approx(3.0)


def test_mao_contraction_examples():
    ok = check_mao_contraction(spec(MaxNorm(0.9, (-1.0, 0.0))))
    assert ok.holds and ok.kappa == pytest.approx(0.9)
    assert not check_mao_contraction(spec(MaxNorm(1.0, (-1.0, 0.0)))).holds
    bad = check_mao_contraction(spec(Distributed(uniform(2.0))))
    assert not bad.holds and bad.kappa == pytest.approx(2.0)


def test_decompose_splits_far_delays():
    dec = decompose(spec(PointDelay(-1.0, scalar(3.0)), PointDelay(0.0, scalar(0.2))))
    assert dec.delta_gap == pytest.approx(1.0)
    assert [t.lag for t in dec.D0.terms] == [-1.0]
    assert dec.k0 == pytest.approx(0.2)


def test_decompose_max_window_away_from_zero():
    dec = decompose(spec(MaxNorm(25.0, (-1.0, -0.5))))
    assert len(dec.D0.terms) == 1 and not dec.D1.terms
    assert dec.k0 == 0.0
    assert dec.delta_gap == pytest.approx(0.5)


def test_decompose_atomic_failure_names_term():
    term = PointDelay(0.0, scalar(1.5))
    with pytest.raises(CertificationError) as info:
        decompose(spec(term))
    assert term in info.value.offending


def bisect(fn, lo, hi, n=200):
    for _ in range(n):
        mid = 0.5 * (lo + hi)
        if fn(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_select_T1_quadratic_case():
    dec = decompose(spec())
    sch = select_T1_alpha(dec, 1.0, 0.5)
    bound = (1 - 0.25) ** 2 / (2 * 1.25)
    root = bisect(lambda t: 2 * t * (t + 4) - bound, 0.0, 1.0)
    assert sch.alpha == pytest.approx(0.625)
    assert sch.T1 <= root and sch.T1 == pytest.approx(root, rel=1e-3)
    assert sch.T1 == pytest.approx(0.02793, abs=1e-5)
    # gamma = k^2/alpha + 2 K T1 (T1+4)/(1-alpha) sits just under the quadratic bound
    assert sch.gamma == pytest.approx(bound / 0.375, rel=1e-3)
    assert sch.gamma < 1


def test_select_T1_without_lipschitz():
    dec = decompose(spec(PointDelay(-1.0, scalar(2.0))))
    sch = select_T1_alpha(dec, 0.0, 0.5)
    assert sch.gamma == 0.0 and sch.T1 == pytest.approx(dec.delta_gap)


def test_select_T1_with_atom_at_zero():
    D = spec(PointDelay(0.0, scalar(0.5)), Distributed(uniform(1.0)))
    dec = decompose(D)
    sch = select_T1_alpha(dec, 0.0, 0.6)
    assert rho0(D, sch.T1) < 0.6
    assert sch.T1 <= 0.1 + 1e-12
    with pytest.raises(SelectionError):
        select_T1_alpha(dec, 1.0, 0.5)


def test_select_T1_respects_grid():
    dec = decompose(spec(Distributed(uniform(0.3))))
    sch = select_T1_alpha(dec, 1.0, 0.5, grid_step=0.01)
    assert sch.T1 == pytest.approx(0.02)
    assert sch.gamma < 1


def random_spec(rng):
    terms = []
    for _ in range(rng.integers(1, 4)):
        kind = rng.integers(3)
        if kind == 0:
            terms.append(PointDelay(-float(rng.uniform(0, 1)), scalar(rng.normal())))
        elif kind == 1:
            lo = -float(rng.uniform(0.2, 1.0))
            terms.append(Distributed(DelayMeasure.uniform_density(float(rng.normal()), lo, tau=TAU),
                                     PointwiseMap("tanh", c=float(rng.uniform(0.1, 2)))))
        else:
            a = float(rng.uniform(0.3, 1.0))
            terms.append(MaxNorm(float(rng.uniform(0, 1)), (-a, -a * float(rng.uniform(0, 0.9)))))
    return spec(*terms)


def test_rho0_bounds_differences_of_agreeing_segments(rng):
    """|D(phi1) - D(phi2)| <= rho0(s) sup|phi1 - phi2| when the segments agree on [-tau, -s]."""
    h = 0.01
    nodes = Segment.constant(0.0, TAU, h).nodes
    for _ in range(300):
        D = random_spec(rng)
        s = float(rng.uniform(0, 1))
        base = rng.normal(size=nodes.size).cumsum() * 0.1
        bump = rng.normal(size=nodes.size) * (nodes > -s)
        bump[nodes <= -s + h] = 0.0
        seg1 = Segment(TAU, h, base)
        seg2 = Segment(TAU, h, base + bump)
        diff = abs(float(evaluate(D, seg1)[0] - evaluate(D, seg2)[0]))
        assert diff <= rho0(D, s) * np.max(np.abs(bump)) + 1e-10


def test_rho0_monotone_and_matches_kappa(rng):
    for _ in range(100):
        D = random_spec(rng)
        vals = [rho0(D, s) for s in np.linspace(0, TAU, 21)]
        assert np.all(np.diff(vals) >= -1e-12)
        assert vals[-1] == pytest.approx(check_mao_contraction(D).kappa)


@given(c=st.floats(0.01, 5.0))
@settings(max_examples=20, deadline=None)
def test_declared_map_constants_dominate_samples(c):
    for h in (PointwiseMap("tanh", c=c), PointwiseMap("affine", a=-c, b=0.3), IDENTITY):
        lip, excess = validate_map(h, n_pairs=2000)
        assert lip <= h.lipschitz * (1 + 1e-6)
        assert excess <= 1e-12


def test_literal_round_trip():
    D = spec(PointDelay(-0.5, PointwiseMap("affine", a=2.0, b=0.1)), Distributed(uniform(0.3)),
             MaxNorm(0.4, (-1.0, -0.2)))
    back = FunctionalSpec.from_literal(D.to_literal(), TAU)
    seg = Segment.from_function(np.sin, TAU, 0.05)
    assert np.allclose(evaluate(back, seg), evaluate(D, seg))


def test_compiled_functional_needs_history():
    comp = spec(PointDelay(-0.5, IDENTITY)).compile(0.1)
    X = np.zeros((1, 30, 1))
    with pytest.raises(SupportError):
        comp(X, np.array([2]))
