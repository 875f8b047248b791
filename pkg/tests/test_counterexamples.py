import math

import numpy as np
import pytest
from scipy import stats

from nsfde.counterexamples import (EpsilonFamily, epsilon_sweep, maxtype_witness, qv_witness, realized_qv,
                                   reflection_probability)
from nsfde.errors import InapplicableError
from nsfde.functionals import rho0
from nsfde.measures import DelayMeasure, Segment
from nsfde.picard import sample_brownian

W = DelayMeasure.uniform_density(1.0, -1.0, tau=1.0)


def test_smooth_candidate_is_flagged():
    t = np.linspace(0.0, 1.0, 4001)
    rep = qv_witness(t * t, sigma=1.0, T=1.0)
    assert rep.ratio == pytest.approx(0.25, abs=1e-3)
    assert rep.verdict == "smooth" and rep.mismatch
    assert rep.qv_fine < 1e-3 and rep.target == 1.0


def test_brownian_candidate_is_consistent():
    sigma = 0.8
    bp = sample_brownian(1, 1e-4, 1.0, seed=4)
    rep = qv_witness(sigma * bp.values[0, :, 0], sigma=sigma, T=1.0)
    assert 0.8 <= rep.ratio <= 1.25
    assert rep.verdict == "brownian" and rep.consistent


def test_qv_needs_noise():
    with pytest.raises(InapplicableError):
        qv_witness(np.zeros(9), sigma=0.0, T=1.0)


def test_realized_qv_of_line():
    assert realized_qv(np.linspace(0, 2, 11)) == pytest.approx(0.4)


def test_family_profiles():
    fam = EpsilonFamily(W)
    p1 = fam.problem(1.0, lambda s: 1.0, 1.0)
    for s in (0.0, 0.25, 0.75):
        assert rho0(p1.D, s) == pytest.approx(s)
    p_half = fam.problem(0.5, lambda s: 1.0, 1.0)
    assert rho0(p_half.D, 0.2) == pytest.approx(0.7)
    p3 = fam.problem(3.0, lambda s: 1.0, 1.0)
    assert rho0(p3.D, 0.9) == pytest.approx(0.3)
    assert float(p3.g.offset[0]) == pytest.approx(0.5 / 3)


def test_sweep_solves_nonzero_eps():
    rows = epsilon_sweep([1.0, 3.0, -1.0], EpsilonFamily(W), T=1.0, h=0.01, seed=1)
    for r in rows:
        assert r.exists and r.witness == "solved"
        assert r.residual <= 1e-6
    assert rows[0].rho0_profile[-1] == pytest.approx(1.0)


def test_reflection_probability_oracle():
    assert reflection_probability(0.0, 1.0) == 1.0
    assert reflection_probability(1.0, 1.0) == pytest.approx(2 * (1 - stats.norm.cdf(1.0)))
    assert reflection_probability(1.0, 16.0) == pytest.approx(0.8026, abs=1e-4)


def test_maxtype_level_zero_always_exceeded():
    rep = maxtype_witness(1.0, 1.0, (0.0, 0.0), 1.0, n_paths=500, seed=0)
    assert np.all(rep.frequency == 1.0) and np.all(rep.reference == 1.0)


def test_maxtype_matches_reflection_principle():
    seg = Segment.constant(0.5, 1.0, 0.01)
    rep = maxtype_witness(1.0, 1.0, seg, 1.0, n_paths=3000, seed=5)
    assert rep.A == pytest.approx(1.0)
    assert np.all(rep.within(3.0))
    assert rep.monotone
    assert np.all((rep.frequency >= 0) & (rep.frequency <= 1))


def test_maxtype_inapplicable_below_one():
    with pytest.raises(InapplicableError):
        maxtype_witness(0.9, 1.0, (0.0, 0.0), 1.0, n_paths=10)
    with pytest.raises(InapplicableError):
        maxtype_witness(1.0, 0.0, (0.0, 0.0), 1.0, n_paths=10)


def test_maxtype_csv(tmp_path):
    rep = maxtype_witness(2.0, 0.5, (0.1, 0.2), 2.0, n_paths=50, seed=3)
    path = tmp_path / "w.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "path_id,max_B" and len(lines) == 51
    assert rep.A == pytest.approx(0.1 + 2.0 * 0.2)
    assert rep.clock[-1] == pytest.approx(0.5 * 2.0 * 16)
    assert math.isfinite(rep.path_max.max())
