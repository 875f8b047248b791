"""Numerical witnesses for neutral equations that admit no solution.

Two mechanisms are covered:

* ``d(eps X(t) + int w(s) h(X(t+s)) ds) = f(X_t) dt + sigma dB(t)``.  For
  ``eps = 0`` the left side is a smoothed functional of X while the right side
  carries Brownian roughness.  The witness measures realised quadratic
  variation on two meshes and runs Picard iteration that never settles.
* ``d(X(t) + kappa max |X(t+s)|) = g(X_t) dB(t)`` with ``kappa >= 1``.  Any
  solution would keep the martingale part below a fixed level ``A``; a time
  changed Brownian motion crosses that level with probability tending to one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import CertificationError, InapplicableError, SelectionError
from .functionals import (Distributed, FunctionalSpec, PointDelay, PointwiseMap, auto_mu_param, decompose,
                          rho0, scalar)
from .measures import DelayMeasure, Segment
from .picard import Problem, _generator, sample_brownian, schedule_for, solve

SMOOTH_RATIO = 0.35
BROWNIAN_RATIO = (0.8, 1.25)


# ---------------------------------------------------------------------------
# quadratic variation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QVReport:
    qv_coarse: float
    qv_fine: float
    ratio: float
    target: float
    verdict: str  # "smooth", "brownian" or "inconclusive"
    consistent: bool  # realised roughness compatible with the demanded sigma^2 T

    @property
    def mismatch(self):
        return not self.consistent


def realized_qv(values: np.ndarray) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sum(np.diff(v, axis=0) ** 2))


def qv_witness(candidate: np.ndarray, sigma: float, T: float, refine: int = 4,
               smooth_ratio: float = SMOOTH_RATIO, brownian_ratio: tuple = BROWNIAN_RATIO) -> QVReport:
    """Compare realised QV of ``candidate`` on its own mesh and on every ``refine``-th node.

    ``candidate`` is sampled on the fine mesh ``h / refine`` over ``[0, T]``.
    """
    if sigma == 0:
        raise InapplicableError("the quadratic-variation witness needs sigma != 0")
    c = np.asarray(candidate, dtype=float)
    if (c.shape[0] - 1) % refine:
        raise ValueError("fine mesh must contain a whole number of coarse steps")
    qv_fine = realized_qv(c)
    qv_coarse = realized_qv(c[::refine])
    ratio = qv_fine / qv_coarse if qv_coarse > 0 else 0.0
    target = sigma * sigma * T
    if ratio <= smooth_ratio:
        verdict = "smooth"
    elif brownian_ratio[0] <= ratio <= brownian_ratio[1]:
        verdict = "brownian"
    else:
        verdict = "inconclusive"
    consistent = verdict == "brownian" and abs(qv_fine - target) <= 0.5 * target
    return QVReport(qv_coarse, qv_fine, ratio, target, verdict, consistent)


# ---------------------------------------------------------------------------
# epsilon family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpsilonFamily:
    """Data of ``d(eps X + int w h(X(t+s)) ds) = f dt + sigma dB`` on ``[-tau, 0]``."""

    w: DelayMeasure
    h: PointwiseMap = PointwiseMap("tanh", c=1.0)
    sigma: float = 0.5
    f: FunctionalSpec | None = None
    tau: float = 1.0

    def drift(self):
        return self.f if self.f is not None else FunctionalSpec((), self.tau)

    def problem(self, eps: float, psi, T: float) -> Problem:
        """Neutral form ``X - D(X_t)``: undivided for ``eps`` in (0, 2), divided by ``eps`` otherwise."""
        tau = self.tau
        f = self.drift()
        if 0.0 <= eps < 2.0:
            terms = (PointDelay(0.0, scalar(1.0 - eps)), Distributed(self.w.scaled(-1.0), self.h))
            D = FunctionalSpec(terms, tau)
            g = FunctionalSpec((), tau, 1, [self.sigma])
        else:
            D = FunctionalSpec((Distributed(self.w.scaled(-1.0 / eps), self.h),), tau)
            f = FunctionalSpec(tuple(_scale_term(t, 1.0 / eps) for t in f.terms), tau, 1, f.offset / eps)
            g = FunctionalSpec((), tau, 1, [self.sigma / eps])
        return Problem(D, f, g, psi, T)


def _scale_term(term, c):
    if isinstance(term, PointDelay):
        m = term.map
        return PointDelay(term.lag, PointwiseMap(m.kind, a=m.a * c, b=m.b * c, c=m.c * c) if m.kind != "identity"
                          else scalar(c))
    if isinstance(term, Distributed):
        return Distributed(term.measure.scaled(c), term.map)
    raise CertificationError("max-type drift terms are not supported in the epsilon family")


@dataclass
class SweepRow:
    eps: float
    rho0_profile: np.ndarray
    exists: bool
    witness: object
    residual: float | None = None
    T1: float | None = None


def divergence_run(problem: Problem, h: float, seed: int, max_iter: int = 200, path_index: int = 0):
    """Picard on the whole horizon with no contraction guarantee; returns the ensemble."""
    bp = sample_brownian(1, h, problem.T, seed, n_paths=1, first_path=path_index)
    return solve(problem, bp, tol=0.0, max_iter=max_iter, T1=problem.T, allow_divergence=True)


@dataclass(frozen=True)
class NonExistenceWitness:
    min_residual: float
    residual_floor: float
    persistent: bool
    qv: QVReport
    sup_diffs: np.ndarray = field(repr=False)

    @property
    def holds(self):
        return self.persistent and self.qv.verdict == "smooth" and self.qv.target > 0


def smooth_side(family: EpsilonFamily, X: np.ndarray, h: float) -> np.ndarray:
    """``F(t) = int w h(X(t+s)) ds - int w h(psi(s)) ds - int_0^t f(X_s) ds`` on the grid of ``X``.

    ``X`` covers ``[-tau, T]`` with shape (n_hist + N + 1,).
    """
    tau = family.tau
    n_hist = round(tau / h)
    Xa = np.asarray(X, dtype=float).reshape(1, -1, 1)
    N = Xa.shape[1] - n_hist - 1
    idx = np.arange(n_hist, n_hist + N + 1)
    S = FunctionalSpec((Distributed(family.w, family.h),), tau).compile(h)(Xa, idx)[0, :, 0]
    fv = family.drift().compile(h)(Xa, idx[:-1])[0, :, 0]
    drift = np.concatenate([[0.0], np.cumsum(fv) * h])
    return S - S[0] - drift


def epsilon_zero_witness(family: EpsilonFamily, psi, T: float, h: float, seed: int = 0,
                         max_iter: int = 200, refine: int = 4) -> NonExistenceWitness:
    """Picard divergence at mesh ``h`` plus the QV test of the smooth side on meshes ``h`` and ``h/refine``."""
    prob = family.problem(0.0, psi, T)
    run = divergence_run(prob, h, seed, max_iter)
    diffs = run.intervals[0].sup_diffs[:, 0]
    floor = 0.5 * abs(family.sigma) * math.sqrt(h)
    fine = h / refine
    run_fine = divergence_run(prob, fine, seed, max_iter=max(2, min(max_iter, 20)))
    F = smooth_side(family, run_fine.X[0, :, 0], fine)
    qv = qv_witness(F, family.sigma, T, refine)
    return NonExistenceWitness(float(np.min(diffs)), floor, bool(np.min(diffs) > floor), qv, diffs)


def epsilon_sweep(eps_values, family: EpsilonFamily | None = None, psi=None, T: float = 1.0,
                  h: float = 0.01, seed: int = 0, n_profile: int = 11, tol: float = 1e-8) -> list[SweepRow]:
    """Existence verdict, non-atomicity profile and a solved path (or a witness) for each eps."""
    family = family or EpsilonFamily(DelayMeasure.uniform_density(1.0, -1.0, tau=1.0))
    psi = psi if psi is not None else (lambda s: 1.0)
    s_grid = np.linspace(0.0, family.tau, n_profile)
    rows = []
    for eps in eps_values:
        eps = float(eps)
        prob = family.problem(eps, psi, T)
        profile = np.array([rho0(prob.D, s) for s in s_grid])
        if eps == 0.0:
            rows.append(SweepRow(eps, profile, False, epsilon_zero_witness(family, psi, T, h, seed)))
            continue
        dec = decompose(prob.D)
        try:
            _, sched = schedule_for(prob, auto_mu_param(dec.k0), h)
        except SelectionError as err:
            rows.append(SweepRow(eps, profile, True, f"exists; no admissible T1 on mesh {h:g}: {err}"))
            continue
        bp = sample_brownian(1, h, T, seed)
        sol = solve(prob, bp, tol=tol, schedule=sched)
        rows.append(SweepRow(eps, profile, True, "solved", sol.max_residual, sched.T1))
    return rows


# ---------------------------------------------------------------------------
# max-type functional
# ---------------------------------------------------------------------------

def reflection_probability(A: float, var: float) -> float:
    """``P(max_{[0, var]} W > A) = 2 (1 - Phi(A / sqrt(var)))`` for ``A >= 0``."""
    if A <= 0:
        return 1.0
    return float(2.0 * special.ndtr(-A / math.sqrt(var)))


@dataclass(frozen=True)
class MartingaleBoundReport:
    A: float
    clock: np.ndarray  # delta_lb * T on the ladder
    frequency: np.ndarray
    stderr: np.ndarray
    reference: np.ndarray
    monotone: bool
    path_max: np.ndarray = field(repr=False)  # per-path discrete max of the time-changed motion
    n_paths: int = 0

    def within(self, k: float = 3.0) -> np.ndarray:
        se = np.sqrt(self.reference * (1 - self.reference) / self.n_paths)
        return np.abs(self.frequency - self.reference) <= k * np.maximum(se, 1e-300)

    def to_text(self):
        lines = [f"A = {self.A:.17g}", f"n_paths = {self.n_paths}"]
        for c, fr, se, ref in zip(self.clock, self.frequency, self.stderr, self.reference):
            lines.append(f"clock = {c:.17g} frequency = {fr:.17g} stderr = {se:.17g} reference = {ref:.17g}")
        lines.append(f"monotone = {self.monotone}")
        return "\n".join(lines) + "\n"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path_id", "max_B"])
            for i, v in enumerate(self.path_max):
                w.writerow([i, "%.17g" % v])


def maxtype_witness(kappa: float, delta_lb: float, psi, T: float, n_paths: int = 10_000, seed: int = 0,
                    ladder=(1, 4, 16), steps_per_unit: int = 64) -> MartingaleBoundReport:
    """Exceedance of ``A = psi(0) + kappa max|psi|`` by Brownian motion run to clock ``delta_lb * T * k``.

    Each step uses the exact Brownian-bridge crossing probability
    ``exp(-2 (A - x)(A - y) / dt)`` so the frequency estimates the continuous maximum.
    """
    if kappa < 1:
        raise InapplicableError("kappa < 1 satisfies the contraction condition; a solution exists")
    if not delta_lb > 0:
        raise InapplicableError("the diffusion lower bound delta must be positive")
    if isinstance(psi, Segment):
        psi0, psimax = float(psi.values[-1, 0]), psi.sup_norm()
    else:
        psi0, psimax = float(psi[0]), float(psi[1])
    A = psi0 + kappa * psimax
    ladder = np.asarray(sorted(ladder), dtype=float)
    clock = delta_lb * T * ladder
    horizon = clock[-1]
    n_steps = max(1, int(math.ceil(horizon * steps_per_unit)))
    dt = horizon / n_steps
    marks = np.minimum(np.ceil(clock / dt - 1e-9).astype(int), n_steps)
    first_cross = np.full(n_paths, np.inf)
    path_max = np.empty(n_paths)
    for i in range(n_paths):
        gen = _generator(seed, i)
        z = gen.standard_normal(n_steps) * math.sqrt(dt)
        u = gen.random(n_steps)
        b = np.concatenate([[0.0], np.cumsum(z)])
        x, y = b[:-1], b[1:]
        gap = np.maximum(A - x, 0.0) * np.maximum(A - y, 0.0)
        cross = (np.maximum(x, y) >= A) | (u < np.exp(-2.0 * gap / dt))
        hit = np.flatnonzero(cross)
        if hit.size:
            first_cross[i] = hit[0] + 1
        path_max[i] = b.max()
    freq = np.array([np.mean(first_cross <= m) for m in marks])
    se = np.sqrt(freq * (1 - freq) / n_paths)
    ref = np.array([reflection_probability(A, c) for c in clock])
    return MartingaleBoundReport(A, clock, freq, se, ref, bool(np.all(np.diff(freq) >= 0)), path_max, n_paths)
