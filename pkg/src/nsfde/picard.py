"""Pathwise Picard construction of neutral SFDE solutions on a uniform grid.

The integral form

    X(t) - D(X_t) = X(0) - D(X_0) + int_0^t f(X_s) ds + int_0^t g(X_s) dB(s)

is solved interval by interval.  On each interval of length ``T1`` the right
side and the neutral term are evaluated on the previous iterate, so every
sweep is explicit.  Drift uses left-point rectangles and the stochastic
integral uses left-point Ito sums on the path grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import DivergenceError, InsufficientDataError, SupportError
from .functionals import (FunctionalSpec, NeutralDecomposition, PicardSchedule, decompose, select_T1_alpha,
                          split_instant_linear)
from .measures import Segment

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200


# ---------------------------------------------------------------------------
# Brownian increments
# ---------------------------------------------------------------------------

def _generator(seed: int, path_index: int) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, path_index)``; the Philox counter indexes steps."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path_index & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class BrownianPath:
    """Brownian increments for one or more paths: ``increments`` has shape (P, N, m)."""

    grid_step: float
    horizon: float
    seed: int
    increments: np.ndarray = field(repr=False)
    first_path: int = 0

    @property
    def n_paths(self):
        return self.increments.shape[0]

    @property
    def n_steps(self):
        return self.increments.shape[1]

    @property
    def dim(self):
        return self.increments.shape[2]

    @property
    def values(self):
        """B on the grid ``0, h, ..., T`` with shape (P, N + 1, m)."""
        P, _, m = self.increments.shape
        return np.concatenate([np.zeros((P, 1, m)), np.cumsum(self.increments, axis=1)], axis=1)

    @property
    def times(self):
        return self.grid_step * np.arange(self.n_steps + 1)

    def coarsen(self, factor: int) -> "BrownianPath":
        """Same Brownian paths on a grid ``factor`` times coarser."""
        P, N, m = self.increments.shape
        if N % factor:
            raise ValueError("factor must divide the number of steps")
        inc = self.increments.reshape(P, N // factor, factor, m).sum(axis=2)
        return BrownianPath(self.grid_step * factor, self.horizon, self.seed, inc, self.first_path)

    def subset(self, paths) -> "BrownianPath":
        return BrownianPath(self.grid_step, self.horizon, self.seed, self.increments[paths], self.first_path)


def sample_brownian(m: int, h: float, T: float, seed: int, n_paths: int = 1, first_path: int = 0) -> BrownianPath:
    """Brownian increments with variance ``h``, reproducible per ``(seed, path index)``."""
    if h <= 0 or T <= 0:
        raise ValueError("grid step and horizon must be positive")
    n_steps = round(T / h)
    if abs(n_steps * h - T) > 1e-9 * T:
        raise ValueError(f"grid step {h} does not divide horizon {T}")
    scale = math.sqrt(h)
    inc = np.empty((n_paths, n_steps, m))
    for i in range(n_paths):
        inc[i] = _generator(seed, first_path + i).standard_normal((n_steps, m)) * scale
    return BrownianPath(float(h), float(T), int(seed), inc, first_path)


# ---------------------------------------------------------------------------
# problem and results
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """Neutral SFDE data.  ``g`` has output dimension ``dim * noise_dim`` (row-major d x m)."""

    D: FunctionalSpec
    f: FunctionalSpec
    g: FunctionalSpec
    psi: Callable | Segment
    T: float
    noise_dim: int = 1

    @property
    def tau(self):
        return self.D.tau

    @property
    def dim(self):
        return self.D.dim

    def history(self, h: float) -> Segment:
        if isinstance(self.psi, Segment):
            if abs(self.psi.grid_step - h) > 1e-12:
                raise ValueError("initial segment grid does not match the solver grid")
            return self.psi
        return Segment.from_function(self.psi, self.tau, h)

    def lipschitz(self) -> float:
        """Common Lipschitz constant of f and g."""
        return max(self.f.lipschitz(), self.g.lipschitz())


def rearrange_instant(problem: Problem) -> Problem:
    """Equivalent problem with the linear lag-0 part of ``D`` divided out.

    With ``D(phi) = a phi(0) + R(phi)`` the equation ``X - D(X_t) = ...`` reads
    ``(1 - a) X(t) - R(X_t) = ...``; dividing by ``1 - a`` gives a neutral term
    ``R / (1 - a)`` with drift and diffusion scaled alike.  The initial segment
    is unchanged, so the rearranged solution solves the original equation.
    """
    a, rest = split_instant_linear(problem.D)
    if a == 0.0:
        return problem
    if abs(1.0 - a) < 1e-12:
        raise SupportError("the lag-0 coefficient equals 1; the equation cannot be rearranged")
    c = 1.0 / (1.0 - a)
    return replace(problem, D=rest.scaled(c), f=problem.f.scaled(c), g=problem.g.scaled(c))


@dataclass
class IntervalReport:
    start: int
    n_steps: int
    iterations: int
    sup_diffs: np.ndarray  # (iterations, P): sup over nodes of |X^n - X^{n-1}|
    residual: np.ndarray  # (P,): integral-equation residual of the accepted iterate
    converged: bool


@dataclass
class PathEnsemble:
    """Solution paths on ``[-tau, T]`` with the neutral companion ``Y = X - D(X_t)`` on ``[0, T]``."""

    grid_step: float
    tau: float
    T: float
    X: np.ndarray  # (P, n_hist + N + 1, d)
    Y: np.ndarray  # (P, N + 1, d)
    brownian: BrownianPath
    intervals: list = field(default_factory=list)
    schedule: PicardSchedule | None = None

    @property
    def n_hist(self):
        return round(self.tau / self.grid_step)

    @property
    def n_paths(self):
        return self.X.shape[0]

    @property
    def times(self):
        n = self.X.shape[1]
        return self.grid_step * (np.arange(n) - self.n_hist)

    @property
    def forward_times(self):
        return self.grid_step * np.arange(self.Y.shape[1])

    def forward(self):
        """X on ``[0, T]``, shape (P, N + 1, d)."""
        return self.X[:, self.n_hist:]

    @property
    def iteration_counts(self):
        return [r.iterations for r in self.intervals]

    @property
    def residuals(self):
        return np.array([float(np.max(r.residual)) for r in self.intervals])

    @property
    def max_residual(self):
        return float(max((np.max(r.residual) for r in self.intervals), default=0.0))

    def path(self, i: int) -> "PathEnsemble":
        return PathEnsemble(self.grid_step, self.tau, self.T, self.X[i:i + 1], self.Y[i:i + 1],
                            self.brownian.subset(slice(i, i + 1)),
                            [IntervalReport(r.start, r.n_steps, r.iterations, r.sup_diffs[:, i:i + 1],
                                            r.residual[i:i + 1], r.converged) for r in self.intervals],
                            self.schedule)

    def to_csv(self, path, paths=None):
        """Write (path_id, t, X_1..X_d, Y_1..Y_d) on the forward grid."""
        d = self.X.shape[2]
        ids = range(self.n_paths) if paths is None else paths
        t = self.forward_times
        fwd = self.forward()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path_id", "t"] + [f"X_{i + 1}" for i in range(d)] + [f"Y_{i + 1}" for i in range(d)])
            for p in ids:
                pid = self.brownian.first_path + p
                for j in range(t.size):
                    w.writerow([pid, _fmt(t[j])] + [_fmt(v) for v in fwd[p, j]] + [_fmt(v) for v in self.Y[p, j]])


SolutionPath = PathEnsemble


def _fmt(x):
    return "%.17g" % x


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------

class _Context:
    def __init__(self, problem: Problem, h: float):
        self.h = h
        self.D = problem.D.compile(h)
        self.f = problem.f.compile(h)
        self.g = problem.g.compile(h)
        self.d = problem.dim
        self.m = problem.noise_dim
        if problem.g.dim != self.d * self.m:
            raise ValueError(f"g must have output dimension d*m = {self.d * self.m}, got {problem.g.dim}")
        if problem.f.dim != self.d:
            raise ValueError("f must have the state dimension")

    def increments(self, X, left, dB):
        fv = self.f(X, left)
        gv = self.g(X, left).reshape(X.shape[0], left.size, self.d, self.m)
        return fv * self.h + np.einsum("pndm,pnm->pnd", gv, dB)


def picard_interval(X: np.ndarray, Y: np.ndarray, start: int, n_steps: int, ctx: _Context, dB: np.ndarray,
                    n_hist: int, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                    allow_divergence: bool = False) -> IntervalReport:
    """Extend ``X`` (in place) from forward node ``start`` by ``n_steps`` nodes.

    ``X`` has shape (P, n_hist + N + 1, d) and is valid up to node ``n_hist + start``;
    ``Y[:, start]`` must hold ``X - D(X_t)`` there.  The iterate starts from the constant
    extension and stops once successive iterates differ by at most ``tol`` at every node.
    """
    a = n_hist + start
    left = np.arange(a, a + n_steps)
    nodes = left + 1
    y0 = Y[:, start][:, None, :]
    dB_int = dB[:, start:start + n_steps]
    X[:, nodes] = X[:, a][:, None, :]
    diffs = []
    converged = False
    for _ in range(max_iter):
        new = y0 + ctx.D(X, nodes) + np.cumsum(ctx.increments(X, left, dB_int), axis=1)
        diff = np.max(np.linalg.norm(new - X[:, nodes], axis=2), axis=1)
        X[:, nodes] = new
        diffs.append(diff)
        if np.max(diff) <= tol:
            converged = True
            break
    sup_diffs = np.array(diffs)
    resid_vec = y0 + ctx.D(X, nodes) + np.cumsum(ctx.increments(X, left, dB_int), axis=1) - X[:, nodes]
    residual = np.max(np.linalg.norm(resid_vec, axis=2), axis=1)
    Y[:, start + 1:start + n_steps + 1] = X[:, nodes] - ctx.D(X, nodes)
    report = IntervalReport(start, n_steps, len(diffs), sup_diffs, residual, converged)
    if not converged and not allow_divergence:
        tail = np.max(sup_diffs, axis=1)
        raise DivergenceError(
            f"Picard iteration did not reach tol={tol:g} within {max_iter} sweeps "
            f"(last difference {tail[-1]:.3g})", sup_diffs=sup_diffs, residuals=residual)
    return report


def schedule_for(problem: Problem, mu_param: float = 0.5, h: float | None = None,
                 optimize_alpha: bool = False) -> tuple[NeutralDecomposition, PicardSchedule]:
    """Decompose ``D`` and choose ``T1``; the squared Lipschitz constant enters the quadratic condition."""
    dec = decompose(problem.D)
    sched = select_T1_alpha(dec, problem.lipschitz() ** 2, mu_param, grid_step=h, optimize_alpha=optimize_alpha)
    return dec, sched


def solve(problem: Problem, bp: BrownianPath, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          mu_param: float = 0.5, T1: float | None = None, allow_divergence: bool = False,
          schedule: PicardSchedule | None = None) -> PathEnsemble:
    """Chain Picard intervals of length ``T1`` over ``[0, T]`` for every path in ``bp``.

    ``T1`` is chosen by the contraction recipe unless given explicitly (explicit
    values skip the non-atomicity check and are meant for divergence experiments).
    """
    h = bp.grid_step
    n_total = round(problem.T / h)
    if n_total > bp.n_steps:
        raise ValueError("Brownian path shorter than the problem horizon")
    if bp.dim != problem.noise_dim:
        raise ValueError("Brownian dimension differs from the problem's noise dimension")
    if T1 is None:
        if schedule is None:
            _, schedule = schedule_for(problem, mu_param, h)
        T1 = schedule.T1
    n1 = max(1, round(T1 / h))
    if n1 * h > T1 + 1e-12:
        n1 = max(1, int(math.floor(T1 / h + 1e-9)))
    psi = problem.history(h)
    n_hist = psi.values.shape[0] - 1
    P, d = bp.n_paths, problem.dim
    X = np.empty((P, n_hist + n_total + 1, d))
    X[:, :n_hist + 1] = psi.values[None]
    Y = np.empty((P, n_total + 1, d))
    ctx = _Context(problem, h)
    Y[:, 0] = X[:, n_hist] - ctx.D(X, np.array([n_hist]))[:, 0]
    reports = []
    start = 0
    while start < n_total:
        steps = min(n1, n_total - start)
        reports.append(picard_interval(X, Y, start, steps, ctx, bp.increments, n_hist, tol, max_iter,
                                       allow_divergence))
        start += steps
    return PathEnsemble(h, problem.tau, problem.T, X, Y, bp, reports, schedule)


def method_of_steps_oracle(a: float, f_fn: Callable, g_fn: Callable, psi: Callable, tau: float, T: float,
                           bp: BrownianPath) -> np.ndarray:
    """Direct recursion for ``d(X(t) - a X(t - tau)) = f(X(t), X(t - tau)) dt + g(X(t), X(t - tau)) dB``.

    Scalar state and noise.  Returns X on ``[-tau, T]`` with shape (P, n_hist + N + 1).
    """
    h = bp.grid_step
    n_hist = round(tau / h)
    n = round(T / h)
    s = -tau + h * np.arange(n_hist + 1)
    s[-1] = 0.0
    hist = np.array([float(np.asarray(psi(v)).ravel()[0]) for v in s])
    P = bp.n_paths
    X = np.empty((P, n_hist + n + 1))
    X[:, :n_hist + 1] = hist
    dB = bp.increments[:, :, 0]
    Yv = X[:, n_hist] - a * X[:, 0]
    for j in range(n):
        cur = n_hist + j
        x0, xl = X[:, cur], X[:, cur - n_hist]
        Yv = Yv + f_fn(x0, xl) * h + g_fn(x0, xl) * dB[:, j]
        X[:, cur + 1] = Yv + a * X[:, cur + 1 - n_hist]
    return X


# ---------------------------------------------------------------------------
# contraction diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionReport:
    mean_sq: np.ndarray  # E[sup diff^2] per iteration
    ratio: float
    stderr: float
    gamma: float
    within_bound: bool
    n_paths: int

    def reference(self):
        """``gamma^n * C`` anchored at the first iteration."""
        n = np.arange(self.mean_sq.size)
        return self.mean_sq[0] * self.gamma ** n


def _fit_ratio(mean_sq: np.ndarray, floor: float = 1e-24) -> float:
    """Exponential of the least-squares slope of ``log mean_sq``; zero once differences vanish.

    Iterations below ``floor`` (absolute, or relative to the first difference) are
    rounding noise and are left out of the fit.
    """
    if mean_sq.size == 0 or mean_sq[0] <= floor:
        return 0.0
    keep = mean_sq > max(floor, 1e-20 * mean_sq[0])
    n = np.flatnonzero(keep).astype(float)
    if n.size < 2:
        return 0.0
    return float(math.exp(np.polyfit(n, np.log(mean_sq[keep]), 1)[0]))


def contraction_diagnostics(sup_diffs: np.ndarray, gamma: float, n_groups: int = 20) -> ContractionReport:
    """Geometric decay rate of ``E[sup |X^{n+1} - X^n|^2]`` with a grouped jackknife error.

    ``sup_diffs`` has shape (iterations, paths) and holds per-path sup-norm differences.
    """
    sup_diffs = np.asarray(sup_diffs, dtype=float)
    if sup_diffs.ndim != 2:
        raise InsufficientDataError("sup_diffs must have shape (iterations, paths)")
    if sup_diffs.shape[0] < 3 and not np.all(sup_diffs[-1] == 0):
        raise InsufficientDataError("contraction diagnostics need at least 3 recorded Picard iterations")
    sq = sup_diffs ** 2
    P = sq.shape[1]
    mean_sq = sq.mean(axis=1)
    ratio = _fit_ratio(mean_sq)
    g = min(n_groups, P)
    if g < 2:
        stderr = math.inf
    else:
        groups = np.array_split(np.arange(P), g)
        reps = []
        for grp in groups:
            keep = np.ones(P, dtype=bool)
            keep[grp] = False
            reps.append(_fit_ratio(sq[:, keep].mean(axis=1)))
        reps = np.array(reps)
        stderr = float(math.sqrt((g - 1) / g * np.sum((reps - reps.mean()) ** 2)))
    return ContractionReport(mean_sq, ratio, stderr, gamma, ratio <= gamma + 3 * stderr, P)


def diagnostics_csv(path, reports: list, gamma: float):
    """Write (interval_index, iteration, sup_diff_sq_mean, gamma_bound) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["interval_index", "iteration", "sup_diff_sq_mean", "gamma_bound"])
        for i, r in enumerate(reports):
            mean_sq = (r.sup_diffs ** 2).mean(axis=1)
            for n, v in enumerate(mean_sq):
                w.writerow([i, n + 1, _fmt(v), _fmt(mean_sq[0] * gamma ** n)])
