"""Exponential growth certificates and their Monte Carlo validation.

The p-th mean exponent is ``delta + beta1`` where ``delta`` is the positive root of

    F(delta) = int e^{(delta+beta1) s} mu(ds)
             + int_0^tau e^{-delta s} int_[-s,0] e^{beta1 u} lambda(du) ds
             + (e^{-delta tau} / delta) int e^{beta1 u} lambda(du)  = 1.

Swapping the order of integration collapses the last two terms to
``(1/delta) int e^{(delta+beta1) u} lambda(du)``, which is what
:func:`characteristic_value` evaluates in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .errors import (CertificationError, DegenerateError, InsufficientDataError, NoRootError,
                     RateUndefinedError)
from .functionals import Distributed, FunctionalSpec, MaxNorm, PointDelay, evaluate
from .measures import DelayMeasure, DensityPiece, HalfLineMeasure, cumulative_mass, exp_tilt_mass, reflect
from .renewal import RenewalLimit, renewal_asymptote

DELTA_LO = 1e-8
EPS_RANGE = (1e-3, 10.0)
EPS_POINTS = 40


# ---------------------------------------------------------------------------
# elementary constants and inequalities
# ---------------------------------------------------------------------------

def C_p(p: float) -> float:
    """Burkholder-type constant ``[p^{p+1} / (2 (p-1)^{p-1})]^{p/2}``."""
    return (p ** (p + 1) / (2.0 * (p - 1) ** (p - 1))) ** (p / 2.0)


def power_split_factor(p: float, eps: float) -> float:
    return (1.0 + eps ** (1.0 / (p - 1.0))) ** (p - 1.0)


def power_inequality_gap(a, b, p, eps):
    """``RHS - LHS`` of ``|a+b|^p <= (1+eps^{1/(p-1)})^{p-1} (|a|^p + |b|^p / eps)``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    c = (1.0 + np.asarray(eps, float) ** (1.0 / (np.asarray(p, float) - 1.0))) ** (np.asarray(p, float) - 1.0)
    return c * (np.abs(a) ** p + np.abs(b) ** p / eps) - np.abs(a + b) ** p


def square_inequality_gap(a, b, alpha):
    """``RHS - LHS`` of ``(a+b)^2 <= a^2/alpha + b^2/(1-alpha)``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return a * a / alpha + b * b / (1.0 - alpha) - (a + b) ** 2


@dataclass(frozen=True)
class BetaConstants:
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    beta6: float | None = None
    beta7: float | None = None

    def as_dict(self):
        return {f"beta{i}": getattr(self, f"beta{i}") for i in range(1, 8)}


def beta_constants(p: float, eps: float, C_f: float, C_g: float) -> BetaConstants:
    """``beta1 .. beta5``; the initial-data dependent ``beta6, beta7`` come from :func:`initial_betas`."""
    b1 = eps * p * (p - 1.0) / 2.0
    b2 = C_f / eps ** (p - 1.0)
    b3 = C_g * (p - 1.0) / eps ** ((p - 2.0) / 2.0)
    split = power_split_factor(p, eps)
    b4 = split / eps
    b5 = split * (b2 + b3) / b1
    return BetaConstants(b1, b2, b3, b4, b5)


def initial_betas(betas: BetaConstants, p: float, eps: float, C_D: float, mu: DelayMeasure,
                  lam: DelayMeasure, psi, D: FunctionalSpec) -> BetaConstants:
    """``beta6 = c y(0) + beta4 C_D + beta5`` and ``beta7 = beta6 + (beta4 |mu_e| + 2 tau |lambda_e|) |psi_e|``."""
    tau = mu.tau
    y0 = float(np.linalg.norm(psi.values[-1] - evaluate(D, psi))) ** p
    b6 = power_split_factor(p, eps) * y0 + betas.beta4 * C_D + betas.beta5
    s = psi.nodes
    psi_e = float(np.max(np.exp(-betas.beta1 * s) * np.linalg.norm(psi.values, axis=1) ** p))
    b7 = b6 + (betas.beta4 * exp_tilt_mass(mu, betas.beta1) + 2.0 * tau * exp_tilt_mass(lam, betas.beta1)) * psi_e
    return replace(betas, beta6=b6, beta7=b7)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthBounds:
    """First-power linear bounds ``|f(phi)| <= C_f + int nu |phi|`` and likewise for g and D."""

    C_f: float
    C_g: float
    C_D: float
    nu: DelayMeasure
    eta: DelayMeasure
    mu: DelayMeasure

    def __post_init__(self):
        for name in ("C_f", "C_g", "C_D"):
            if getattr(self, name) < 0:
                raise CertificationError(f"{name} must be nonnegative")
        for name in ("nu", "eta", "mu"):
            m = getattr(self, name)
            if not m.is_nonnegative():
                raise CertificationError(f"{name} must be a nonnegative scalar measure")

    @property
    def tau(self):
        return self.mu.tau

    def pth_power(self, p: float) -> "GrowthBounds":
        """Bounds of the form ``|f|^p <= C + int nu |phi|^p`` implied by the first-power ones.

        Jensen gives ``(int nu |phi|)^p <= |nu|^{p-1} int nu |phi|^p``; a nonzero
        constant is split off with ``(a + b)^p <= 2^{p-1} (a^p + b^p)``.
        """
        def lift(C, m):
            mass = m.total_mass()
            if m.is_zero or mass == 0:
                return C ** p, m
            if C == 0:
                return 0.0, m.scaled(mass ** (p - 1.0))
            c = 2.0 ** (p - 1.0)
            return c * C ** p, m.scaled(c * mass ** (p - 1.0))

        C_f, nu = lift(self.C_f, self.nu)
        C_g, eta = lift(self.C_g, self.eta)
        C_D, mu = lift(self.C_D, self.mu)
        return GrowthBounds(C_f, C_g, C_D, nu, eta, mu)


def _linear_bound(spec: FunctionalSpec, tau: float) -> tuple[float, DelayMeasure]:
    if spec.dim != 1:
        raise CertificationError("automatic bounds are derived for scalar functionals only")
    C = float(np.linalg.norm(spec.offset))
    m = DelayMeasure.zero(tau)
    for t in spec.terms:
        if isinstance(t, MaxNorm):
            raise CertificationError("max-type terms admit no bound of the form C + int mu |phi|", (t,))
        c0, c1 = t.map.growth(spec.dim)
        if isinstance(t, PointDelay):
            C += c0
            if c1:
                m = m + DelayMeasure.dirac(t.lag, c1, tau)
        elif isinstance(t, Distributed):
            tv = t.measure.total_variation()
            C += c0 * tv
            if c1:
                m = m + t.measure.with_tau(tau).abs().scaled(c1)
    return C, m


def derive_bounds(D: FunctionalSpec, f: FunctionalSpec, g: FunctionalSpec) -> GrowthBounds:
    """Read ``(C, measure)`` bounds off term metadata: ``|h(x)| <= c0 + c1 |x|`` per term."""
    tau = D.tau
    C_f, nu = _linear_bound(f, tau)
    C_g, eta = _linear_bound(g, tau)
    C_D, mu = _linear_bound(D, tau)
    return GrowthBounds(C_f, C_g, C_D, nu, eta, mu)


def _random_histories(P, n_hist, h, rng):
    """Mixture of smooth, rough and spiky scalar histories, shape (P, n_hist + 1, 1)."""
    s = -h * np.arange(n_hist, -1, -1)
    out = np.empty((P, n_hist + 1))
    kind = rng.integers(0, 3, size=P)
    scale = 10.0 ** rng.uniform(-2, 2, size=P)
    walk = np.cumsum(rng.normal(size=(P, n_hist + 1)), axis=1) * math.sqrt(h)
    freq = rng.uniform(0, 10, size=(P, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(P, 1))
    smooth = np.sin(freq * s[None, :] + phase) + rng.normal(size=(P, 1))
    spike = np.zeros((P, n_hist + 1))
    spike[np.arange(P), rng.integers(0, n_hist + 1, size=P)] = rng.normal(size=P) * 5
    out[kind == 0] = walk[kind == 0]
    out[kind == 1] = smooth[kind == 1]
    out[kind == 2] = spike[kind == 2] + rng.normal(size=(int(np.sum(kind == 2)), 1))
    return (out * scale[:, None])[..., None]


def validate_bounds(bounds: GrowthBounds, D: FunctionalSpec, f: FunctionalSpec, g: FunctionalSpec,
                    n_segments: int = 10_000, grid_step: float = 0.01, seed: int = 0, rtol: float = 1e-9):
    """Check each declared bound on random histories; raises :class:`CertificationError` on a violation."""
    rng = np.random.default_rng(seed)
    tau = D.tau
    n_hist = round(tau / grid_step)
    X = _random_histories(n_segments, n_hist, grid_step, rng)
    idx = np.array([n_hist])
    absX = np.abs(X)
    worst = {}
    for name, spec, C, m in (("f", f, bounds.C_f, bounds.nu), ("g", g, bounds.C_g, bounds.eta),
                             ("D", D, bounds.C_D, bounds.mu)):
        lhs = np.linalg.norm(spec.compile(grid_step)(X, idx)[:, 0], axis=1)
        rhs = C + FunctionalSpec((Distributed(m.with_tau(tau)),), tau).compile(grid_step)(absX, idx)[:, 0, 0]
        excess = lhs - rhs
        worst[name] = float(np.max(excess / (1.0 + np.abs(rhs))))
        if worst[name] > rtol:
            raise CertificationError(f"declared bound for {name} is violated (relative excess {worst[name]:.3g})")
    return worst


# ---------------------------------------------------------------------------
# characteristic equations
# ---------------------------------------------------------------------------

def build_lambda(nu: DelayMeasure, eta: DelayMeasure, p: float, eps: float) -> DelayMeasure:
    """``lambda = nu / eps^{p-1} + eta (p-1) / eps^{(p-2)/2}``."""
    if p < 2 or eps <= 0:
        raise ValueError("need p >= 2 and eps > 0")
    return nu.scaled(1.0 / eps ** (p - 1.0)) + eta.scaled((p - 1.0) / eps ** ((p - 2.0) / 2.0))


def _weights(p: float, eps: float, weighting: str) -> tuple[float, float]:
    """Multipliers ``(w_mu, w_lambda)`` of the two terms of the characteristic function."""
    if weighting == "statement":
        return 1.0, 1.0
    if weighting == "proof":
        wl = power_split_factor(p, eps)
        return wl / eps, wl
    raise ValueError("weighting must be 'statement' or 'proof'")


def characteristic_value(delta: float, p: float, eps: float, mu: DelayMeasure, lam: DelayMeasure,
                         tau: float | None = None, weighting: str = "statement", rho: float = 0.0) -> float:
    """Left side ``F(delta)`` of the characteristic equation.

    ``weighting="proof"`` multiplies the ``mu`` term by ``beta4`` and the ``lambda`` term by
    ``(1 + eps^{1/(p-1)})^{p-1}``, the factors that appear in the renewal kernel of the
    underlying comparison argument.  ``rho > 0`` adds the ``rho / delta`` mass of the
    regularising density ``rho e^{-delta s}``.
    """
    if not delta > 0:
        raise ValueError("characteristic function is defined for delta > 0")
    b1 = eps * p * (p - 1.0) / 2.0
    wm, wl = _weights(p, eps, weighting)
    return wm * exp_tilt_mass(mu, delta + b1) + wl * exp_tilt_mass(lam, delta + b1) / delta + rho / delta


@dataclass(frozen=True)
class DeltaSolution:
    p: float
    eps: float
    delta: float
    beta1: float
    lam: DelayMeasure = field(repr=False)
    degenerate: bool = False

    @property
    def rate(self):
        return self.delta + self.beta1


def solve_delta(p: float, eps: float, bounds: GrowthBounds, tau: float | None = None,
                weighting: str = "statement") -> DeltaSolution:
    """Positive root of ``F(delta) = 1``; flagged as degenerate when ``F(DELTA_LO) <= 1``."""
    tau = bounds.tau if tau is None else tau
    mu = bounds.mu
    lam = build_lambda(bounds.nu, bounds.eta, p, eps)
    b1 = eps * p * (p - 1.0) / 2.0
    if mu.is_zero and lam.is_zero:
        err = DegenerateError("mu and lambda carry no mass; only the rate beta1 remains")
        err.rate = b1
        raise err
    at_zero = sum(w for s, w in mu.atoms if abs(s) < 1e-12)
    if weighting == "proof":
        at_zero *= power_split_factor(p, eps) / eps
    if at_zero >= 1.0:
        raise NoRootError(f"neutral measure has mass {at_zero:g} >= 1 at lag 0; F stays above 1")

    def G(d):
        return characteristic_value(d, p, eps, mu, lam, tau, weighting) - 1.0

    if G(DELTA_LO) <= 0:
        return DeltaSolution(p, eps, DELTA_LO, b1, lam, degenerate=True)
    hi = max(2 * DELTA_LO, 1.0)
    while G(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise NoRootError("characteristic function does not fall below 1")
    lo = hi / 2.0 if G(hi / 2.0) > 0 else DELTA_LO
    root = optimize.brentq(G, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return DeltaSolution(p, eps, float(root), b1, lam)


@dataclass(frozen=True)
class EpsilonOptimum:
    eps: float
    rate: float
    solution: DeltaSolution
    grid: np.ndarray
    rates: np.ndarray


def minimize_over_epsilon(p: float, bounds: GrowthBounds, tau: float | None = None, eps_grid=None,
                          weighting: str = "statement") -> EpsilonOptimum:
    """Minimise ``eps -> delta(p, eps) + beta1(p, eps)``: log-grid scan then golden-section refinement."""
    grid = np.geomspace(*EPS_RANGE, EPS_POINTS) if eps_grid is None else np.asarray(eps_grid, float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("epsilon grid must be nonempty and positive")

    def attempt(e):
        try:
            sol = solve_delta(p, float(e), bounds, tau, weighting)
        except DegenerateError:
            return None
        return None if sol.degenerate else sol

    sols = [attempt(e) for e in grid]
    rates = np.array([s.rate if s is not None else np.nan for s in sols])
    if np.all(np.isnan(rates)):
        err = DegenerateError("every epsilon on the grid gives a degenerate certificate")
        err.rate = float(p * (p - 1) / 2 * grid.min())
        raise err
    i = int(np.nanargmin(rates))
    best = sols[i]
    if grid.size >= 3:
        lo = math.log(grid[max(i - 1, 0)])
        hi = math.log(grid[min(i + 1, grid.size - 1)])

        def objective(le):
            s = attempt(math.exp(le))
            return math.inf if s is None else s.rate

        res = optimize.minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10})
        cand = attempt(math.exp(res.x))
        if cand is not None and cand.rate < best.rate:
            best = cand
    return EpsilonOptimum(best.eps, best.rate, best, grid, rates)


def solve_theta_star(mu: DelayMeasure, tau: float | None = None) -> float | None:
    """``theta*`` with ``int e^{theta* s} mu(ds) = 1`` when ``mu`` has mass at least 1, else ``None``."""
    if not mu.is_nonnegative():
        raise CertificationError("theta* needs a nonnegative measure")
    mass = float(mu.total_mass())
    if mass < 1.0:
        return None
    off_zero = mass - sum(w for s, w in mu.atoms if abs(s) < 1e-12)
    if off_zero <= 0:
        raise NoRootError("all neutral mass sits at lag 0; the tilted mass never decreases")
    if mass == 1.0:
        return 0.0

    def G(t):
        return exp_tilt_mass(mu, t) - 1.0

    hi = 1.0
    while G(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise NoRootError("tilted neutral mass stays above 1")
    return float(optimize.brentq(G, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


# ---------------------------------------------------------------------------
# renewal kernel behind the mean-rate bound
# ---------------------------------------------------------------------------

RHO_DEFAULT = 1e-6
RHO_LADDER = (1e-4, 1e-5, 1e-6)


def renewal_kernel(delta: float, p: float, eps: float, mu: DelayMeasure, lam: DelayMeasure,
                   rho: float = RHO_DEFAULT, grid_step: float = 0.01, weighting: str = "proof") -> HalfLineMeasure:
    """``alpha_delta(ds) = e^{-delta s} (w_mu mu_e^+(ds) + w_lam Lambda_e^+(s) ds + rho ds)`` on ``[0, inf)``.

    ``mu_e^+`` and ``lambda_e^+`` are the mirror images of the ``beta1``-tilted measures and
    ``Lambda_e^+(s) = lambda_e^+([0, s])``.  The exponential factor is kept exact while
    ``Lambda_e^+`` is interpolated linearly between grid nodes and atom positions.
    """
    b1 = eps * p * (p - 1.0) / 2.0
    wm, wl = _weights(p, eps, weighting)
    tau = lam.tau
    out = reflect(mu.tilt(b1 + delta)).scaled(wm)
    lam_plus = reflect(lam.tilt(b1)).scaled(wl)
    pieces = []
    if not lam_plus.is_zero:
        n = round(tau / grid_step)
        knots = np.union1d(grid_step * np.arange(n + 1), [s for s, _ in lam_plus.atoms if s <= tau])
        for x0, x1 in zip(knots[:-1], knots[1:]):
            if x1 - x0 < 1e-12:
                continue
            v0 = cumulative_mass(lam_plus, x0)
            v1 = cumulative_mass(lam_plus, x1) - sum(w for s, w in lam_plus.atoms if abs(s - x1) <= 1e-12)
            slope = (v1 - v0) / (x1 - x0)
            pieces.append(DensityPiece(x0, x1, v0 - slope * x0, slope, -delta))
        total = cumulative_mass(lam_plus, tau)
        if total > 0:
            pieces.append(DensityPiece(tau, math.inf, total, 0.0, -delta))
    if rho > 0:
        pieces.append(DensityPiece(0.0, math.inf, rho, 0.0, -delta))
    return out + HalfLineMeasure(pieces=tuple(pieces))


def _bracket_root(G, what: str) -> float:
    """Root of a decreasing ``G`` on ``(DELTA_LO, inf)`` with ``G(DELTA_LO) > 0``."""
    hi = 1.0
    while G(hi) > 0:
        hi *= 2.0
        if hi > 1e12:
            raise NoRootError(f"{what} does not fall below 1")
    lo = hi / 2.0 if G(hi / 2.0) > 0 else DELTA_LO
    return float(optimize.brentq(G, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


def regularised_delta(p: float, eps: float, mu: DelayMeasure, lam: DelayMeasure, rho: float = RHO_DEFAULT,
                      weighting: str = "proof") -> float:
    """Root of ``F(delta) + rho / delta = 1``; ``rho > 0`` guarantees a root."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    return _bracket_root(lambda d: characteristic_value(d, p, eps, mu, lam, weighting=weighting, rho=rho) - 1.0,
                         "regularised characteristic function")


@dataclass(frozen=True)
class RhoExtrapolation:
    rhos: np.ndarray
    deltas: np.ndarray
    delta_at_zero: float  # linear fit in rho evaluated at rho = 0


def rho_extrapolation(p: float, eps: float, mu: DelayMeasure, lam: DelayMeasure, rhos=RHO_LADDER,
                      weighting: str = "proof") -> RhoExtrapolation:
    rhos = np.asarray(rhos, dtype=float)
    deltas = np.array([regularised_delta(p, eps, mu, lam, r, weighting) for r in rhos])
    fit = np.polyfit(rhos, deltas, 1) if rhos.size > 1 else (0.0, deltas[0])
    return RhoExtrapolation(rhos, deltas, float(fit[1]))


@dataclass(frozen=True)
class RenewalBound:
    rho: float
    delta: float  # unit mass of the discretised kernel
    delta_closed_form: float  # unit mass of the exact kernel
    kernel: HalfLineMeasure = field(repr=False)
    limit: RenewalLimit
    extrapolation: RhoExtrapolation


def renewal_bound(p: float, eps: float, bounds: GrowthBounds, c: float, rho: float = RHO_DEFAULT,
                  grid_step: float = 0.01, t_max: float = 50.0, weighting: str = "proof") -> RenewalBound:
    """Renewal limit of ``z = c e^{-delta t} + alpha_delta * z`` for the certificate's kernel.

    ``bounds`` are p-th power bounds.  ``delta`` is chosen so that the discretised
    ``alpha_delta`` has unit mass; the closed-form root is reported alongside.
    """
    lam = build_lambda(bounds.nu, bounds.eta, p, eps)
    mu = bounds.mu
    closed = regularised_delta(p, eps, mu, lam, rho, weighting)
    delta = _bracket_root(
        lambda d: float(renewal_kernel(d, p, eps, mu, lam, rho, grid_step, weighting).total_mass()) - 1.0,
        "discretised renewal kernel mass")
    kernel = renewal_kernel(delta, p, eps, mu, lam, rho, grid_step, weighting)
    # remove the bracketing residue so the kernel is a probability measure to machine precision
    kernel = kernel.scaled(1.0 / float(kernel.total_mass()))
    limit = renewal_asymptote(kernel, c, delta, t_max=t_max, h=grid_step)
    return RenewalBound(rho, delta, closed, kernel, limit, rho_extrapolation(p, eps, mu, lam, weighting=weighting))


# ---------------------------------------------------------------------------
# Monte Carlo estimates
# ---------------------------------------------------------------------------

MIN_PATHS = 500


@dataclass(frozen=True)
class MomentCurve:
    times: np.ndarray
    moment: np.ndarray
    stderr: np.ndarray
    group_moments: np.ndarray = field(repr=False)  # leave-one-group-out means (G, n_times)
    p: float = 2.0

    def log_moment(self):
        return np.log(self.moment)


def _leave_group_out(values: np.ndarray, n_groups: int) -> np.ndarray:
    P = values.shape[0]
    groups = np.array_split(np.arange(P), n_groups)
    total = values.sum(axis=0)
    return np.array([(total - values[g].sum(axis=0)) / (P - g.size) for g in groups])


def mc_moment_curve(paths: np.ndarray, p: float, times: np.ndarray, n_groups: int = 20,
                    min_paths: int = MIN_PATHS) -> MomentCurve:
    """``E|X(t)|^p`` across paths with jackknife standard errors.

    ``paths`` has shape (P, n_times) or (P, n_times, d) and is sampled at ``times``.
    """
    X = np.asarray(paths, dtype=float)
    if X.ndim == 3:
        X = np.linalg.norm(X, axis=2)
    P = X.shape[0]
    if P < min_paths:
        raise InsufficientDataError(f"moment curve needs at least {min_paths} paths, got {P}")
    vals = np.abs(X) ** p
    mean = vals.mean(axis=0)
    # the delete-one jackknife of a sample mean reduces to the usual standard error
    se = vals.std(axis=0, ddof=1) / math.sqrt(P)
    return MomentCurve(np.asarray(times, float), mean, se, _leave_group_out(vals, n_groups), p)


@dataclass(frozen=True)
class RateEstimate:
    rate: float
    stderr: float
    mode: str
    window: tuple


def _window_mask(times, window):
    lo, hi = window
    return (times >= lo - 1e-12) & (times <= hi + 1e-12)


def _slope(t, y):
    return float(np.polyfit(t, y, 1)[0])


def _jackknife_se(reps: np.ndarray) -> float:
    g = reps.size
    return float(math.sqrt((g - 1) / g * np.sum((reps - reps.mean()) ** 2))) if g > 1 else math.inf


def empirical_rate(data, times=None, window=None, mode: str = "mean", quantile: float = 0.99,
                   n_groups: int = 20) -> RateEstimate:
    """Empirical growth exponent on ``window`` (default ``[T/2, T]``).

    ``mode="mean"``: least-squares slope of ``log m(t)`` for a :class:`MomentCurve` or a
    positive 1-d curve.  ``mode="as"``: per-path ``max_{t in window} log|X(t)| / t`` over
    paths of shape (P, n_times[, d]), summarised by the ``quantile`` across paths.
    """
    if isinstance(data, MomentCurve):
        times = data.times if times is None else np.asarray(times, float)
    times = np.asarray(times, dtype=float)
    if window is None:
        window = (times[-1] / 2.0, times[-1])
    mask = _window_mask(times, window)
    if np.sum(mask) < 2:
        raise InsufficientDataError("rate window holds fewer than two time points")
    t = times[mask]
    if mode == "mean":
        curve = data.moment if isinstance(data, MomentCurve) else np.asarray(data, float)
        y = curve[mask]
        if np.any(y <= 0) or not np.all(np.isfinite(y)):
            raise RateUndefinedError("moment curve must be positive on the rate window")
        rate = _slope(t, np.log(y))
        se = 0.0
        if isinstance(data, MomentCurve) and data.group_moments.size:
            gm = data.group_moments[:, mask]
            if np.all(gm > 0):
                se = _jackknife_se(np.array([_slope(t, np.log(r)) for r in gm]))
        return RateEstimate(rate, se, mode, tuple(window))
    if mode == "as":
        X = np.asarray(data, dtype=float)
        if X.ndim == 3:
            X = np.linalg.norm(X, axis=2)
        absx = np.abs(X[:, mask])
        if np.any(absx <= 0) or np.any(t <= 0):
            raise RateUndefinedError("pathwise rate needs nonzero values at positive times")
        stat = np.max(np.log(absx) / t[None, :], axis=1)
        rate = float(np.quantile(stat, quantile))
        P = stat.size
        groups = np.array_split(np.arange(P), min(n_groups, P))
        reps = np.array([np.quantile(np.delete(stat, g), quantile) for g in groups])
        return RateEstimate(rate, _jackknife_se(reps), mode, tuple(window))
    raise ValueError("mode must be 'mean' or 'as'")


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------

@dataclass
class RateCertificate:
    p: float
    eps: float
    betas: BetaConstants
    lam: DelayMeasure
    delta: float
    degenerate: bool
    theta_star: float | None
    gamma_mean: float
    gamma_eps: float
    as_rate: float
    case: str
    bounds: GrowthBounds
    empirical: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    renewal: RenewalBound | None = None

    @property
    def rate(self):
        """Certified p-th mean exponent ``delta + beta1``."""
        return self.delta + self.betas.beta1

    def to_text(self) -> str:
        lines = [
            f"p = {self.p:.17g}",
            f"epsilon = {self.eps:.17g}",
            f"delta = {self.delta:.17g}",
            f"degenerate = {self.degenerate}",
        ]
        for k, v in self.betas.as_dict().items():
            lines.append(f"{k} = {'none' if v is None else format(v, '.17g')}")
        lines += [
            f"lambda_mass = {self.lam.total_mass():.17g}",
            f"pth_mean_rate = {self.rate:.17g}",
            f"gamma_mean = {self.gamma_mean:.17g}",
            f"gamma_epsilon = {self.gamma_eps:.17g}",
            f"theta_star = {'none' if self.theta_star is None else format(self.theta_star, '.17g')}",
            f"case = {self.case}",
            f"as_rate = {self.as_rate:.17g}",
            f"C_p = {C_p(self.p):.17g}",
        ]
        if self.renewal is not None:
            rb = self.renewal
            lines += [
                f"renewal_rho = {rb.rho:.17g}",
                f"renewal_delta = {rb.delta:.17g}",
                f"renewal_delta_closed_form = {rb.delta_closed_form:.17g}",
                f"renewal_delta_rho_to_zero = {rb.extrapolation.delta_at_zero:.17g}",
                f"renewal_limit = {rb.limit.limit_value:.17g}",
                f"renewal_key_limit = {rb.limit.key_renewal_limit:.17g}",
                f"renewal_upper_bound = {rb.limit.upper_bound:.17g}",
            ]
        for k, est in self.empirical.items():
            lines.append(f"empirical_{k} = {est.rate:.17g} +/- {est.stderr:.17g}")
        for k, ok in self.checks.items():
            lines.append(f"check_{k} = {'pass' if ok else 'fail'}")
        return "\n".join(lines) + "\n"


def _rate_at(p, eps, bounds, tau):
    """``(solution, rate)`` at fixed eps, falling back to ``beta1`` for degenerate cases."""
    try:
        sol = solve_delta(p, eps, bounds, tau)
    except DegenerateError as err:
        b1 = eps * p * (p - 1) / 2
        return DeltaSolution(p, eps, 0.0, b1, build_lambda(bounds.nu, bounds.eta, p, eps), True), err.rate
    return sol, sol.rate


def certify(bounds: GrowthBounds, p: float = 2.0, eps: float | None = None, psi=None,
            D: FunctionalSpec | None = None, paths=None, times=None, window=None,
            quantile: float = 0.99) -> RateCertificate:
    """Assemble the p-th mean and almost-sure certificates and compare with simulated paths.

    ``bounds`` are first-power bounds; they are lifted to p-th power form for the
    characteristic equation while ``theta*`` uses the raw neutral measure.
    """
    tau = bounds.tau
    bp = bounds.pth_power(p)
    if eps is None:
        try:
            opt = minimize_over_epsilon(p, bp, tau)
            sol, rate = opt.solution, opt.rate
        except DegenerateError:
            sol, rate = _rate_at(p, EPS_RANGE[0], bp, tau)
    else:
        sol, rate = _rate_at(p, eps, bp, tau)
    b2 = bounds.pth_power(2.0)
    if eps is None:
        try:
            g_opt = minimize_over_epsilon(2.0, b2, tau)
            gamma, g_eps = g_opt.rate, g_opt.eps
        except DegenerateError:
            g_sol, gamma = _rate_at(2.0, EPS_RANGE[0], b2, tau)
            g_eps = EPS_RANGE[0]
    else:
        _, gamma = _rate_at(2.0, eps, b2, tau)
        g_eps = eps
    theta = solve_theta_star(bounds.mu, tau)
    if theta is None:
        case, as_rate = "ii", gamma / 2.0
    else:
        case, as_rate = "i", max(gamma / 2.0, theta)
    betas = beta_constants(p, sol.eps, bp.C_f, bp.C_g)
    if psi is not None and D is not None:
        betas = initial_betas(betas, p, sol.eps, bp.C_D, bp.mu, sol.lam, psi, D)
    delta = rate - sol.beta1
    cert = RateCertificate(p, sol.eps, betas, sol.lam, delta, sol.degenerate, theta, gamma, g_eps, as_rate,
                           case, bounds)
    if betas.beta7 is not None:
        try:
            cert.renewal = renewal_bound(p, sol.eps, bp, betas.beta7)
        except (NoRootError, ValueError):
            cert.renewal = None  # kernel without a usable root; the certificate stands without it
    if paths is not None:
        curve = mc_moment_curve(paths, p, times)
        est = empirical_rate(curve, window=window, mode="mean")
        cert.empirical["mean_rate"] = est
        cert.checks["mean_rate"] = est.rate <= cert.rate + 3 * est.stderr
        pos = np.asarray(times) > 0
        est_as = empirical_rate(np.asarray(paths)[:, pos], np.asarray(times)[pos], window=window, mode="as",
                                quantile=quantile)
        cert.empirical["as_rate"] = est_as
        cert.checks["as_rate"] = est_as.rate <= as_rate + 3 * est_as.stderr
    return cert
