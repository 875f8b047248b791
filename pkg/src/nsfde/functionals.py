"""Declarative functionals D, f, g on history segments.

A functional is a sum of terms plus a constant offset:

* ``PointDelay(lag, h)``           -> h(phi(lag))
* ``Distributed(measure, h)``      -> int measure(ds) h(phi(s))
* ``MaxNorm(coef, (lo, hi))``      -> coef * max_{lo <= s <= hi} |phi(s)|

Pointwise maps come from a small registry with known Lipschitz and
linear-growth constants, so the non-atomicity modulus ``rho0`` can be read off
term by term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CertificationError, SelectionError, SupportError
from .measures import DelayMeasure, Segment, grid_position, measure_stencil

_EPS = 1e-12


# ---------------------------------------------------------------------------
# pointwise maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointwiseMap:
    """Componentwise scalar map: ``identity``, ``affine`` (a x + b) or ``tanh`` (c tanh x)."""

    kind: str = "identity"
    a: float = 1.0
    b: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in MAP_REGISTRY:
            raise ValueError(f"unknown pointwise map {self.kind!r}; choose from {sorted(MAP_REGISTRY)}")

    def __call__(self, x):
        if self.kind == "identity":
            return x
        if self.kind == "affine":
            return self.a * x + self.b
        return self.c * np.tanh(x)

    @property
    def lipschitz(self) -> float:
        if self.kind == "identity":
            return 1.0
        if self.kind == "affine":
            return abs(self.a)
        return abs(self.c)

    def growth(self, dim: int = 1) -> tuple[float, float]:
        """``(c0, c1)`` with ``|h(x)| <= c0 + c1 |x|`` in the Euclidean norm."""
        if self.kind == "identity":
            return 0.0, 1.0
        if self.kind == "affine":
            return abs(self.b) * math.sqrt(dim), abs(self.a)
        return 0.0, abs(self.c)

    def scaled(self, c: float) -> "PointwiseMap":
        """The map ``c h``."""
        if self.kind == "identity":
            return PointwiseMap("affine", a=c, b=0.0)
        if self.kind == "affine":
            return PointwiseMap("affine", a=c * self.a, b=c * self.b)
        return PointwiseMap("tanh", c=c * self.c)

    @property
    def is_linear(self):
        return self.kind == "identity" or (self.kind == "affine" and self.b == 0.0)

    def to_literal(self):
        if self.kind == "identity":
            return {"name": "identity"}
        if self.kind == "affine":
            return {"name": "affine", "a": self.a, "b": self.b}
        return {"name": "tanh", "c": self.c}

    @classmethod
    def from_literal(cls, lit):
        if lit is None:
            return IDENTITY
        if isinstance(lit, str):
            lit = {"name": lit}
        name = lit.get("name", "identity")
        if name == "affine":
            return cls("affine", a=float(lit.get("a", 1.0)), b=float(lit.get("b", 0.0)))
        if name == "tanh":
            return cls("tanh", c=float(lit.get("c", 1.0)))
        return cls(name)


MAP_REGISTRY = ("identity", "affine", "tanh")
IDENTITY = PointwiseMap("identity")


def scalar(a: float) -> PointwiseMap:
    return PointwiseMap("affine", a=float(a), b=0.0)


def validate_map(h: PointwiseMap, n_pairs: int = 10_000, dim: int = 1, seed: int = 0, scale: float = 10.0):
    """Check declared Lipschitz/growth constants dominate sampled ratios.

    Returns ``(lip_ratio, growth_excess)``; the declaration holds when
    ``lip_ratio <= h.lipschitz`` and ``growth_excess <= 0``.
    """
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=scale, size=(n_pairs, dim)) * rng.exponential(size=(n_pairs, 1))
    y = x + rng.normal(size=(n_pairs, dim)) * 10.0 ** rng.uniform(-6, 1, size=(n_pairs, 1))
    num = np.linalg.norm(h(x) - h(y), axis=1)
    den = np.linalg.norm(x - y, axis=1)
    lip_ratio = float(np.max(num / den))
    c0, c1 = h.growth(dim)
    excess = float(np.max(np.linalg.norm(h(x), axis=1) - (c0 + c1 * np.linalg.norm(x, axis=1))))
    return lip_ratio, excess


# ---------------------------------------------------------------------------
# terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PointDelay:
    lag: float
    map: PointwiseMap = IDENTITY

    def __post_init__(self):
        if self.lag > _EPS:
            raise SupportError(f"point delay lag {self.lag} must be <= 0")
        object.__setattr__(self, "lag", float(min(self.lag, 0.0)))

    @property
    def lower(self):
        return self.lag

    @property
    def upper(self):
        return self.lag

    @property
    def lipschitz(self):
        return self.map.lipschitz

    def rho(self, s):
        return self.map.lipschitz if -self.lag <= s + _EPS else 0.0

    def scaled(self, c):
        return PointDelay(self.lag, self.map.scaled(c))

    def describe(self):
        return f"point(lag={self.lag:g}, {self.map.kind}, lip={self.lipschitz:g})"


@dataclass(frozen=True)
class Distributed:
    measure: DelayMeasure
    map: PointwiseMap = IDENTITY

    @property
    def lower(self):
        lows = [s for s, _ in self.measure.atoms] + [p.lo for p in self.measure.pieces]
        return min(lows) if lows else 0.0

    @property
    def upper(self):
        up = self.measure.upper_support()
        return -math.inf if up is None else up

    @property
    def lipschitz(self):
        return self.map.lipschitz * self.measure.total_variation()

    def rho(self, s):
        return self.map.lipschitz * self.measure.variation_on(-s, 0.0)

    def scaled(self, c):
        return Distributed(self.measure.scaled(c), self.map)

    def describe(self):
        return (f"distributed(|m|={self.measure.total_variation():g}, {self.map.kind}, "
                f"lip={self.map.lipschitz:g})")


@dataclass(frozen=True)
class MaxNorm:
    coef: object
    window: tuple

    def __post_init__(self):
        lo, hi = (float(w) for w in self.window)
        if not lo <= hi <= _EPS:
            raise SupportError(f"max window {self.window} must satisfy lo <= hi <= 0")
        object.__setattr__(self, "window", (lo, min(hi, 0.0)))
        coef = np.asarray(self.coef, dtype=float)
        object.__setattr__(self, "coef", float(coef) if coef.ndim == 0 else coef)

    @property
    def lower(self):
        return self.window[0]

    @property
    def upper(self):
        return self.window[1]

    @property
    def lipschitz(self):
        return float(np.linalg.norm(self.coef)) if np.ndim(self.coef) else abs(self.coef)

    def rho(self, s):
        return self.lipschitz if -self.window[1] <= s + _EPS else 0.0

    def scaled(self, c):
        return MaxNorm(c * np.asarray(self.coef), self.window)

    def describe(self):
        return f"max(coef={self.coef}, window=[{self.window[0]:g}, {self.window[1]:g}])"


Term = PointDelay | Distributed | MaxNorm


# ---------------------------------------------------------------------------
# grid compilation
# ---------------------------------------------------------------------------

def _gather(X, idx, offsets, fracs):
    """Linear interpolation of X (P, N, d) at node ``idx + offset + frac``; returns (P, k, Q, d)."""
    n_nodes = X.shape[1]
    i0 = idx[:, None] + offsets[None, :]
    i1 = np.minimum(i0 + 1, n_nodes - 1)
    if not np.any(fracs):
        return X[:, i0]
    f = fracs[None, None, :, None]
    return X[:, i0] * (1.0 - f) + X[:, i1] * f


class CompiledFunctional:
    """A functional bound to a grid step; evaluates batches of paths at many nodes."""

    def __init__(self, spec: "FunctionalSpec", grid_step: float):
        self.spec = spec
        self.grid_step = grid_step
        self.n_hist = round(spec.tau / grid_step)
        self._parts = []
        for term in spec.terms:
            if isinstance(term, PointDelay):
                off, frac = grid_position(np.array([term.lag]), grid_step)
                self._parts.append(("point", term.map, off, frac, None))
            elif isinstance(term, Distributed):
                st = measure_stencil(term.measure.with_tau(spec.tau), grid_step)
                self._parts.append(("dist", term.map, st.offsets, st.fracs, st.weights))
            else:
                lo, hi = term.window
                nodes = np.arange(math.ceil(lo / grid_step - 1e-9), math.floor(hi / grid_step + 1e-9) + 1)
                pts = np.unique(np.concatenate([[lo], nodes * grid_step, [hi]]))
                pts = pts[(pts >= lo - 1e-12) & (pts <= hi + 1e-12)]
                off, frac = grid_position(pts, grid_step)
                self._parts.append(("max", term.coef, off, frac, None))

    def __call__(self, X, idx):
        """Evaluate at segment end nodes ``idx`` of paths ``X`` with shape (P, N, d) -> (P, k, d)."""
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        if idx.size and idx.min() < self.n_hist:
            raise SupportError("segment end node leaves no room for the full history window")
        P, _, d = X.shape
        out = np.zeros((P, idx.size, self.spec.dim))
        out += self.spec.offset
        for kind, payload, off, frac, weights in self._parts:
            vals = _gather(X, idx, off, frac)
            if kind == "point":
                out += payload(vals[:, :, 0, :])
            elif kind == "dist":
                vals = payload(vals)
                if weights.ndim == 1:
                    out += np.einsum("q,pkqd->pkd", weights, vals)
                else:
                    out += np.einsum("qij,pkqj->pki", weights, vals)
            else:
                mx = np.max(np.linalg.norm(vals, axis=3), axis=2)
                out += mx[..., None] * payload
        return out


# ---------------------------------------------------------------------------
# functional specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FunctionalSpec:
    """Affine combination of point, distributed and max-type terms on ``[-tau, 0]``."""

    terms: tuple = ()
    tau: float = 1.0
    dim: int = 1
    offset: np.ndarray = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        offset = np.zeros(self.dim) if self.offset is None else np.atleast_1d(np.asarray(self.offset, float))
        if offset.shape != (self.dim,):
            offset = np.broadcast_to(offset, (self.dim,)).copy()
        object.__setattr__(self, "offset", offset)
        for term in self.terms:
            if term.lower < -self.tau - 1e-12:
                raise SupportError(f"term {term.describe()} reaches {term.lower} beyond -tau={-self.tau}")

    @property
    def is_zero(self):
        return not self.terms and not np.any(self.offset)

    def compile(self, grid_step: float) -> CompiledFunctional:
        return CompiledFunctional(self, grid_step)

    def describe(self):
        parts = [t.describe() for t in self.terms]
        if np.any(self.offset):
            parts.append(f"offset={self.offset.tolist()}")
        return " + ".join(parts) if parts else "0"

    def with_terms(self, terms):
        return replace(self, terms=tuple(terms))

    def lipschitz(self) -> float:
        """Global sup-norm Lipschitz bound (sum of term bounds)."""
        return float(sum(t.lipschitz for t in self.terms))

    def scaled(self, c: float) -> "FunctionalSpec":
        """The functional ``c F``."""
        return FunctionalSpec(tuple(t.scaled(c) for t in self.terms), self.tau, self.dim, c * self.offset)

    def __add__(self, other):
        if self.tau != other.tau or self.dim != other.dim:
            raise ValueError("can only add functionals with equal tau and dimension")
        return FunctionalSpec(self.terms + other.terms, self.tau, self.dim, self.offset + other.offset)

    # literal round trip -----------------------------------------------------
    @classmethod
    def from_literal(cls, lit, tau, dim=1):
        if lit is None:
            return cls((), tau, dim)
        terms = []
        for t in lit.get("terms", []):
            kind = t.get("type")
            if kind == "point":
                terms.append(PointDelay(float(t["lag"]), PointwiseMap.from_literal(t.get("map"))))
            elif kind == "distributed":
                terms.append(Distributed(DelayMeasure.from_literal(t["measure"], tau),
                                         PointwiseMap.from_literal(t.get("map"))))
            elif kind == "max":
                terms.append(MaxNorm(t["coef"], tuple(t["window"])))
            else:
                raise ValueError(f"unknown term type {kind!r}")
        return cls(tuple(terms), tau, dim, lit.get("offset"))

    def to_literal(self):
        out = []
        for t in self.terms:
            if isinstance(t, PointDelay):
                out.append({"type": "point", "lag": t.lag, "map": t.map.to_literal()})
            elif isinstance(t, Distributed):
                out.append({"type": "distributed", "measure": t.measure.to_literal(), "map": t.map.to_literal()})
            else:
                coef = t.coef.tolist() if isinstance(t.coef, np.ndarray) else t.coef
                out.append({"type": "max", "coef": coef, "window": list(t.window)})
        return {"terms": out, "offset": self.offset.tolist()}


def evaluate(spec: FunctionalSpec, seg: Segment) -> np.ndarray:
    """Value of the functional on one segment."""
    if seg.tau < spec.tau - 1e-12:
        lowest = min((t.lower for t in spec.terms), default=0.0)
        if lowest < -seg.tau - 1e-12:
            raise SupportError(f"functional reaches {lowest}, segment only covers [-{seg.tau}, 0]")
        spec = replace(spec, tau=seg.tau, terms=tuple(
            Distributed(t.measure.with_tau(seg.tau), t.map) if isinstance(t, Distributed) else t
            for t in spec.terms))
    n = seg.values.shape[0] - 1
    compiled = spec.compile(seg.grid_step)
    if compiled.n_hist > n:
        raise SupportError("segment shorter than functional horizon")
    return compiled(seg.values[None], np.array([n]))[0, 0]


def rho0(spec: FunctionalSpec, s: float) -> float:
    """Non-atomicity modulus: Lipschitz bound for segments that agree on ``[-tau, -s)``."""
    if s < 0:
        raise ValueError("rho0 is defined for s >= 0")
    return float(sum(t.rho(s) for t in spec.terms))


@dataclass(frozen=True)
class MaoCheck:
    holds: bool
    kappa: float


def check_mao_contraction(spec: FunctionalSpec) -> MaoCheck:
    kappa = rho0(spec, spec.tau)
    return MaoCheck(kappa < 1.0, kappa)


# ---------------------------------------------------------------------------
# decomposition and Picard schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PicardSchedule:
    T1: float
    alpha: float
    gamma: float
    k: float
    mu: float


def split_instant_linear(spec: FunctionalSpec) -> tuple[float, FunctionalSpec]:
    """Write ``D(phi) = a phi(0) + R(phi)`` for the affine point terms sitting at lag 0.

    Returns ``(a, R)``; affine intercepts move into the offset of ``R``.  A
    nonlinear map at lag 0 cannot be separated and raises :class:`SupportError`.
    """
    a, b, rest = 0.0, 0.0, []
    for t in spec.terms:
        if isinstance(t, PointDelay) and t.lag >= -_EPS:
            if t.map.kind == "tanh":
                raise SupportError(f"{t.describe()} is nonlinear at lag 0 and cannot be rearranged")
            a += 1.0 if t.map.kind == "identity" else t.map.a
            b += 0.0 if t.map.kind == "identity" else t.map.b
        else:
            rest.append(t)
    return a, FunctionalSpec(tuple(rest), spec.tau, spec.dim, spec.offset + b)


@dataclass(frozen=True)
class NeutralDecomposition:
    """``D = D0 + D1`` with D0 a pure delay (support in ``[-tau, -delta_gap]``)."""

    D0: FunctionalSpec
    D1: FunctionalSpec
    delta_gap: float
    k0: float
    schedule: PicardSchedule | None = None

    @property
    def trivial(self):
        return not self.D0.terms

    @property
    def T1(self):
        return None if self.schedule is None else self.schedule.T1

    @property
    def k(self):
        return self.k0 if self.schedule is None else self.schedule.k

    @property
    def alpha(self):
        return None if self.schedule is None else self.schedule.alpha

    @property
    def mu_param(self):
        return None if self.schedule is None else self.schedule.mu

    @property
    def D(self):
        return self.D0 + self.D1

    def rho0_D1(self, s):
        return rho0(self.D1, s)


def decompose(spec: FunctionalSpec) -> NeutralDecomposition:
    """Split off every pure-delay term and check D1 is uniformly non-atomic at zero."""
    delayed = [t for t in spec.terms if t.upper < -_EPS]
    instant = [t for t in spec.terms if t.upper >= -_EPS]
    delta_gap = min((-t.upper for t in delayed), default=spec.tau)
    if math.isinf(delta_gap):
        delta_gap = spec.tau
    D0 = FunctionalSpec(tuple(delayed), spec.tau, spec.dim)
    D1 = FunctionalSpec(tuple(instant), spec.tau, spec.dim, spec.offset)
    k0 = rho0(D1, 0.0)
    if k0 >= 1.0:
        offending = [t for t in instant if t.rho(0.0) > 0]
        names = ", ".join(t.describe() for t in offending)
        raise CertificationError(
            f"non-atomicity failure: rho0(0+) = {k0:g} >= 1 from {names}", offending)
    return NeutralDecomposition(D0, D1, float(delta_gap), k0)


def _quadratic_bound(K_lip, mu):
    """Largest T with ``2 K T (T + 4) < (1 - mu^2)^2 / (2 (1 + mu^2))`` (exclusive)."""
    rhs = (1.0 - mu * mu) ** 2 / (2.0 * (1.0 + mu * mu))
    if K_lip <= 0:
        return math.inf, rhs
    return -2.0 + math.sqrt(4.0 + rhs / (2.0 * K_lip)), rhs


def auto_mu_param(k0: float) -> float:
    """Default ``mu`` for the schedule: 0.5 for small ``k0``, else halfway between ``k0`` and 1."""
    return 0.5 if k0 < 0.25 else 0.5 * (1.0 + k0)


def select_T1_alpha(dec: NeutralDecomposition, K_lip: float, mu_param: float = 0.5,
                    grid_step: float | None = None, optimize_alpha: bool = False) -> PicardSchedule:
    """Pick the Picard interval ``T1`` and weight ``alpha`` with contraction factor ``gamma < 1``.

    Follows the recipe: ``rho0(T1) < mu``, ``2 K T1 (T1 + 4) < (1-mu^2)^2 / (2(1+mu^2))``,
    ``alpha = (mu^2 + 1) / 2``.  ``optimize_alpha`` instead minimises gamma over alpha at
    the chosen ``T1``.
    """
    mu = float(mu_param)
    if not 0.0 < mu < 1.0:
        raise SelectionError("mu must lie in (0, 1)")
    if K_lip < 0:
        raise SelectionError("Lipschitz constant must be nonnegative")
    k0 = dec.rho0_D1(0.0)
    if k0 >= mu:
        if k0 >= 1.0:
            raise SelectionError(f"non-atomicity failure: rho0(0+) = {k0:g} >= 1")
        raise SelectionError(f"rho0(0+) = {k0:g} >= mu = {mu:g}; choose mu in ({k0:g}, 1)")
    alpha = 0.5 * mu * mu + 0.5
    t_quad, rhs = _quadratic_bound(K_lip, mu)

    if dec.rho0_D1(dec.delta_gap) < mu:
        t_rho = dec.delta_gap
    else:
        lo, hi = 0.0, dec.delta_gap
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if dec.rho0_D1(mid) < mu:
                lo = mid
            else:
                hi = mid
        t_rho = lo

    def admissible(t):
        return (0 < t <= dec.delta_gap + 1e-12 and dec.rho0_D1(t) < mu
                and 2.0 * K_lip * t * (t + 4.0) < rhs)

    T1 = min(dec.delta_gap, t_rho, t_quad)
    if grid_step is not None:
        n = int(math.floor(T1 / grid_step + 1e-9))
        while n > 0 and not admissible(n * grid_step):
            n -= 1
        T1 = n * grid_step
    else:
        while T1 > 0 and not admissible(T1):
            T1 = math.nextafter(T1, 0.0) if T1 < 1e-300 else T1 * (1.0 - 1e-12)
    if T1 <= 0 or not admissible(T1):
        raise SelectionError("no admissible T1 on this grid; refine the grid or choose a different mu")
    k = dec.rho0_D1(T1)
    quad = 2.0 * K_lip * T1 * (T1 + 4.0)
    if optimize_alpha:
        root_q = math.sqrt(quad)
        alpha = k / (k + root_q) if k + root_q > 0 else alpha
        alpha = min(max(alpha, k * k + 1e-12, 1e-12), 1.0 - 1e-12)
    gamma = k * k / alpha + quad / (1.0 - alpha)
    if not gamma < 1.0:
        raise SelectionError(f"contraction factor gamma = {gamma:g} is not below 1")
    return PicardSchedule(T1=float(T1), alpha=float(alpha), gamma=float(gamma), k=float(k), mu=mu)
