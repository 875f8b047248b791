"""Volterra equations ``z = f + kappa * z`` on a uniform grid, resolvents, comparison and renewal limits.

Convolutions use product integration against the nodal hat basis
(:func:`nsfde.measures.hat_weights`), which is exact for atoms on nodes and
second order for smooth densities.  The unknown at ``t_n`` enters its own
equation through the mass of ``kappa`` near zero, so each step divides by
``1 - W_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisError, IllPosedError, InsufficientDataError
from .measures import HalfLineMeasure, convolve, cumulative_mass, hat_weights

MIN_AC_MASS = 1e-9


@dataclass(frozen=True)
class VolterraProblem:
    kernel: HalfLineMeasure
    forcing: np.ndarray
    grid_step: float

    def __post_init__(self):
        f = np.asarray(self.forcing, dtype=float)
        if f.ndim != 1 or not np.all(np.isfinite(f)):
            raise ValueError("forcing must be a finite 1-d grid function")
        object.__setattr__(self, "forcing", f)

    @property
    def times(self):
        return self.grid_step * np.arange(self.forcing.size)


def _weights(kernel: HalfLineMeasure, h: float, n: int):
    left, centre, right = hat_weights(kernel, h, n)
    if centre[0] >= 1.0:
        raise IllPosedError(f"kernel atom at lag 0 has mass {centre[0]:g} >= 1")
    full = left + centre + right
    if full[0] >= 1.0:
        raise IllPosedError(f"kernel mass within the first grid cell is {full[0]:g} >= 1; refine the grid")
    return left, centre, full


def solve_volterra(p: VolterraProblem) -> np.ndarray:
    """Forward substitution for ``z(t_n) = f(t_n) + int_[0, t_n] kernel(ds) z(t_n - s)``."""
    f = p.forcing
    n = f.size
    left, centre, full = _weights(p.kernel, p.grid_step, n)
    z = np.empty(n)
    z[0] = f[0] / (1.0 - centre[0])
    denom = 1.0 - full[0]
    for k in range(1, n):
        # history sum over lags 1..k-1 plus the partial last cell at lag k
        acc = f[k] + np.dot(full[1:k], z[k - 1:0:-1]) + (left[k] + centre[k]) * z[0]
        z[k] = acc / denom
    return z


def volterra_residual(p: VolterraProblem, z: np.ndarray) -> np.ndarray:
    """Nodewise ``z - kernel * z - f`` evaluated with :func:`convolve`."""
    return z - convolve(p.kernel, z, p.grid_step) - p.forcing


@dataclass(frozen=True)
class ResolventFunction:
    """Resolvent ``rho`` of ``-kernel``: atoms plus a density sampled on the grid."""

    grid_step: float
    density: np.ndarray
    atoms: tuple
    identity_residual: float
    kernel_mass: float

    @property
    def times(self):
        return self.grid_step * np.arange(self.density.size)

    def cumulative(self):
        """``rho([0, t_n])`` using the trapezoid rule for the density part."""
        h = self.grid_step
        dens = np.concatenate([[0.0], np.cumsum(0.5 * h * (self.density[1:] + self.density[:-1]))])
        out = dens.copy()
        t = self.times
        for s, w in self.atoms:
            out[t >= s - 1e-12] += w
        return out


def _atom_resolvent(atoms, horizon, max_atoms=10_000):
    """Atoms of ``R`` solving ``R = -A + A * R`` for a purely atomic ``A`` on ``[0, horizon]``."""
    atoms = [(float(s), float(w)) for s, w in atoms if s <= horizon + 1e-12]
    if not atoms:
        return ()
    c0 = sum(w for s, w in atoms if abs(s) < 1e-12)
    if c0 >= 1.0:
        raise IllPosedError(f"kernel atom at lag 0 has mass {c0:g} >= 1")
    pos = [s for s, _ in atoms if s > 1e-12]
    reach = {0.0}
    frontier = {0.0}
    while frontier:
        nxt = set()
        for r in frontier:
            for s in pos:
                v = round(r + s, 12)
                if v <= horizon + 1e-12 and v not in reach:
                    nxt.add(v)
        reach |= nxt
        frontier = nxt
        if len(reach) > max_atoms:
            raise InsufficientDataError("too many atom combinations for the resolvent horizon")
    support = sorted(reach)
    R = {}
    for t in support:
        val = -sum(w for s, w in atoms if abs(s - t) < 1e-12)
        for s, w in atoms:
            if s > 1e-12:
                val += w * R.get(round(t - s, 12), 0.0)
        R[t] = val / (1.0 - c0)
    return tuple((t, R[t]) for t in support if R[t] != 0.0)


def resolvent(kernel: HalfLineMeasure, T: float, h: float) -> ResolventFunction:
    """Solve ``rho + (-kernel) * rho = -kernel`` on ``[0, T]``.

    Atomic parts are tracked exactly; the density solves a Volterra equation with
    the full kernel and forcing ``-k_c + k_c * rho_atoms``.
    """
    n = round(T / h) + 1
    t = h * np.arange(n)
    r_atoms = _atom_resolvent(kernel.atoms, T)
    kc = HalfLineMeasure(pieces=kernel.pieces)
    forcing = -kc.density(t)
    for s, w in r_atoms:
        forcing = forcing + w * np.where(t >= s, kc.density(np.maximum(t - s, 0.0)), 0.0)
    prob = VolterraProblem(kernel, forcing, h)
    dens = solve_volterra(prob)
    resid = float(np.max(np.abs(volterra_residual(prob, dens)))) if n else 0.0
    mass = float(kernel.total_variation())
    if resid > 1e-8 * (1.0 + mass) * max(1.0, float(np.max(np.abs(dens)))):
        raise IllPosedError(f"resolvent identity residual {resid:g} exceeds tolerance")
    return ResolventFunction(h, dens, r_atoms, resid, mass)


@dataclass(frozen=True)
class Comparison:
    dominated: bool
    max_violation: float
    tolerance: float
    y: np.ndarray


def compare(x, p: VolterraProblem, C: float = 1.0, hyp_tol: float = 1e-9) -> Comparison:
    """Check ``x <= y`` where ``y`` solves the Volterra equality and ``x`` obeys the inequality."""
    x = np.asarray(x, dtype=float)
    if x.shape != p.forcing.shape:
        raise ValueError("x must live on the forcing grid")
    if not p.kernel.is_nonnegative():
        raise HypothesisError("comparison needs a nonnegative kernel")
    slack = convolve(p.kernel, x, p.grid_step) + p.forcing - x
    scale = 1.0 + float(np.max(np.abs(x)))
    if np.min(slack) < -hyp_tol * scale:
        k = int(np.argmin(slack))
        raise HypothesisError(f"x violates x <= kernel*x + f at t={k * p.grid_step:g} by {-slack[k]:.3g}")
    y = solve_volterra(p)
    viol = float(max(0.0, np.max(x - y)))
    tol = C * p.grid_step * (1.0 + float(np.max(np.abs(y))))
    return Comparison(viol <= tol, viol, tol, y)


@dataclass(frozen=True)
class RenewalLimit:
    limit_value: float  # z(t_max) from the long-horizon solve
    key_renewal_limit: float  # c / (delta * m1)
    upper_bound: float  # c (1 + 1/delta) / m1
    gamma1_mass: float  # 1 / m1
    first_moment: float
    agrees: bool


def renewal_asymptote(kernel: HalfLineMeasure, c: float, delta: float, t_max: float = 50.0,
                      h: float = 0.01, rel_tol: float = 0.02) -> RenewalLimit:
    """Long-run value of ``z = c e^{-delta t} + kernel * z`` for a probability kernel."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    mass = float(kernel.total_mass())
    if abs(mass - 1.0) > 1e-9:
        raise ValueError(f"renewal kernel must have unit mass, got {mass:.12g}")
    m1 = float(kernel.first_moment())
    if not (m1 > 0 and math.isfinite(m1)):
        raise ValueError("renewal kernel needs a positive finite first moment")
    if kernel.absolutely_continuous_mass() < MIN_AC_MASS:
        raise ValueError("renewal kernel needs a nontrivial absolutely continuous part")
    n = round(t_max / h) + 1
    t = h * np.arange(n)
    z = solve_volterra(VolterraProblem(kernel, c * np.exp(-delta * t), h))
    key = c / (delta * m1)
    bound = c * (1.0 + 1.0 / delta) / m1
    val = float(z[-1])
    agrees = abs(val - key) <= rel_tol * abs(key) if key != 0 else abs(val) <= 1e-12
    return RenewalLimit(val, key, bound, 1.0 / m1, m1, agrees)


def cumulative_kernel(kernel: HalfLineMeasure, t: np.ndarray) -> np.ndarray:
    return np.array([cumulative_mass(kernel, float(v)) for v in np.atleast_1d(t)])
