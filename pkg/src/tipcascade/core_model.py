"""Model definitions: cubic bistable element, ramp forcing, coupling functions.

Both subsystems of the cascade share the canonical cubic drift
``f(u, mu) = 3*u - u**3 + mu``, which has a hysteresis loop for forcing
between -2 and +2 with non-degenerate folds at (u, mu) = (+1, -2) and
(-1, +2).  The upstream element is driven by a monotone tanh ramp, the
downstream element by a function of the upstream state (linear or
localised coupling).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Union

import numpy as np

__all__ = [
    "Branch",
    "ConfigError",
    "CubicElement",
    "ParameterShift",
    "LinearCoupling",
    "LocalisedCoupling",
    "Coupling",
    "SolverSettings",
    "CascadeConfig",
    "EquilibriumRoot",
    "drift",
    "drift_state_derivative",
    "equilibria",
    "branch_state",
    "coupling_value",
    "coupling_preimages",
    "coupling_max_on_interval",
    "resolve_coupling",
]

SQRT3 = math.sqrt(3.0)

#: Residual target for refined equilibrium roots.
ROOT_RESIDUAL_TOL = 1e-13


class ConfigError(ValueError):
    """Invalid model or solver configuration."""


class Branch(str, Enum):
    """Equilibrium branch of the cubic element."""

    LOWER = "lower"
    MIDDLE = "middle"
    UPPER = "upper"


@dataclass(frozen=True)
class CubicElement:
    """Canonical bistable element with drift 3u - u^3 + mu.

    The element is parameter free; it exposes the fold locations of its
    hysteresis loop.  ``fold_state(level)`` returns the state at which the
    stable/unstable pair collides when the forcing reaches ``level``.
    """

    lambda_lower: float = -2.0
    lambda_upper: float = 2.0

    def fold_state(self, level: float) -> float:
        if level == self.lambda_upper:
            return -1.0
        if level == self.lambda_lower:
            return 1.0
        raise ValueError(f"no fold at forcing level {level!r}")


def drift(u, mu):
    """Cubic drift 3u - u^3 + mu; accepts scalars or arrays."""
    return 3.0 * u - u * u * u + mu


def drift_state_derivative(u):
    """d(drift)/du = 3 - 3u^2."""
    return 3.0 - 3.0 * u * u


@dataclass(frozen=True)
class ParameterShift:
    """Monotone tanh ramp between the asymptotic levels lambda_minus/plus.

    ``value(t) = lambda_minus + (lambda_plus - lambda_minus) * (tanh(rate*t) + 1) / 2``.
    ``saturation`` is the scaled time |s| beyond which the ramp is treated
    as numerically constant (|tanh(15) - 1| < 1e-12).
    """

    lambda_minus: float = 0.0
    lambda_plus: float = 4.0
    rate: float = 0.05
    saturation: float = 15.0

    def __post_init__(self) -> None:
        if not (self.rate > 0.0):
            raise ConfigError(f"shift rate must be positive, got {self.rate}")
        if not (self.saturation > 0.0):
            raise ConfigError(f"shift saturation must be positive, got {self.saturation}")

    def value_scaled(self, s):
        """Forcing level at scaled time s = rate * t."""
        return self.lambda_minus + (self.lambda_plus - self.lambda_minus) * 0.5 * (
            np.tanh(s) + 1.0
        )

    def value(self, t):
        """Forcing level at simulation time t."""
        return self.value_scaled(self.rate * np.asarray(t))


@dataclass(frozen=True)
class LinearCoupling:
    """M(x) = a + b * (x - x_ref).

    ``x_ref`` defaults to the lower-branch state of the past-limit system;
    with the default forcing (lambda_minus = 0) that is -sqrt(3).  Leave it
    as None to have :class:`CascadeConfig` fill it in from its own shift.
    """

    a: float = 0.0
    b: float = 1.0
    x_ref: float | None = None

    kind = "linear"

    def __post_init__(self) -> None:
        if self.b < 0.0:
            raise ConfigError(f"coupling strength b must be >= 0, got {self.b}")

    @property
    def _x_ref(self) -> float:
        return -SQRT3 if self.x_ref is None else self.x_ref

    def value(self, x):
        return self.a + self.b * (x - self._x_ref)

    def preimages(self, level: float) -> list[float]:
        """States x with M(x) = level (empty when unattained)."""
        if self.b == 0.0:
            return []
        return [(level - self.a) / self.b + self._x_ref]

    def max_on_interval(self, lo: float, hi: float) -> float:
        """Exact maximum of M over [lo, hi] (M is monotone)."""
        return max(self.value(lo), self.value(hi))


@dataclass(frozen=True)
class LocalisedCoupling:
    """M(x) = a + b * sech(c * (x - d)); peaks at x = d with value a + b."""

    a: float = 0.0
    b: float = 1.0
    c: float = 2.0
    d: float = 0.5

    kind = "localised"

    def __post_init__(self) -> None:
        if self.b < 0.0:
            raise ConfigError(f"coupling strength b must be >= 0, got {self.b}")
        if not (self.c > 0.0):
            raise ConfigError(f"coupling width parameter c must be positive, got {self.c}")

    def value(self, x):
        return self.a + self.b / np.cosh(self.c * (x - self.d))

    def preimages(self, level: float) -> list[float]:
        """States x with M(x) = level; empty when the level is unattained.

        Requires (level - a)/b in (0, 1]; the two preimages coincide at the
        peak level a + b.
        """
        if self.b == 0.0:
            return []
        s = (level - self.a) / self.b
        if not (0.0 < s <= 1.0):
            return []
        delta = math.acosh(1.0 / s) / self.c
        if delta == 0.0:
            return [self.d]
        return [self.d - delta, self.d + delta]

    def max_on_interval(self, lo: float, hi: float) -> float:
        """Exact maximum of M over [lo, hi] (peak at d, decaying tails)."""
        peak = min(max(self.d, lo), hi)
        return self.value(peak)


Coupling = Union[LinearCoupling, LocalisedCoupling]


def resolve_coupling(coupling: Coupling, shift: ParameterShift | None = None) -> Coupling:
    """Fill a linear coupling's unset x_ref with the past-limit lower state."""
    if isinstance(coupling, LinearCoupling) and coupling.x_ref is None:
        lam = shift.lambda_minus if shift is not None else 0.0
        return replace(coupling, x_ref=branch_state(Branch.LOWER, lam))
    return coupling


def coupling_value(coupling: Coupling, x):
    """Effective downstream forcing M(x)."""
    return coupling.value(x)


def coupling_preimages(coupling: Coupling, level: float) -> list[float]:
    """All states mapping to the given forcing level (may be empty)."""
    return coupling.preimages(level)


def coupling_max_on_interval(coupling: Coupling, lo: float, hi: float) -> float:
    """Exact maximum of M over a closed state interval."""
    return coupling.max_on_interval(lo, hi)


@dataclass(frozen=True)
class EquilibriumRoot:
    """One real root of the cubic drift at fixed forcing."""

    value: float
    stable: bool
    branch: Branch
    multiplicity: int = 1

    @property
    def degenerate(self) -> bool:
        return self.multiplicity > 1


def _branch_of(u: float) -> Branch:
    if u < -1.0:
        return Branch.LOWER
    if u > 1.0:
        return Branch.UPPER
    return Branch.MIDDLE


def _newton_polish(u: float, mu: float) -> float:
    # Closed-form roots carry O(sqrt(eps)) error near the folds; one or two
    # Newton steps restore residuals below ROOT_RESIDUAL_TOL away from the
    # exactly degenerate case.
    for _ in range(2):
        f = drift(u, mu)
        if abs(f) <= 0.25 * ROOT_RESIDUAL_TOL:
            break
        fp = drift_state_derivative(u)
        if fp == 0.0:
            break
        u -= f / fp
    return u


def equilibria(mu: float) -> list[EquilibriumRoot]:
    """All real equilibria of the cubic at forcing mu, ascending in state.

    Roots are computed in closed form (trigonometric method for three real
    roots, hyperbolic form otherwise) and polished by Newton steps.  For
    |mu| strictly between the fold levels there are exactly three roots; at
    |mu| = 2 the double root is reported once with multiplicity 2 (the fold
    is tagged, not treated as a failure); beyond, a single root remains.
    Stability follows the sign of 3 - 3u^2; the exactly degenerate double
    root has zero derivative and is reported unstable.  Double roots are
    labelled with the stable branch they terminate (lower at mu = +2, upper
    at mu = -2).
    """
    if not math.isfinite(mu):
        raise ValueError(f"forcing must be finite, got {mu}")
    # Roots of u^3 - 3u - mu = 0.
    if mu == 2.0:
        # 3u - u^3 + 2 = -(u + 1)^2 (u - 2)
        return [
            EquilibriumRoot(-1.0, False, Branch.LOWER, multiplicity=2),
            EquilibriumRoot(2.0, True, Branch.UPPER),
        ]
    if mu == -2.0:
        # 3u - u^3 - 2 = -(u - 1)^2 (u + 2)
        return [
            EquilibriumRoot(-2.0, True, Branch.LOWER),
            EquilibriumRoot(1.0, False, Branch.UPPER, multiplicity=2),
        ]
    if abs(mu) < 2.0:
        phi = math.acos(mu / 2.0)
        raw = [2.0 * math.cos((phi - 2.0 * math.pi * k) / 3.0) for k in (0, 1, 2)]
        roots = sorted(_newton_polish(u, mu) for u in raw)
        return [
            EquilibriumRoot(u, drift_state_derivative(u) < 0.0, _branch_of(u))
            for u in roots
        ]
    u = math.copysign(2.0 * math.cosh(math.acosh(abs(mu) / 2.0) / 3.0), mu)
    u = _newton_polish(u, mu)
    return [EquilibriumRoot(u, True, _branch_of(u))]


def branch_state(branch: Branch, mu: float) -> float:
    """State of the requested equilibrium branch at forcing mu.

    Branch domains: lower for mu < 2, upper for mu > -2, middle for
    -2 < mu < 2.  Raises ValueError when the branch does not exist.  The
    degenerate endpoints mu = +/-2 resolve to the terminating state of the
    stable branches (lower(2) = -1, upper(-2) = 1).
    """
    branch = Branch(branch)
    roots = equilibria(mu)
    if branch is Branch.LOWER:
        if mu > 2.0:
            raise ValueError(f"lower branch absent for forcing {mu} > 2")
        return roots[0].value
    if branch is Branch.UPPER:
        if mu < -2.0:
            raise ValueError(f"upper branch absent for forcing {mu} < -2")
        return roots[-1].value
    if not (-2.0 < mu < 2.0):
        raise ValueError(f"middle branch absent for forcing {mu}")
    return roots[1].value


@dataclass(frozen=True)
class SolverSettings:
    """Adaptive integrator and event-localisation controls.

    ``max_step`` defaults to 0.1/rate when left as None.  Integration
    starts at scaled time -burn_in_s and, once the ramp has saturated
    (s >= burn_in_s), stops as soon as the state is within ``settle_tol``
    (sup norm) of a stable frozen equilibrium at lambda_plus; the hard
    horizon is (burn_in_s + horizon_factor * max(1, epsilon)) / rate.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-10
    max_step: float | None = None
    event_time_tol: float = 1e-10
    burn_in_s: float = 15.0
    settle_tol: float = 1e-6
    horizon_factor: float = 50.0
    max_nodes: int = 2_000_000

    def __post_init__(self) -> None:
        for name in ("rel_tol", "abs_tol", "event_time_tol", "burn_in_s", "settle_tol"):
            if not (getattr(self, name) > 0.0):
                raise ConfigError(f"solver {name} must be positive")
        if self.max_step is not None and not (self.max_step > 0.0):
            raise ConfigError("solver max_step must be positive")
        if self.max_nodes < 1000:
            raise ConfigError("solver max_nodes too small")

    def resolved_max_step(self, rate: float) -> float:
        return 0.1 / rate if self.max_step is None else self.max_step


#: Smallest timescale ratio the explicit solver accepts.
EPSILON_MIN = 1e-3


@dataclass(frozen=True)
class CascadeConfig:
    """Full problem statement for one cascade run.

    ``offset_threshold`` is the state level w whose upward crossing marks
    the completion of tipping for either subsystem.  It must isolate the
    upper stable branch at the forcing limit: strictly above the unstable
    branch at lambda_plus (or above the fold state -1 once that branch has
    terminated) and strictly below the upper branch there.
    """

    shift: ParameterShift = field(default_factory=ParameterShift)
    coupling: Coupling = field(default_factory=LinearCoupling)
    epsilon: float = 0.05
    offset_threshold: float = 1.8
    solver: SolverSettings = field(default_factory=SolverSettings)
    element: CubicElement = field(default_factory=CubicElement)

    def __post_init__(self) -> None:
        if not (self.epsilon >= EPSILON_MIN):
            raise ConfigError(
                f"epsilon must be >= {EPSILON_MIN} for the explicit solver, got {self.epsilon}"
            )
        if not (self.shift.lambda_minus < self.element.lambda_upper):
            raise ConfigError(
                f"lambda_minus must lie below the upper fold level 2, got {self.shift.lambda_minus}"
            )
        lam_plus = self.shift.lambda_plus
        if not (lam_plus > self.element.lambda_lower):
            raise ConfigError(
                f"lambda_plus must exceed the lower fold level -2, got {lam_plus}"
            )
        upper = branch_state(Branch.UPPER, lam_plus)
        if -2.0 < lam_plus < 2.0:
            floor = branch_state(Branch.MIDDLE, lam_plus)
        else:
            floor = -1.0  # unstable branch terminates at the fold state
        if not (floor < self.offset_threshold < upper):
            raise ConfigError(
                f"offset threshold w={self.offset_threshold} must lie strictly between "
                f"{floor} and the upper branch {upper:.6f} at lambda_plus={lam_plus}"
            )
        if self.solver.burn_in_s < self.shift.saturation:
            warnings.warn(
                "solver burn_in_s is below the shift saturation time; the ramp "
                "will not have settled at the start of integration",
                stacklevel=2,
            )
        object.__setattr__(self, "coupling", resolve_coupling(self.coupling, self.shift))

    @property
    def w(self) -> float:
        return self.offset_threshold
