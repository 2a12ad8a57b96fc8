"""Privacy-loss arithmetic: composition, variant conversion, group privacy,
Gaussian calibration across units, and filter checks.

All functions are pure and safe for unrestricted parallel use.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .core import (
    ADP,
    DEFAULT_ALPHA_ORDERS,
    PrivacyBudget,
    PrivacyUnit,
    PureDP,
    RDP,
    ZCDP,
)
from .errors import (
    DeltaOverflow,
    NoConversionPath,
    UnsupportedVariant,
    ValidationError,
    VariantMismatch,
)


def zero_curve(orders: Sequence[float] = DEFAULT_ALPHA_ORDERS) -> RDP:
    return RDP((0.0,) * len(orders))


def gaussian_curve(rho: float, orders: Sequence[float] = DEFAULT_ALPHA_ORDERS) -> RDP:
    """RDP curve of a Gaussian-family mechanism: rho * alpha at each order."""
    if rho < 0:
        raise ValidationError("rho must be non-negative")
    return RDP(tuple(rho * a for a in orders))


def pure_curve(epsilon: float, orders: Sequence[float] = DEFAULT_ALPHA_ORDERS) -> RDP:
    """RDP curve of a pure epsilon-DP mechanism, constant across orders."""
    if epsilon < 0:
        raise ValidationError("epsilon must be non-negative")
    return RDP((epsilon,) * len(orders))


def compose_rdp(costs: Iterable[RDP], orders: Sequence[float] = DEFAULT_ALPHA_ORDERS) -> RDP:
    """Sequential composition of RDP costs: pointwise sum per alpha order."""
    total = [0.0] * len(orders)
    for c in costs:
        if not isinstance(c, RDP):
            raise VariantMismatch(f"compose_rdp expects RDP curves, got {type(c).__name__}")
        if len(c.curve) != len(orders):
            raise VariantMismatch("RDP curve not over the configured alpha orders")
        for i, v in enumerate(c.curve):
            total[i] += v
    return RDP(tuple(total))


def compose_adp_basic(costs: Iterable[ADP]) -> ADP:
    """Basic sequential composition for ADP: epsilons and deltas add."""
    eps = 0.0
    delta = 0.0
    for c in costs:
        if not isinstance(c, ADP):
            raise VariantMismatch(f"compose_adp_basic expects ADP, got {type(c).__name__}")
        eps += c.epsilon
        delta += c.delta
    if delta >= 1.0:
        raise DeltaOverflow(f"composed delta {delta} >= 1")
    return ADP(eps, delta)


def rdp_to_adp(cost: RDP, delta: float, orders: Sequence[float] = DEFAULT_ALPHA_ORDERS) -> ADP:
    """Convert an RDP curve to approximate DP at a target delta.

    epsilon = min over the configured orders of curve(a) + ln(1/delta)/(a-1).
    """
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1)")
    if len(cost.curve) != len(orders):
        raise VariantMismatch("RDP curve not over the configured alpha orders")
    ln1d = math.log(1.0 / delta)
    eps = min(c + ln1d / (a - 1.0) for c, a in zip(cost.curve, orders))
    return ADP(eps, delta)


def zcdp_to_adp(rho: float, delta: float, mode: str = "tight_numeric") -> ADP:
    """Convert a zCDP guarantee to approximate DP at a target delta.

    ``closed_form`` uses rho + 2*sqrt(rho*ln(1/delta)).  ``tight_numeric``
    minimises rho*a + ln(1/delta)/(a-1) + ln(1 - 1/a) over a dense grid of
    orders a > 1 with local refinement; it never exceeds the closed form.
    """
    if rho < 0:
        raise ValidationError("rho must be non-negative")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1)")
    ln1d = math.log(1.0 / delta)
    if mode == "closed_form":
        return ADP(rho + 2.0 * math.sqrt(rho * ln1d), delta)
    if mode != "tight_numeric":
        raise ValidationError(f"unknown conversion mode {mode!r}")
    if rho == 0.0:
        return ADP(0.0, delta)

    def f(alpha: float) -> float:
        return rho * alpha + ln1d / (alpha - 1.0) + math.log1p(-1.0 / alpha)

    # Log grid over alpha - 1; widen the top end when the unconstrained
    # optimum 1 + sqrt(ln(1/delta)/rho) would fall outside it.
    hi = max(6.0, math.log10(math.sqrt(ln1d / rho)) + 1.0)
    grid = 1.0 + np.logspace(-6.0, hi, 10_000)
    vals = rho * grid + ln1d / (grid - 1.0) + np.log1p(-1.0 / grid)
    i = int(np.argmin(vals))
    lo_b = grid[max(i - 1, 0)]
    hi_b = grid[min(i + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(f, bounds=(lo_b, hi_b), method="bounded")
    eps = min(float(vals[i]), float(res.fun))
    return ADP(max(eps, 0.0), delta)


def group_privacy(budget: PrivacyBudget, k: int) -> PrivacyBudget:
    """Scale a guarantee to protect k simultaneous unit changes.

    Pure DP scales epsilon linearly; zCDP scales rho by k^2.  Group privacy
    for ADP/RDP is rejected (out of scope); k = 1 is the identity for every
    variant.
    """
    if not isinstance(k, int) or k < 1:
        raise ValidationError("group size must be a positive integer")
    if k == 1:
        return budget
    if isinstance(budget, PureDP):
        return PureDP(k * budget.epsilon)
    if isinstance(budget, ZCDP):
        return ZCDP(k * k * budget.rho)
    raise UnsupportedVariant(f"group privacy with k > 1 undefined for {type(budget).__name__}")


def convert_unit(budget: PrivacyBudget, src: PrivacyUnit, dst: PrivacyUnit) -> PrivacyBudget:
    """Express a guarantee for unit ``src`` as one for unit ``dst`` via the
    declared group-size factor."""
    if src.name == dst.name:
        return budget
    k = src.group_factor_to.get(dst.name)
    if k is None:
        raise NoConversionPath(f"no group factor declared from {src.name!r} to {dst.name!r}")
    return group_privacy(budget, k)


def gaussian_sigma(delta2: float, epsilon: float, delta: float) -> float:
    """Gaussian-mechanism noise scale for an L2 sensitivity and ADP target:
    sigma = delta2 * sqrt(2 ln(1.25/delta)) / epsilon."""
    if delta2 <= 0 or epsilon <= 0 or delta <= 0:
        raise ValidationError("sensitivity, epsilon and delta must be positive")
    if delta >= 1:
        raise ValidationError("delta must be below 1")
    return delta2 * math.sqrt(2.0 * math.log(1.25 / delta)) / epsilon


def epsilon_for_auxiliary_unit(sigma: float, aux_delta2: float, delta: float) -> float:
    """Privacy parameter implied for an auxiliary unit by rearranging the
    Gaussian calibration with that unit's sensitivity."""
    if sigma <= 0 or aux_delta2 <= 0 or delta <= 0:
        raise ValidationError("sigma, sensitivity and delta must be positive")
    return aux_delta2 * math.sqrt(2.0 * math.log(1.25 / delta)) / sigma


def filter_check(
    cumulative: RDP,
    new_cost: RDP,
    budget: PrivacyBudget,
    orders: Sequence[float] = DEFAULT_ALPHA_ORDERS,
) -> bool:
    """Would admitting ``new_cost`` on top of ``cumulative`` stay within budget?

    RDP budgets accept when some order stays within the curve; ADP budgets
    convert the composed curve at the budget's delta.
    """
    composed = compose_rdp([cumulative, new_cost], orders)
    if isinstance(budget, RDP):
        if len(budget.curve) != len(orders):
            raise VariantMismatch("budget curve not over the configured alpha orders")
        return any(c <= b for c, b in zip(composed.curve, budget.curve))
    if isinstance(budget, ADP):
        return rdp_to_adp(composed, budget.delta, orders).epsilon <= budget.epsilon
    raise VariantMismatch(f"filter budgets must be ADP or RDP, got {type(budget).__name__}")


def scale_budget(budget: PrivacyBudget, fraction: float) -> PrivacyBudget:
    """Scale the headline privacy parameter (unlocking); delta stays fixed."""
    if fraction < 0:
        raise ValidationError("scale fraction must be non-negative")
    if fraction == 1.0:
        return budget
    if isinstance(budget, PureDP):
        return PureDP(budget.epsilon * fraction)
    if isinstance(budget, ADP):
        return ADP(budget.epsilon * fraction, budget.delta)
    if isinstance(budget, ZCDP):
        return ZCDP(budget.rho * fraction)
    return RDP(tuple(c * fraction for c in budget.curve))


@lru_cache(maxsize=256)
def _calibrate_cached(epsilon: float, delta: float, orders: tuple[float, ...]) -> float:
    floor = rdp_to_adp(zero_curve(orders), delta, orders).epsilon
    if epsilon <= floor:
        return 0.0

    def gap(rho: float) -> float:
        return rdp_to_adp(gaussian_curve(rho, orders), delta, orders).epsilon - epsilon

    hi = 1.0
    while gap(hi) < 0:
        hi *= 2.0
    return float(optimize.brentq(gap, 0.0, hi, xtol=1e-15, rtol=1e-14))


def calibrate_gaussian_rho(
    epsilon: float,
    delta: float,
    orders: Sequence[float] = DEFAULT_ALPHA_ORDERS,
) -> float:
    """Find rho so the Gaussian curve rho*alpha converts to the target epsilon
    at the given delta over the configured orders."""
    if epsilon < 0:
        raise ValidationError("epsilon must be non-negative")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1)")
    return _calibrate_cached(float(epsilon), float(delta), tuple(orders))
