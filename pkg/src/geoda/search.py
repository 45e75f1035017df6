"""Query-frugal one-dimensional searches along segments and rays.

All tolerances are relative: a bracket is refined until its width drops below
``tol`` times its length (for segments) or ``tol`` times the radius (for
rays), so bisection costs exactly ceil(log2(1/tol)) queries regardless of
scale. Boundary points are always returned on the adversarial side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GeodaError, RandomSource, as_point
from .oracle import DecisionOracle


class NoAdversarialFound(GeodaError):
    """Random-direction walk never left the original class region."""


class NoCrossingFound(GeodaError):
    """No label flip along the ray within the expansion limit."""


@dataclass(frozen=True)
class SearchConfig:
    """tol is the relative bracket width at which bisection stops;
    init_radius_growth is the geometric expansion factor for bracketing."""

    tol: float = 1e-4
    max_steps: int = 40
    init_radius_growth: float = 2.0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.init_radius_growth <= 1:
            raise ValueError("init_radius_growth must exceed 1")


def bisect_to_boundary(
    decision: DecisionOracle, x_clean: np.ndarray, x_adv: np.ndarray, cfg: SearchConfig
) -> np.ndarray:
    """Shrink [x_clean, x_adv] around the label flip; return the adversarial end.

    Both endpoint labels must already be known (clean / adversarial); they are
    not re-queried. Costs exactly ceil(log2(1/tol)) queries, charged to the
    binary-search phase.
    """
    x_clean = as_point(x_clean)
    x_adv = as_point(x_adv)
    delta = x_adv - x_clean
    if not np.any(delta):
        return x_adv
    lo, hi, width = 0.0, 1.0, 1.0
    while width > cfg.tol:
        mid = 0.5 * (lo + hi)
        if decision.is_adversarial(x_clean + mid * delta, phase="binary_search"):
            hi = mid
        else:
            lo = mid
        width *= 0.5
    return x_clean + hi * delta


def find_initial_boundary_point(
    decision: DecisionOracle, x: np.ndarray, rng: RandomSource, cfg: SearchConfig
) -> np.ndarray:
    """Find a first boundary point: random direction, geometric walk, bisect.

    Walks x + rho * u with rho growing geometrically from a scale set by the
    data point until the label flips, then bisects the last segment. Rays
    that never flip within max_steps expansions are retried with fresh
    directions (up to max_steps of them) before giving up. Queries are
    charged to the binary-search phase.
    """
    x = as_point(x)
    scale = max(float(np.mean(np.abs(x))), 1e-3)
    rho0 = 0.1 * math.sqrt(x.size) * scale
    for _ in range(cfg.max_steps):
        u = rng.unit_vector(x.size)
        rho = rho0
        for _ in range(cfg.max_steps):
            candidate = x + rho * u
            if decision.is_adversarial(candidate, phase="binary_search"):
                return bisect_to_boundary(decision, x, candidate, cfg)
            rho *= cfg.init_radius_growth
    raise NoAdversarialFound(
        f"no adversarial point within {cfg.max_steps} directions x {cfg.max_steps} expansions"
    )


def line_search_radius(
    decision: DecisionOracle, x: np.ndarray, v: np.ndarray, r_hint: float, cfg: SearchConfig
) -> float:
    """Smallest radius r with x + r*v adversarial, within relative tol.

    v must be unit l2; r_hint (typically the previous iterate's radius) seeds
    the bracket, which is expanded or contracted geometrically and then
    bisected. Returns r_hat with x + r_hat*v adversarial and
    x + (r_hat - tol*r_hat)*v not. Queries go to the line-search phase.
    """
    x = as_point(x)
    v = as_point(v)
    if r_hint <= 0:
        raise ValueError("r_hint must be positive")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("direction must have unit l2 norm")

    def adversarial(r: float) -> bool:
        return decision.is_adversarial(x + r * v, phase="line_search")

    if adversarial(r_hint):
        # contract toward x; the data point itself (r = 0) is clean
        hi = r_hint
        lo = 0.0
        r = r_hint
        for _ in range(cfg.max_steps):
            r /= cfg.init_radius_growth
            if not adversarial(r):
                lo = r
                break
            hi = r
    else:
        lo = r_hint
        hi = None
        r = r_hint
        for _ in range(cfg.max_steps):
            r *= cfg.init_radius_growth
            if adversarial(r):
                hi = r
                break
            lo = r
        if hi is None:
            raise NoCrossingFound(
                f"no label flip up to radius {r:.3g} along the search direction"
            )

    while hi - lo > cfg.tol * hi:
        mid = 0.5 * (lo + hi)
        if adversarial(mid):
            hi = mid
        else:
            lo = mid
    return hi
