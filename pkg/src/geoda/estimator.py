"""Monte-Carlo estimation of the decision-boundary normal from label queries.

At a boundary point, Gaussian probes land on either side of the locally flat
boundary; kept with weight +1 when the label flips and -1 otherwise, they are
draws from a half-space-truncated Gaussian whose mean is parallel to
``Sigma @ w``. The normalized sign-weighted sample mean therefore estimates
the unit normal ``w``. Sampling covariances are represented implicitly
(identity, low-frequency DCT subspace, or biased toward a transferred
direction) so that no d x d matrix is ever materialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import GeodaError, RandomSource, as_point
from .oracle import DecisionOracle


class DegenerateMean(GeodaError):
    """The sign-weighted mean vanished: sigma is far too small or the probe
    point is not near the boundary."""


class InvalidSubspaceSize(GeodaError):
    pass


@dataclass(frozen=True)
class IdentityPrior:
    """Isotropic probes: covariance sigma * I."""

    sigma: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class SubspacePrior:
    """Probes restricted to the span of ``basis`` (rows orthonormal, shape (m, d)).

    Covariance is sigma/m * sum_i s_i s_i^T; sigma is a global amplitude so
    query points still live at boundary scale.
    """

    basis: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=np.float64))
        object.__setattr__(self, "basis", basis)
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        gram = basis @ basis.T
        if np.max(np.abs(gram - np.eye(len(basis)))) >= 1e-10:
            raise ValueError("subspace basis is not orthonormal")

    def __eq__(self, other):
        return (
            isinstance(other, SubspacePrior)
            and self.sigma == other.sigma
            and np.array_equal(self.basis, other.basis)
        )


@dataclass(frozen=True)
class TransferPrior:
    """Probes biased toward a transferred direction g (unit l2).

    Covariance is sigma * (beta * I + (1 - beta) * g g^T); beta trades
    exploration (isotropic) against exploitation of the transferred normal.
    beta = 1 collapses to the identity prior.
    """

    g: np.ndarray
    beta: float
    sigma: float = 1.0

    def __post_init__(self):
        g = as_point(self.g)
        object.__setattr__(self, "g", g)
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if abs(np.linalg.norm(g) - 1.0) > 1e-12:
            raise ValueError("transfer direction g must have unit l2 norm")

    def __eq__(self, other):
        return (
            isinstance(other, TransferPrior)
            and self.sigma == other.sigma
            and self.beta == other.beta
            and np.array_equal(self.g, other.g)
        )


def with_sigma(prior, sigma: float):
    """Copy of ``prior`` with its amplitude replaced."""
    return replace(prior, sigma=sigma)


def sample_perturbations(prior, rng: RandomSource, n: int, d: int) -> np.ndarray:
    """Draw n probes with the prior's covariance, via its implicit factorization."""
    root = math.sqrt(prior.sigma)
    if isinstance(prior, IdentityPrior):
        return root * rng.standard_normal((n, d))
    if isinstance(prior, SubspacePrior):
        basis = prior.basis
        if basis.shape[1] != d:
            raise ValueError(f"basis dimension {basis.shape[1]} != point dimension {d}")
        z = rng.standard_normal((n, basis.shape[0]))
        return (root / math.sqrt(basis.shape[0])) * (z @ basis)
    if isinstance(prior, TransferPrior):
        if prior.g.size != d:
            raise ValueError(f"g dimension {prior.g.size} != point dimension {d}")
        eps = rng.standard_normal((n, d))
        z = rng.standard_normal((n, 1))
        return root * (math.sqrt(prior.beta) * eps + math.sqrt(1.0 - prior.beta) * z * prior.g)
    raise TypeError(f"unknown prior {type(prior).__name__}")


def sample_perturbation(prior, rng: RandomSource, d: int) -> np.ndarray:
    return sample_perturbations(prior, rng, 1, d)[0]


def truncated_mean_constants(sigma: float = 1.0):
    """Mean and covariance constants of a centered Gaussian truncated to a
    half-space through its mean.

    For draws with covariance sigma * I kept on the side w.x >= 0 of a unit
    normal w, the truncated mean is c1 * sigma * w and the truncated
    covariance is sigma * I + c2 * w w^T, with

        c1 = phi(0) / (Phi(0) * sqrt(sigma)) = sqrt(2 / (pi * sigma))
        c2 = -(2 / pi) * sigma

    At sigma = 1 these reduce to sqrt(2/pi) ~ 0.7979 and -2/pi ~ -0.6366,
    the normalization used by the non-asymptotic estimator bound.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    c1 = math.sqrt(2.0 / (math.pi * sigma))
    c2 = -(2.0 / math.pi) * sigma
    return c1, c2


@dataclass(frozen=True)
class EstimatorBound:
    d: int
    n: int
    delta: float
    bound: float


def estimation_gamma(d: int, delta: float) -> float:
    """sqrt(Tr(R)) + sqrt(2 lambda_max log(1/delta)) at the sigma = 1 normalization."""
    _, c2 = truncated_mean_constants(1.0)
    return math.sqrt(d + c2) + math.sqrt(2.0 * (1.0 + c2) * math.log(1.0 / delta))


def estimator_error_bound(d: int, n: int, delta: float, sigma: float = 1.0) -> EstimatorBound:
    """Non-asymptotic bound on ||mean estimate - true truncated mean||.

    With probability at least 1 - delta, the sample mean of n half-space
    truncated draws lies within sqrt((d + c2)/n) + sqrt(2 (1 + c2) log(1/delta) / n)
    of the true mean (sigma = 1 normalization; general sigma scales the bound
    by sqrt(sigma)). Shrinks like 1/sqrt(n).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be at least 1")
    bound = math.sqrt(sigma) * estimation_gamma(d, delta) / math.sqrt(n)
    return EstimatorBound(d=d, n=n, delta=delta, bound=bound)


def dct_basis(height: int, width: int, channels: int, m: int) -> np.ndarray:
    """The m lowest-frequency orthonormal 2-D DCT-II basis images, as (m, d) rows.

    Frequencies (u, v) are ordered by increasing u + v, ties broken
    lexicographically. Each basis image is replicated across channels and
    normalized to unit l2, so with several channels at most height * width
    orthonormal vectors exist.
    """
    d = channels * height * width
    max_m = height * width
    if m > d or m > max_m:
        raise InvalidSubspaceSize(
            f"subspace size {m} exceeds the {max_m} replicated-channel basis images"
        )
    if m < 1:
        raise InvalidSubspaceSize("subspace size must be at least 1")

    freqs = sorted(
        ((u, v) for u in range(height) for v in range(width)),
        key=lambda uv: (uv[0] + uv[1], uv[0], uv[1]),
    )[:m]

    i = np.arange(height)
    j = np.arange(width)
    basis = np.empty((m, d))
    for row, (u, v) in enumerate(freqs):
        au = math.sqrt((1.0 if u == 0 else 2.0) / height)
        av = math.sqrt((1.0 if v == 0 else 2.0) / width)
        col_u = au * np.cos(math.pi * (2 * i + 1) * u / (2.0 * height))
        col_v = av * np.cos(math.pi * (2 * j + 1) * v / (2.0 * width))
        image = np.outer(col_u, col_v) / math.sqrt(channels)
        basis[row] = np.tile(image.reshape(-1), channels)
    return basis


@dataclass(frozen=True)
class NormalEstimate:
    """Unit estimate of the boundary normal plus bookkeeping.

    ``raw_mean_norm`` is the length of the sign-weighted mean before
    normalization; ``n_used`` counts every oracle query spent, including the
    orientation probe when one was made.
    """

    w_hat: np.ndarray
    n_used: int
    raw_mean_norm: float


def estimate_normal(
    decision: DecisionOracle,
    x_b: np.ndarray,
    x_orig: np.ndarray,
    n: int,
    prior,
    rng: RandomSource,
    orient: bool = True,
    chunk: int = 512,
) -> NormalEstimate:
    """Estimate the unit boundary normal at x_b from n label queries.

    Draws probes from the prior, queries x_b + eta (clipped into the oracle's
    valid box first, when it has one; the clipped offsets are what enter the
    mean), and averages the probes signed +1 on label flips and -1 otherwise.
    Queries are issued in fixed sample order, chunked, so results are
    seed-reproducible. With orient=True one extra query flips the estimate,
    if needed, so that stepping from x_orig along +w_hat moves into the
    adversarial region. All queries are charged to the estimation phase.
    """
    if n < 1:
        raise ValueError("need at least one query")
    x_b = as_point(x_b)
    d = x_b.size
    clip_box = decision.oracle.clip_box
    total = np.zeros(d)
    done = 0
    while done < n:
        take = min(chunk, n - done)
        etas = sample_perturbations(prior, rng, take, d)
        points = x_b + etas
        if clip_box is not None:
            np.clip(points, clip_box[0], clip_box[1], out=points)
            etas = points - x_b
        flips = decision.is_adversarial_batch(points, phase="estimation")
        signs = np.where(flips, 1.0, -1.0)
        total += signs @ etas
        done += take

    mean = total / n
    norm = float(np.linalg.norm(mean))
    if norm < 1e-15:
        raise DegenerateMean(
            "sign-weighted mean is numerically zero; increase sigma or refine the boundary point"
        )
    w_hat = mean / norm
    n_used = n
    if orient:
        scale = float(np.linalg.norm(x_b - as_point(x_orig)))
        probe = x_b + 1e-3 * max(scale, 1e-12) * w_hat
        if not decision.is_adversarial(probe, phase="estimation"):
            w_hat = -w_hat
        n_used += 1
    return NormalEstimate(w_hat=w_hat, n_used=n_used, raw_mean_norm=norm)


def calibrate_sigma(
    decision: DecisionOracle,
    x_b: np.ndarray,
    prior,
    rng: RandomSource,
    band=(0.35, 0.65),
    pilot: int = 32,
    max_rounds: int = 24,
):
    """Scale the prior's sigma until boundary probes split between classes.

    Probes x_b with small pilot batches (charged to the estimation phase) and
    doubles or halves sigma until the adversarial fraction falls inside
    ``band`` -- the regime where flipped and unflipped queries are roughly
    balanced and the local-flatness assumption is informative. When the search
    direction stops helping it reverses; an adversarial fraction pinned at 0
    or 1 for the whole search means the probe point never sees the boundary
    and raises DegenerateMean.

    Returns (calibrated prior, achieved fraction, pilot queries spent).
    """
    x_b = as_point(x_b)
    d = x_b.size
    lo, hi = band
    sigma = prior.sigma
    grow, factor = True, 2.0
    prev_gap = None
    spent = 0
    frac = float("nan")
    clip_box = decision.oracle.clip_box
    for _ in range(max_rounds):
        probes = x_b + sample_perturbations(with_sigma(prior, sigma), rng, pilot, d)
        if clip_box is not None:
            np.clip(probes, clip_box[0], clip_box[1], out=probes)
        flips = decision.is_adversarial_batch(probes, phase="estimation")
        spent += pilot
        frac = float(np.mean(flips))
        if lo <= frac <= hi:
            return with_sigma(prior, sigma), frac, spent
        gap = abs(frac - 0.5)
        if prev_gap is not None and gap > prev_gap + 1e-12:
            grow = not grow  # walked the wrong way; turn around, step finer
            factor = max(math.sqrt(factor), 1.05)
        prev_gap = gap
        sigma = sigma * factor if grow else sigma / factor
    raise DegenerateMean(
        f"sigma calibration did not converge after {max_rounds} rounds (last fraction {frac:.3f})"
    )
