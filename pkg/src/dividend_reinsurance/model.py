"""Model primitives: claim laws, economic parameters and the premium principle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Raised when model parameters violate their admissibility constraints."""


@dataclass(frozen=True)
class ExponentialClaims:
    """Exponentially distributed claim sizes with rate ``mu`` (mean ``1/mu``)."""

    mu: float
    kind: str = field(default="exponential", init=False)

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ModelError(f"exponential rate must be positive, got {self.mu}")

    def mean(self) -> float:
        return 1.0 / self.mu

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = -np.expm1(-self.mu * np.maximum(y, 0.0))
        return out if out.ndim else float(out)

    def partial_mean(self, y):
        """Return ``E[U; U <= y]``, the first moment truncated at ``y``."""
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        s = self.mu * y
        out = (-np.expm1(-s) - s * np.exp(-s)) / self.mu
        return out if out.ndim else float(out)

    def support(self) -> tuple[float, float]:
        return 0.0, math.inf

    def segment_moments(self, y0, y1):
        """Return ``(P(y0 < U <= y1), E[(U - y0); y0 < U <= y1])`` for ``0 <= y0 <= y1``."""
        y0 = np.asarray(y0, dtype=float)
        h = np.maximum(np.asarray(y1, dtype=float) - y0, 0.0)
        w = np.exp(-self.mu * y0)
        return w * -np.expm1(-self.mu * h), w * self.partial_mean(h)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.exponential(1.0 / self.mu, size=size)

    def describe(self) -> str:
        return f"exponential mu={self.mu!r}"


@dataclass(frozen=True)
class UniformClaims:
    """Claim sizes uniform on ``[low, high]``."""

    low: float
    high: float
    kind: str = field(default="uniform", init=False)

    def __post_init__(self):
        if not (self.low >= 0 and self.high > self.low and math.isfinite(self.high)):
            raise ModelError(f"uniform bounds need 0 <= min < max, got ({self.low}, {self.high})")

    def mean(self) -> float:
        return 0.5 * (self.low + self.high)

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.clip((y - self.low) / (self.high - self.low), 0.0, 1.0)
        return out if out.ndim else float(out)

    def partial_mean(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.low, self.high)
        out = (y * y - self.low * self.low) / (2.0 * (self.high - self.low))
        return out if out.ndim else float(out)

    def support(self) -> tuple[float, float]:
        return self.low, self.high

    def segment_moments(self, y0, y1):
        y0 = np.asarray(y0, dtype=float)
        s0 = np.clip(y0, self.low, self.high)
        s1 = np.clip(np.asarray(y1, dtype=float), self.low, self.high)
        s1 = np.maximum(s1, s0)
        width = self.high - self.low
        return (s1 - s0) / width, ((s1 - y0) ** 2 - (s0 - y0) ** 2) / (2.0 * width)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(self.low, self.high, size=size)

    def describe(self) -> str:
        return f"uniform min={self.low!r} max={self.high!r}"


ClaimLaw = ExponentialClaims | UniformClaims


@dataclass(frozen=True)
class ModelParams:
    """Economic and stochastic primitives of the controlled surplus process.

    Attributes
    ----------
    lam : claim arrival intensity.
    claims : claim-size law.
    eta1, eta2 : insurer and reinsurer safety loadings, ``eta2 > eta1 > 0``.
    q : discount rate.
    k : proportional cost of capital injections, ``k >= 1``.
    a : deepest deficit that is still bailed out.
    period : length of the interval between reinsurance revisions.
    """

    lam: float
    claims: ClaimLaw
    eta1: float
    eta2: float
    q: float
    k: float
    a: float
    period: float = 1.0

    def __post_init__(self):
        checks = [
            (self.lam > 0, "lambda must be positive"),
            (self.eta1 > 0, "eta1 must be positive"),
            (self.eta2 > self.eta1, "eta2 must exceed eta1"),
            (self.q > 0, "q must be positive"),
            (self.k >= 1, "k must be at least 1"),
            (self.a > 0, "a must be positive"),
            (self.period > 0, "period must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ModelError(msg)

    @property
    def claim_mean(self) -> float:
        return self.claims.mean()

    @property
    def c(self) -> float:
        """Gross premium rate under the expected value principle."""
        return (1.0 + self.eta1) * self.lam * self.claim_mean

    @property
    def alpha_low(self) -> float:
        return lowest_retention(self.eta1, self.eta2)

    def replace(self, **changes) -> "ModelParams":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class RetentionBounds:
    alpha_low: float
    alpha_high: float = 1.0


def claim_mean(law: ClaimLaw) -> float:
    return law.mean()


def claim_cdf(law: ClaimLaw, y):
    return law.cdf(y)


def premium_rate(params: ModelParams, alpha):
    """Net premium rate kept by the insurer at retention ``alpha``.

    Negative below the lowest admissible retention; callers enforce admissibility.
    """
    alpha = np.asarray(alpha, dtype=float)
    out = params.lam * params.claim_mean * (1.0 + params.eta1 - (1.0 - alpha) * (1.0 + params.eta2))
    # pin the root exactly so zero-drift strategies carry no rounding residue
    out = np.where(alpha == params.alpha_low, 0.0, out)
    return out if out.ndim else float(out)


def premium_rate_slope(params: ModelParams) -> float:
    """Derivative of :func:`premium_rate` with respect to the retention."""
    return params.lam * params.claim_mean * (1.0 + params.eta2)


def lowest_retention(eta1: float, eta2: float) -> float:
    """Retention at which the net premium rate vanishes.

    Equal loadings give 0 (reinsurance at cost); ``eta2 < eta1`` is rejected.
    """
    if eta2 < eta1:
        raise ModelError(f"lowest retention needs eta2 >= eta1, got eta1={eta1}, eta2={eta2}")
    return (eta2 - eta1) / (eta2 + 1.0)


def retention_bounds(params: ModelParams) -> RetentionBounds:
    return RetentionBounds(params.alpha_low)
