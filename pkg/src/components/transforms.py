"""
Uniform-to-state maps: Gaussian inverse CDF, the chain-rule (Rosenblatt)
inverse of Gaussian kernels, and the logistic rescaling psi that sends states
into the unit cube before Hilbert indexing.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from src.utils.errors import DomainError, InvalidCovarianceError, ModelParameterError

PSI_EPS = 2.0 ** -52


@dataclass(frozen=True)
class PsiBounds:
    """Per-coordinate constants (lower, upper) of the rescaled logistic map."""
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ModelParameterError("psi bounds need two vectors of the same length")
        if not np.all(lower < upper):
            raise ModelParameterError("psi bounds need lower < upper in every coordinate")
        object.__setattr__(self, 'lower', lower)
        object.__setattr__(self, 'upper', upper)

    @property
    def d(self) -> int:
        return self.lower.size

    @classmethod
    def stationary(cls, mean, std) -> 'PsiBounds':
        """mean -/+ 2 std of a stationary law."""
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        std = np.atleast_1d(np.asarray(std, dtype=np.float64))
        return cls(mean - 2.0 * std, mean + 2.0 * std)

    @classmethod
    def from_range(cls, low, high, margin: float = 0.1) -> 'PsiBounds':
        """Observed [low, high] widened by `margin` of the span on each side."""
        low = np.atleast_1d(np.asarray(low, dtype=np.float64))
        high = np.atleast_1d(np.asarray(high, dtype=np.float64))
        span = np.maximum(high - low, 1e-12)
        return cls(low - margin * span, high + margin * span)

    def tile(self, times: int) -> 'PsiBounds':
        return PsiBounds(np.tile(self.lower, times), np.tile(self.upper, times))

    def extend(self, lower, upper) -> 'PsiBounds':
        return PsiBounds(np.concatenate([np.atleast_1d(lower), self.lower]),
                         np.concatenate([np.atleast_1d(upper), self.upper]))


def norm_inv_cdf(u):
    """Standard normal quantile (scipy's ndtri); u must lie strictly inside (0, 1)."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError("norm_inv_cdf is defined on the open interval (0, 1)")
    z = special.ndtri(arr)
    return float(z) if np.ndim(u) == 0 else z


@dataclass(frozen=True)
class GaussianKernelSpec:
    """
    x | x_prev ~ N(offset + transition @ x_prev, chol @ chol.T).

    `transition` may be rectangular (d_out x d_in) or None for a kernel that
    does not depend on the previous state.
    """
    chol: np.ndarray
    transition: Optional[np.ndarray] = None
    offset: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        chol = np.atleast_2d(np.asarray(self.chol, dtype=np.float64))
        if chol.shape[0] != chol.shape[1] or not np.allclose(chol, np.tril(chol)):
            raise InvalidCovarianceError("chol must be a square lower-triangular matrix")
        if not np.all(np.diag(chol) > 0.0):
            raise InvalidCovarianceError("chol must have a strictly positive diagonal")
        d = chol.shape[0]
        offset = np.zeros(d) if self.offset is None else np.atleast_1d(np.asarray(self.offset, dtype=np.float64))
        transition = None if self.transition is None else np.atleast_2d(np.asarray(self.transition, dtype=np.float64))
        if offset.shape != (d,) or (transition is not None and transition.shape[0] != d):
            raise ModelParameterError("kernel mean map does not match the Cholesky factor")
        object.__setattr__(self, 'chol', chol)
        object.__setattr__(self, 'offset', offset)
        object.__setattr__(self, 'transition', transition)

    @classmethod
    def from_covariance(cls, cov, transition=None, offset=None) -> 'GaussianKernelSpec':
        try:
            chol = np.linalg.cholesky(np.atleast_2d(np.asarray(cov, dtype=np.float64)))
        except np.linalg.LinAlgError as e:
            raise InvalidCovarianceError(f"covariance is not positive definite: {e}") from e
        return cls(chol, transition, offset)

    @property
    def d(self) -> int:
        return self.chol.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        return self.chol @ self.chol.T

    def mean(self, x_prev=None) -> np.ndarray:
        if self.transition is None or x_prev is None:
            return self.offset
        return self.offset + np.asarray(x_prev) @ self.transition.T


def gaussian_rosenblatt_inv(spec: GaussianKernelSpec, x_prev, u) -> np.ndarray:
    """
    Inverse Rosenblatt transform of a Gaussian kernel.

    Coordinate i of the chain rule conditions on coordinates < i, and for a
    lower-triangular factor that conditioning is exactly row i of L, so the
    map is mean + L @ Phi^{-1}(u).
    """
    z = norm_inv_cdf(np.atleast_2d(u))
    return spec.mean(x_prev) + z @ spec.chol.T


def psi_logistic(x, bounds: PsiBounds, clamp: bool = True) -> np.ndarray:
    """Coordinate-wise rescaled logistic map into (0, 1), clamped to [eps, 1-eps]."""
    x = np.asarray(x, dtype=np.float64)
    u = special.expit((x - bounds.lower) / (bounds.upper - bounds.lower))
    if clamp:
        u = np.clip(u, PSI_EPS, 1.0 - PSI_EPS)
    return u


def psi_logistic_inv(u, bounds: PsiBounds) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return bounds.lower + (bounds.upper - bounds.lower) * special.logit(u)


def gaussian_logpdf(residual, chol) -> np.ndarray:
    """log N(residual; 0, L L^T) over the last axis, broadcasting over the rest."""
    chol = np.atleast_2d(np.asarray(chol, dtype=np.float64))
    d = chol.shape[0]
    residual = np.asarray(residual, dtype=np.float64)
    z = residual @ np.linalg.inv(chol).T
    log_det = np.sum(np.log(np.diag(chol)))
    return -0.5 * np.sum(z * z, axis=-1) - log_det - 0.5 * d * np.log(2.0 * np.pi)
