"""Generalized Pareto tail model for conditional queue excesses.

The exceedance threshold is implicit: an excess X = Q - R + psi exists only
in slots where Q > R - psi, so no separate threshold selection is done.
"""
import math
from dataclasses import dataclass

import numpy as np

from src.errors import DegenerateSampleError, DomainError, FitFailure, InsufficientSamplesError

# |xi| below this is treated as the exponential case
XI_ZERO = 1e-8


@dataclass(frozen=True)
class GpdParams:
    sigma: float
    xi: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"GPD scale must be positive (got {self.sigma})")
        if not self.xi < 0.5:
            raise DomainError(f"GPD shape must be below 1/2 (got {self.xi})")

    @property
    def support_end(self):
        return -self.sigma / self.xi if self.xi < 0 else math.inf


@dataclass(frozen=True)
class FitReport:
    params: GpdParams
    n: int
    ks: float
    method: str

    def to_row(self):
        return {'sigma': self.params.sigma, 'xi': self.params.xi, 'n': self.n,
                'ks': self.ks, 'method': self.method}


def gpd_cdf(x, p):
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    if abs(p.xi) < XI_ZERO:
        return 1.0 - np.exp(-x / p.sigma)
    z = np.maximum(1.0 + p.xi * x / p.sigma, 0.0)
    with np.errstate(divide='ignore'):
        return 1.0 - z ** (-1.0 / p.xi)


def gpd_ppf(u, p):
    u = np.asarray(u, dtype=float)
    if abs(p.xi) < XI_ZERO:
        return -p.sigma * np.log1p(-u)
    return p.sigma / p.xi * ((1.0 - u) ** (-p.xi) - 1.0)


def gpd_sample(n, p, rng):
    """Inverse-CDF draws"""
    return gpd_ppf(rng.random(n), p)


def gpd_moments(p):
    """(mean, variance); the mean needs xi < 1 and the variance xi < 1/2"""
    if not p.xi < 0.5:
        raise DomainError(f"GPD variance needs xi < 1/2 (got {p.xi})")
    mean = p.sigma / (1.0 - p.xi)
    variance = p.sigma ** 2 / ((1.0 - p.xi) ** 2 * (1.0 - 2.0 * p.xi))
    return mean, variance


def _check_samples(samples, min_samples):
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < min_samples:
        raise InsufficientSamplesError(f"Need at least {min_samples} samples to fit, got {x.size}")
    if np.any(x <= 0) or not np.all(np.isfinite(x)):
        raise DegenerateSampleError("Excess samples must be positive and finite")
    return x


def ks_distance(samples, p):
    """Kolmogorov-Smirnov sup distance between the sample ECDF and the GPD"""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise InsufficientSamplesError("KS distance needs at least one sample")
    F = gpd_cdf(x, p)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def fit_moments(samples, min_samples=100):
    """Method-of-moments fit: invert the GPD mean and variance formulas"""
    x = _check_samples(samples, min_samples)
    m = x.mean()
    v = x.var()
    if v <= 0:
        raise DegenerateSampleError("All excess samples are equal; variance is zero")

    xi = 0.5 * (1.0 - m * m / v)
    sigma = m * (1.0 - xi)
    if sigma <= 0:
        raise FitFailure(f"Moment fit produced a nonpositive scale ({sigma})")

    params = GpdParams(sigma=sigma, xi=xi)
    return FitReport(params=params, n=int(x.size), ks=ks_distance(x, params), method='moments')


def _loglik(x, sigma, xi):
    if sigma <= 0 or xi >= 0.5:
        return -math.inf
    if abs(xi) < XI_ZERO:
        return -x.size * math.log(sigma) - x.sum() / sigma
    z = 1.0 + xi * x / sigma
    if np.any(z <= 0):
        return -math.inf
    return -x.size * math.log(sigma) - (1.0 + 1.0 / xi) * np.log(z).sum()


def _gradient(x, sigma, xi):
    u = x / sigma
    if abs(xi) < 1e-6:
        d_sigma = -x.size / sigma + (1.0 + xi) / sigma * (u / (1.0 + xi * u)).sum()
        d_xi = (0.5 * u * u - u).sum()
        return np.array([d_sigma, d_xi])
    z = 1.0 + xi * u
    d_sigma = -x.size / sigma + (1.0 + xi) / sigma * (u / z).sum()
    d_xi = np.log(z).sum() / xi ** 2 - (1.0 + 1.0 / xi) * (u / z).sum()
    return np.array([d_sigma, d_xi])


def fit_mle(samples, start=None, min_samples=100, tol=1e-8, max_iter=100):
    """Maximum likelihood by damped Newton steps from the moment estimate"""
    x = _check_samples(samples, min_samples)
    start = start or fit_moments(x, min_samples).params
    if start.xi <= -1.0:
        raise FitFailure(f"GPD likelihood is unbounded for xi <= -1 (moment estimate {start.xi:.3f})")

    theta = np.array([start.sigma, start.xi])
    current = _loglik(x, *theta)

    for iteration in range(max_iter):
        grad = _gradient(x, *theta)

        h = np.array([1e-6 * theta[0], 1e-6])
        hessian = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h[j]
            hessian[:, j] = (_gradient(x, *(theta + e)) - _gradient(x, *(theta - e))) / (2 * h[j])
        hessian = 0.5 * (hessian + hessian.T)

        try:
            step = -np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            step = grad * 1e-3
        if step @ grad <= 0:
            step = grad * 1e-3

        scale = 1.0
        for _ in range(60):
            candidate = theta + scale * step
            value = _loglik(x, *candidate)
            if value >= current:
                break
            scale *= 0.5
        else:
            raise FitFailure(f"MLE line search stalled at iteration {iteration}")

        moved = np.abs(candidate - theta)
        theta, current = candidate, value
        if np.all(moved <= tol * (1.0 + np.abs(theta))):
            params = GpdParams(sigma=float(theta[0]), xi=float(theta[1]))
            return FitReport(params=params, n=int(x.size), ks=ks_distance(x, params), method='mle')

    raise FitFailure(f"MLE did not converge in {max_iter} iterations")


def fit_excess(samples, method='moments', min_samples=100, logger=None):
    """Fit with the configured method; an MLE failure falls back to the moment fit"""
    report = fit_moments(samples, min_samples)
    if method != 'mle':
        return report

    try:
        return fit_mle(samples, start=report.params, min_samples=min_samples)
    except FitFailure as e:
        if logger:
            logger.warning(f"MLE refinement failed ({e}); keeping moment fit")
        return report
