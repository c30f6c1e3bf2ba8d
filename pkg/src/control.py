"""Per-slot power control at each transmitter.

Virtual queues turn the time-averaged tail constraints into queue stability
requirements; every slot a pair computes its drift weight and water-fills
its power budget over the RBs the RSU gave it.
"""
import math
from dataclasses import dataclass

import numpy as np

from src.errors import ConfigError, NumericalError

LN2 = math.log(2.0)
BISECTION_MAX_ITER = 200


@dataclass
class VirtualQueues:
    J_X: np.ndarray
    J_Y: np.ndarray
    J_R: np.ndarray
    J_Q: np.ndarray

    @classmethod
    def zeros(cls, K):
        return cls(np.zeros(K), np.zeros(K), np.zeros(K), np.zeros(K))

    def as_rows(self, slot):
        return [
            {'slot': slot, 'pair': k, 'J_X': self.J_X[k], 'J_Y': self.J_Y[k],
             'J_R': self.J_R[k], 'J_Q': self.J_Q[k]}
            for k in range(len(np.atleast_1d(self.J_X)))
        ]


def update_virtual(J, indicator, X, Y, R, A, eps, H, B):
    """One slot of the four virtual-queue recursions; X and Y only count where the indicator is set"""
    indicator = np.asarray(indicator, dtype=bool)
    X = 0.0 if X is None else np.asarray(X, dtype=float)
    Y = 0.0 if Y is None else np.asarray(Y, dtype=float)
    R = np.asarray(R, dtype=float)

    return VirtualQueues(
        J_X=np.maximum(J.J_X + np.where(indicator, X - H, 0.0), 0.0),
        J_Y=np.maximum(J.J_Y + np.where(indicator, Y - B, 0.0), 0.0),
        J_R=np.maximum(J.J_R - R + A, 0.0),
        J_Q=np.maximum(J.J_Q + np.where(indicator, R, 0.0) - R * eps, 0.0),
    )


def drift_weight(J, Q, R_prev, A, eps, psi, tau, omega, Z):
    """Weight of the rate term in the per-slot objective (vectorized over pairs)"""
    Q = np.asarray(Q, dtype=float)
    indicator = Q > np.asarray(R_prev, dtype=float) - psi
    shifted = Q + psi
    tail = -J.J_Q + J.J_X + (2.0 * J.J_Y + 1.0) * shifted + 2.0 * shifted ** 3
    bracket = J.J_R + A + Q + J.J_Q * eps + np.where(indicator, tail, 0.0)
    return tau * omega / Z * bracket


@dataclass
class PowerDecision:
    power: np.ndarray
    zeta: float

    @property
    def total(self):
        return float(np.sum(self.power))


def _levels(weight, c, V, zeta):
    level = weight / ((V + zeta) * LN2)
    return np.maximum(level - c, 0.0)


def waterfill(weight, gains, interference, V, P_max, noise):
    """Reference KKT water-filling for one pair by bisection on the budget multiplier"""
    gains = np.asarray(gains, dtype=float)
    c = (noise + np.asarray(interference, dtype=float)) / gains

    if weight <= 0 or gains.size == 0:
        return PowerDecision(np.zeros(gains.size), 0.0)

    if V > 0:
        unconstrained = _levels(weight, c, V, 0.0)
        if unconstrained.sum() <= P_max:
            return PowerDecision(unconstrained, 0.0)

    lo = 0.0
    hi = weight * gains.max() / (noise * LN2)
    tol = 1e-9 * P_max

    for iteration in range(BISECTION_MAX_ITER):
        zeta = 0.5 * (lo + hi)
        power = _levels(weight, c, V, zeta)
        total = power.sum()
        if abs(total - P_max) <= tol:
            break
        if total > P_max:
            lo = zeta
        else:
            hi = zeta
    else:
        raise NumericalError(
            f"Water-filling bisection did not converge in {BISECTION_MAX_ITER} iterations",
            iterations=BISECTION_MAX_ITER, bracket=(lo, hi), total=float(total), P_max=P_max,
        )

    if total > P_max:
        power = power * (P_max / total)
    return PowerDecision(power, zeta)


def waterfill_many(weight, direct, interference, eta, V, P_max, noise):
    """Exact water level for every pair at once; returns (power (K, N), zeta (K,))"""
    weight = np.asarray(weight, dtype=float)
    K, N = direct.shape

    usable = eta & (direct > 0)
    with np.errstate(divide='ignore'):
        c = np.where(usable, (noise + interference) / np.where(usable, direct, 1.0), np.inf)

    cs = np.sort(c, axis=1)
    finite = np.isfinite(cs)
    cum = np.cumsum(np.where(finite, cs, 0.0), axis=1)
    m = np.arange(1, N + 1)
    mu_m = (P_max + cum) / m
    valid = finite & (mu_m > cs)

    has = valid.any(axis=1) & (weight > 0)
    m_star = N - 1 - np.argmax(valid[:, ::-1], axis=1)
    mu = np.where(has, mu_m[np.arange(K), m_star], 0.0)

    zeta = np.zeros(K)
    with np.errstate(divide='ignore', invalid='ignore'):
        zeta[has] = np.maximum(weight[has] / (mu[has] * LN2) - V, 0.0)

        if V > 0:
            mu_free = np.where(weight > 0, weight / (V * LN2), 0.0)
            free_total = np.where(usable, np.maximum(mu_free[:, None] - c, 0.0), 0.0).sum(axis=1)
            slack = has & (free_total <= P_max)
            mu = np.where(slack, mu_free, mu)
            zeta[slack] = 0.0

    power = np.where(usable & has[:, None], np.maximum(mu[:, None] - c, 0.0), 0.0)
    return power, zeta


def kkt_residual(weight, gains, interference, power, V, zeta, noise):
    """Largest relative violation of the stationarity conditions over one pair's RBs"""
    gains = np.asarray(gains, dtype=float)
    interference = np.asarray(interference, dtype=float)
    power = np.asarray(power, dtype=float)
    target = V + zeta
    marginal = weight * gains / ((noise + interference + power * gains) * LN2)

    active = power > 0
    residual = 0.0
    if active.any():
        residual = max(residual, float(np.max(np.abs(marginal[active] - target))) / target)
    if (~active).any():
        excess = marginal[~active] - target
        residual = max(residual, float(np.max(excess)) / target)
    return residual


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    power: float | None = None

    def __str__(self):
        return f"fixed:{self.power}" if self.kind == 'fixed' else self.kind


def parse_policy(text):
    """'proposed', 'uniform' or 'fixed:<watts>'"""
    text = str(text).strip()
    if text in ('proposed', 'uniform'):
        return PolicySpec(text)
    if text.startswith('fixed:'):
        try:
            watts = float(text.split(':', 1)[1])
        except ValueError as e:
            raise ConfigError(f"Bad fixed-power policy {text!r}: {e}") from e
        if watts < 0:
            raise ConfigError(f"Fixed power must be nonnegative (got {watts})")
        return PolicySpec('fixed', watts)
    raise ConfigError(f"Unknown policy {text!r}; expected proposed, uniform or fixed:<watts>")


def baseline_policy(kind, eta, P_max, power=None):
    """Equal split of a fixed budget over each pair's RBs"""
    eta = np.asarray(eta, dtype=bool)
    if kind == 'uniform':
        budget = P_max
    elif kind == 'fixed':
        if power is None:
            raise ConfigError("fixed policy needs a power level")
        budget = min(power, P_max)
    else:
        raise ConfigError(f"Unknown baseline policy {kind!r}")

    counts = eta.sum(axis=1, keepdims=True)
    share = np.where(counts > 0, budget / np.maximum(counts, 1), 0.0)
    return np.where(eta, share, 0.0)


class InterferenceEstimator:
    """Per-(pair, RB) moving average of measured interference, or a fixed constant"""

    def __init__(self, K, N, smoothing=0.01, constant=None):
        self.smoothing = smoothing
        self.constant = constant
        self._estimate = np.zeros((K, N))

    @property
    def estimate(self):
        if self.constant is not None:
            return np.full_like(self._estimate, self.constant)
        return self._estimate

    def update(self, measured, eta):
        a = self.smoothing
        self._estimate = np.where(eta, (1.0 - a) * self._estimate + a * measured, self._estimate)
