"""Physical queues, the packet ledger and the age-of-information process.

Arrivals are a deterministic mass flow of A packets per slot. Integer packet
i arrives at (i / A) * tau and departs at the end of the first slot in which
the cumulative served mass reaches i + 1. All statistics are taken at slot
boundaries T = tau * (t + 1).
"""
import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

_TOL = 1e-9

# Returned by aoi_sample before the first departure
UNDEFINED = None


@dataclass
class PacketLedger:
    A: float
    tau: float
    # departure slot of packet i; the packet leaves at tau * (slot + 1)
    departures: list = field(default_factory=list)

    def arrival_time(self, i):
        return i / self.A * self.tau

    def departure_time(self, i):
        if i < len(self.departures):
            return self.tau * (self.departures[i] + 1)
        return None

    @property
    def cursor(self):
        """Index of the next packet to depart"""
        return len(self.departures)

    def stamp(self, served_mass, slot):
        """Record departures for every packet index the served mass now covers"""
        newly = []
        while self.cursor + 1 <= served_mass + _TOL:
            newly.append(self.cursor)
            self.departures.append(slot)
        return newly


@dataclass
class TxState:
    Q: float = 0.0
    arrived: float = 0.0
    served: float = 0.0
    slot: int = 0
    ledger: PacketLedger | None = None


def advance_queue(q, R, A):
    """One slot of Q(t+1) = max(Q(t) - R(t), 0) + A with ledger stamping"""
    if R < 0:
        raise ValueError(f"rate must be nonnegative (got {R})")

    served_now = min(q.Q, R)
    served = q.served + served_now

    if q.ledger is not None:
        q.ledger.stamp(served, q.slot)

    return TxState(
        Q=max(q.Q - R, 0.0) + A,
        arrived=(q.slot + 1) * A,
        served=served,
        slot=q.slot + 1,
        ledger=q.ledger,
    )


def served_window(slot, A, Q, R):
    """Bounds (low, high] of the packet indices whose service completes during a slot.

    Packet i completes once the cumulative served mass reaches i + 1, so a
    packet started in an earlier slot can finish here: low is exclusive.
    For integer A, Q and R this is the closed range [tA - Q, high].
    """
    low = slot * A - Q - 1.0
    high = slot * A - 1.0 - max(Q - R, 0.0)
    return low, high


def excess_event(Q, R, psi):
    """(indicator, X) for the event Q > R - psi; X is None when the event does not occur"""
    if Q > R - psi:
        return True, Q - R + psi
    return False, None


def excess_many(Q, R, psi):
    """Vectorized excess event; X is zero where the indicator is false"""
    indicator = Q > R - psi
    X = np.where(indicator, Q - R + psi, 0.0)
    return indicator, X


def aoi_sample(ledger, T):
    """Age at instant T, or UNDEFINED before the first departure"""
    last_slot = math.floor(T / ledger.tau - 1.0 + _TOL)
    count = bisect_right(ledger.departures, last_slot)
    if count == 0:
        return UNDEFINED
    newest = count - 1
    return T - ledger.arrival_time(newest)


def ihat(T, d, A, tau):
    """Index of the first packet arriving at or just after T - d"""
    return int(math.ceil(A / tau * (T - d) - _TOL))


class QueueBank:
    """All K physical queues advanced together; departures are tracked by count"""

    def __init__(self, K, A, tau):
        self.K = K
        self.A = A
        self.tau = tau
        self.Q = np.zeros(K)
        self.served = np.zeros(K)
        self.departed = np.zeros(K, dtype=np.int64)
        self.slot = 0

    @property
    def arrived(self):
        return self.slot * self.A

    @property
    def T(self):
        """Current slot boundary in seconds"""
        return self.tau * self.slot

    def advance(self, R):
        served_now = np.minimum(self.Q, R)
        self.served += served_now
        self.Q = np.maximum(self.Q - R, 0.0) + self.A
        self.departed = np.floor(self.served + _TOL).astype(np.int64)
        self.slot += 1
        return served_now

    def aoi(self):
        """Age at the current boundary; NaN for pairs with no departure yet"""
        newest = self.departed - 1
        delta = self.T - newest * self.tau / self.A
        return np.where(self.departed > 0, delta, np.nan)

    def stale_event(self, d):
        """Packet i-hat has not departed by the current boundary"""
        i_hat = ihat(self.T, d, self.A, self.tau)
        if i_hat < 0:
            return np.zeros(self.K, dtype=bool)
        return self.departed <= i_hat

    def ledger_gap(self):
        """|Q - (arrived - served)|, the fluid/ledger rounding residual"""
        return np.abs(self.Q - (self.arrived - self.served))


class AoiProcess:
    """Per-slot samples of a (K,) process after warm-up, with NaN for undefined"""

    def __init__(self, capacity, K):
        self.samples = np.full((capacity, K), np.nan)
        self.count = 0
        self.running_max = np.full(K, -np.inf)
        self.total = np.zeros(K)
        self.defined = np.zeros(K, dtype=np.int64)

    def record(self, values):
        if self.count < len(self.samples):
            self.samples[self.count] = values
        self.count += 1
        self.running_max = np.fmax(self.running_max, values)
        self.total += np.nan_to_num(values, nan=0.0)
        self.defined += ~np.isnan(values)

    def filled(self):
        return self.samples[:min(self.count, len(self.samples))]

    def mean(self):
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(self.defined > 0, self.total / np.maximum(self.defined, 1), np.nan)

    def worst(self):
        return np.where(self.defined > 0, self.running_max, np.nan)

    def pooled(self):
        values = self.filled().ravel()
        return values[~np.isnan(values)]

    def quantile(self, q):
        """Per-pair quantile over defined samples"""
        data = self.filled()
        out = np.full(data.shape[1], np.nan)
        for k in range(data.shape[1]):
            column = data[:, k]
            column = column[~np.isnan(column)]
            if column.size:
                out[k] = np.quantile(column, q)
        return out


@dataclass(frozen=True)
class StaleExcessTally:
    lhs: float
    rhs: float
    n: int
    stale_events: int
    excess_events: int
    slack: float
    low_confidence: bool

    @property
    def holds(self):
        return self.lhs <= self.rhs + self.slack


def stale_excess_tally(stale_events, excess_events, n, min_events=1000):
    """Empirical Pr{packet i-hat late} against Pr{Q > R - psi} over n pair-slots"""
    if n <= 0:
        return StaleExcessTally(lhs=float('nan'), rhs=float('nan'), n=0, stale_events=0,
                                excess_events=0, slack=float('nan'), low_confidence=True)

    lhs = stale_events / n
    rhs = excess_events / n
    slack = 3.0 * math.sqrt((lhs * (1 - lhs) + rhs * (1 - rhs)) / n)
    return StaleExcessTally(
        lhs=lhs,
        rhs=rhs,
        n=int(n),
        stale_events=int(stale_events),
        excess_events=int(excess_events),
        slack=slack,
        low_confidence=excess_events < min_events,
    )
