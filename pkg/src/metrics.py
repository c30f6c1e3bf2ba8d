"""Run statistics: accumulators fed by the slot loop and the final RunSummary."""
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from src.errors import SimError
from src.evt import fit_excess, gpd_cdf
from src.queueing import AoiProcess, stale_excess_tally

CCDF_POINTS = 50

# A GPD fit counts as a usable tail model from this many samples and KS distance
TAIL_FIT_MIN_SAMPLES = 1000
TAIL_FIT_MAX_KS = 0.05


def ccdf_table(samples, fitted=None, points=CCDF_POINTS):
    """Empirical (and optionally GPD) CCDF at log-spaced probability levels down to 10/n"""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    columns = ['level', 'x', 'empirical'] + (['fitted'] if fitted is not None else [])
    n = x.size
    if n == 0:
        return pd.DataFrame(columns=columns)

    p_min = min(1.0, 10.0 / n)
    levels = np.unique(np.logspace(0.0, math.log10(p_min), points))[::-1]
    abscissa = np.quantile(x, 1.0 - levels)
    empirical = 1.0 - np.searchsorted(x, abscissa, side='right') / n

    table = pd.DataFrame({'level': levels, 'x': abscissa, 'empirical': empirical})
    if fitted is not None:
        table['fitted'] = 1.0 - gpd_cdf(abscissa, fitted)
    return table.drop_duplicates(subset='x').reset_index(drop=True)


def ccdf_by_pair(process):
    """Per-pair CCDF tables of a sample store, followed by the pooled table as pair 'all'"""
    frames = []
    data = process.filled()
    for k in range(data.shape[1]):
        column = data[:, k]
        table = ccdf_table(column[~np.isnan(column)])
        if not table.empty:
            table.insert(0, 'pair', k)
            frames.append(table)

    pooled = ccdf_table(process.pooled())
    if pooled.empty:
        return pd.DataFrame(columns=['pair', *pooled.columns])
    pooled.insert(0, 'pair', 'all')
    frames.append(pooled)
    return pd.concat(frames, ignore_index=True)


class RunStats:
    """Per-pair accumulators over the post-warm-up slots"""

    def __init__(self, K, capacity):
        self.K = K
        self.queue = AoiProcess(capacity, K)
        self.aoi = AoiProcess(capacity, K)
        self.slots = 0

        self.power = np.zeros(K)
        self.rate = np.zeros(K)
        self.rate_indicator = np.zeros(K)
        self.excess_count = np.zeros(K, dtype=np.int64)
        self.excess_sum = np.zeros(K)
        self.excess_square = np.zeros(K)
        self.stale_count = np.zeros(K, dtype=np.int64)
        self.violation_count = np.zeros(K, dtype=np.int64)
        self.starved_excess = np.zeros(K, dtype=np.int64)
        self.excess_samples = []

    def record(self, Q, aoi, power, R, indicator, X, stale, d, has_rb=None):
        """One post-warm-up slot; excesses of pairs without an RB stay out of the fit sample"""
        self.slots += 1
        self.queue.record(Q)
        self.aoi.record(aoi)

        self.power += power
        self.rate += R
        self.rate_indicator += np.where(indicator, R, 0.0)
        self.excess_count += indicator
        self.excess_sum += np.where(indicator, X, 0.0)
        self.excess_square += np.where(indicator, X * X, 0.0)
        self.stale_count += stale
        self.violation_count += np.nan_to_num(aoi, nan=0.0) > d
        in_fit = indicator if has_rb is None else indicator & has_rb
        self.starved_excess += indicator & ~in_fit
        if in_fit.any():
            self.excess_samples.append(X[in_fit].astype(np.float64))

    def pooled_excess(self):
        if not self.excess_samples:
            return np.zeros(0)
        return np.concatenate(self.excess_samples)


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)


def _co_trend(q, a):
    keep = np.isfinite(q) & np.isfinite(a)
    if keep.sum() < 3 or np.ptp(q[keep]) == 0 or np.ptp(a[keep]) == 0:
        return math.nan, math.nan
    result = spearmanr(q[keep], a[keep])
    return float(result[0]), float(result[1])


@dataclass
class RunSummary:
    status: str
    policy: str
    seed: int
    slots: int
    warmup: int
    per_pair: pd.DataFrame
    aggregate: dict
    tally: object
    fit: object = None
    fit_error: str | None = None
    ccdf_queue: pd.DataFrame = None
    ccdf_aoi: pd.DataFrame = None
    ccdf_excess: pd.DataFrame = None
    excess: np.ndarray = None
    assignments: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    control_trace: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    trace_files: dict = field(default_factory=dict)
    error: str | None = None

    def summary_frame(self):
        """Per-pair rows followed by one 'all' row"""
        frame = self.per_pair.copy()
        frame['pair'] = frame['pair'].astype(object)
        total = {'pair': 'all', **{k: v for k, v in self.aggregate.items() if k in frame.columns}}
        frame = pd.concat([frame, pd.DataFrame([total])], ignore_index=True)
        frame.insert(0, 'status', self.status)
        frame.insert(1, 'policy', self.policy)
        frame.insert(2, 'seed', self.seed)
        return frame

    def fit_frame(self):
        if self.fit is None:
            n = 0 if self.excess is None else len(self.excess)
            return pd.DataFrame([{'sigma': math.nan, 'xi': math.nan, 'n': n,
                                  'ks': math.nan, 'method': 'none', 'error': self.fit_error}])
        return pd.DataFrame([{**self.fit.to_row(), 'error': None}])

    def to_row(self):
        """Flat aggregate record, one line of a sweep table"""
        row = {'status': self.status, 'policy': self.policy, 'seed': self.seed,
               'slots': self.slots, **self.aggregate}
        if self.fit is not None:
            row.update({f'fit_{k}': v for k, v in self.fit.to_row().items()})
        row.update({'tally_lhs': self.tally.lhs, 'tally_rhs': self.tally.rhs,
                    'tally_holds': self.tally.holds, 'tally_low_confidence': self.tally.low_confidence})
        if self.error:
            row['error'] = self.error
        return row


def summarize(stats, params, derived, J, policy, status='ok', logger=None, extras=None):
    """Turn the accumulators of a (possibly partial) run into a RunSummary"""
    n = max(stats.slots, 1)
    p = params

    queue999 = stats.queue.quantile(0.999)
    queue9999 = stats.queue.quantile(0.9999)
    aoi999 = stats.aoi.quantile(0.999)
    aoi9999 = stats.aoi.quantile(0.9999)

    per_pair = pd.DataFrame({
        'pair': np.arange(stats.K),
        'mean_power': stats.power / n,
        'mean_rate': stats.rate / n,
        'mean_queue': stats.queue.mean(),
        'mean_aoi': stats.aoi.mean(),
        'worst_aoi': stats.aoi.worst(),
        'p_aoi_violation': _ratio(stats.violation_count, stats.aoi.defined),
        'p_stale': stats.stale_count / n,
        'p_excess': stats.excess_count / n,
        'epsilon': p.epsilon_vector(),
        'queue_q999': queue999,
        'queue_q9999': queue9999,
        'aoi_q999': aoi999,
        'aoi_q9999': aoi9999,
        'mean_excess': _ratio(stats.excess_sum, stats.excess_count),
        'mean_excess_square': _ratio(stats.excess_square, stats.excess_count),
        'starved_excess': stats.starved_excess,
        'rate_indicator': stats.rate_indicator / n,
        'rate_epsilon': stats.rate / n * p.epsilon_vector(),
        'J_X_growth': J.J_X / n,
        'J_Y_growth': J.J_Y / n,
        'J_R_growth': J.J_R / n,
        'J_Q_growth': J.J_Q / n,
    })

    pooled_aoi = stats.aoi.pooled()
    pooled_queue = stats.queue.pooled()
    excess = stats.pooled_excess()

    fit = None
    fit_error = None
    try:
        fit = fit_excess(excess, p.fit_method, p.min_fit_samples, logger)
        if logger:
            logger.info(f"GPD fit on {fit.n} excesses: sigma={fit.params.sigma:.4f}, "
                        f"xi={fit.params.xi:.4f}, KS={fit.ks:.4f} ({fit.method})")
    except SimError as e:
        fit_error = f"{type(e).__name__}: {e}"
        if logger:
            logger.warning(f"No GPD fit: {fit_error}")

    defined = int(stats.aoi.defined.sum())
    tally = stale_excess_tally(int(stats.stale_count.sum()), int(stats.excess_count.sum()), stats.slots * stats.K)
    if logger and stats.slots and tally.low_confidence:
        logger.warning(f"Only {tally.excess_events} excess events; the stale/excess comparison is low confidence")

    rho, rho_p = _co_trend(queue999, aoi999)

    aggregate = {
        'mean_power': float(np.mean(stats.power / n)),
        'mean_rate': float(np.mean(stats.rate / n)),
        'mean_queue': float(pooled_queue.mean()) if pooled_queue.size else math.nan,
        'mean_aoi': float(pooled_aoi.mean()) if pooled_aoi.size else math.nan,
        'worst_aoi': float(pooled_aoi.max()) if pooled_aoi.size else math.nan,
        'p_aoi_violation': float(stats.violation_count.sum() / defined) if defined else math.nan,
        'p_stale': float(tally.lhs) if stats.slots else math.nan,
        'p_excess': float(tally.rhs) if stats.slots else math.nan,
        'aoi_ccdf_2d': float(np.mean(pooled_aoi > 2 * p.d)) if pooled_aoi.size else math.nan,
        'queue_q999': float(np.quantile(pooled_queue, 0.999)) if pooled_queue.size else math.nan,
        'queue_q9999': float(np.quantile(pooled_queue, 0.9999)) if pooled_queue.size else math.nan,
        'aoi_q999': float(np.quantile(pooled_aoi, 0.999)) if pooled_aoi.size else math.nan,
        'aoi_q9999': float(np.quantile(pooled_aoi, 0.9999)) if pooled_aoi.size else math.nan,
        'mean_excess': float(_ratio(stats.excess_sum.sum(), stats.excess_count.sum())),
        'mean_excess_square': float(_ratio(stats.excess_square.sum(), stats.excess_count.sum())),
        'H': derived.H,
        'B': derived.B,
        'A': derived.A,
        'psi': derived.psi,
        'J_max_growth': float(max(J.J_X.max(), J.J_Y.max(), J.J_R.max(), J.J_Q.max()) / n),
        'spearman_rho': rho,
        'spearman_p': rho_p,
        'excess_samples': int(excess.size),
        'starved_excess': int(stats.starved_excess.sum()),
        'tail_fit_ok': bool(fit is not None and fit.n >= TAIL_FIT_MIN_SAMPLES and fit.ks <= TAIL_FIT_MAX_KS),
    }

    summary = RunSummary(
        status=status,
        policy=str(policy),
        seed=p.seed,
        slots=stats.slots,
        warmup=p.warmup_slots,
        per_pair=per_pair,
        aggregate=aggregate,
        tally=tally,
        fit=fit,
        fit_error=fit_error,
        ccdf_queue=ccdf_by_pair(stats.queue),
        ccdf_aoi=ccdf_by_pair(stats.aoi),
        ccdf_excess=ccdf_table(excess, fit.params if fit else None),
        excess=excess,
    )
    for key, value in (extras or {}).items():
        setattr(summary, key, value)
    return summary
