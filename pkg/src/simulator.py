"""Slotted simulation loop and parameter sweeps."""
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pandas as pd

from src.channel import ChannelModel, rates
from src.clustering import RsuScheduler
from src.control import (InterferenceEstimator, VirtualQueues, baseline_policy, drift_weight,
                         parse_policy, update_virtual, waterfill_many)
from src.errors import ConfigError, SimError, SimulationFailed
from src.metrics import RunStats, summarize
from src.mobility import ManhattanMobility, RoadGrid
from src.params import derive_params
from src.queueing import QueueBank, excess_many
from src.reporting import TraceWriter, write_run_outputs

SWEEP_AXES = ('arrival_rate', 'pair_gap', 'K')

PROGRESS_EVERY = 20_000

# Per-slot records kept in memory when no trace directory is given
MAX_MEMORY_TRACE_ROWS = 1_000_000
TRACE_CHUNK_ROWS = 50_000


class Simulator:
    def __init__(self, params, logger=None, trace_dir=None):
        self.params = params
        self.logger = logger
        self.trace_dir = trace_dir
        self.derived = derive_params(params)

        # Independent substreams: mobility, fading, clustering restarts
        mobility_seq, fading_seq, clustering_seq = np.random.SeedSequence(params.seed).spawn(3)

        self.grid = RoadGrid(params.area_side, params.street_spacing)
        self.mobility = ManhattanMobility(self.grid, params.K, params.speed, params.tau, params.pair_gap,
                                          np.random.default_rng(mobility_seq), logger)
        self.channel = ChannelModel(params, self.grid, np.random.default_rng(fading_seq), logger)
        self.rsu = RsuScheduler(params, np.random.default_rng(clustering_seq), logger)
        self.queues = QueueBank(params.K, self.derived.A, params.tau)
        self.J = VirtualQueues.zeros(params.K)
        self.estimator = InterferenceEstimator(params.K, params.N, params.interference_smoothing,
                                               params.interference_constant)

    def run(self, policy=None):
        p = self.params
        dv = self.derived
        policy = parse_policy(policy or p.policy)

        if p.trace and self.trace_dir is None and p.slots * p.K > MAX_MEMORY_TRACE_ROWS:
            raise ConfigError(f"A trace of {p.slots * p.K} rows needs an output directory "
                              f"(in-memory limit {MAX_MEMORY_TRACE_ROWS})")

        if self.logger:
            self.logger.info("=" * 70)
            self.logger.info(f"Run: K={p.K}, N={p.N}, slots={p.slots}, seed={p.seed}, policy={policy}")
            self.logger.info(f"  A={dv.A:.4f} packets/slot, psi={dv.psi:.4f} "
                             f"(formula {dv.psi_formula:.4f}), H={dv.H:.4f}, B={dv.B:.4f}")
            self.logger.info("=" * 70)

        self.mobility.init_pairs()

        warmup = p.warmup_slots
        stats = RunStats(p.K, p.slots - warmup)
        eps = p.epsilon_vector()
        R_prev = np.full(p.K, np.inf)
        epoch = -1
        writer = TraceWriter(self.trace_dir if p.trace else None, TRACE_CHUNK_ROWS, self.logger)

        slot = 0
        try:
            for slot in range(p.slots):
                # (a) RSU epoch boundary
                rb_map = self.rsu.update(slot, self.mobility.midpoints)
                if rb_map.epoch != epoch:
                    epoch = rb_map.epoch
                    self.channel.set_rb_map(rb_map)
                eta = rb_map.eta

                # (b) mobility, (c) fading
                self.mobility.step()
                gains = self.channel.draw(self.mobility.tx_positions, self.mobility.rx_positions)

                # (d) local power decisions
                Q = self.queues.Q.copy()
                if policy.kind == 'proposed':
                    estimate = self.estimator.estimate
                    if p.indicator_rate == 'tentative':
                        full = baseline_policy('uniform', eta, p.P_max)
                        R_decision = rates(full, gains.direct, estimate, p)
                    else:
                        R_decision = R_prev
                    weight = drift_weight(self.J, Q, R_decision, dv.A, eps, dv.psi, p.tau, p.omega, p.Z)
                    power, zeta = waterfill_many(weight, gains.direct, estimate, eta, p.V, p.P_max,
                                                 p.noise_power)
                else:
                    weight = np.zeros(p.K)
                    zeta = np.zeros(p.K)
                    power = baseline_policy(policy.kind, eta, p.P_max, policy.power)

                # (e) realized rates under the actual interference
                interference = gains.interference(power)
                R = rates(power, gains.direct, interference, p)
                self.estimator.update(interference, eta)

                # (f) queues, age, excess event, virtual queues
                indicator, X = excess_many(Q, R, dv.psi)
                self.J = update_virtual(self.J, indicator, X, X * X, R, dv.A, eps, dv.H, dv.B)
                self.queues.advance(R)
                aoi = self.queues.aoi()
                stale = self.queues.stale_event(p.d)
                R_prev = R

                if not np.all(np.isfinite(R)) or not np.all(np.isfinite(self.queues.Q)):
                    raise SimError(f"Non-finite rate or queue at slot {slot}")

                total_power = power.sum(axis=1)
                if slot >= warmup:
                    stats.record(Q, aoi, total_power, R, indicator, X, stale, p.d, rb_map.counts > 0)

                if p.trace:
                    writer.extend('trace', self._slot_rows(slot, total_power, R, Q, aoi, indicator, X))
                    writer.extend('control_trace', self._control_rows(slot, weight, zeta, total_power))
                    writer.extend('positions', self.mobility.position_rows(slot))

                if self.logger and slot and slot % PROGRESS_EVERY == 0:
                    self.logger.info(f"Slot {slot}/{p.slots}: mean Q={Q.mean():.3f}, "
                                     f"mean power={total_power.mean():.4f} W, "
                                     f"excess events so far={int(stats.excess_count.sum())}")

        except Exception as e:
            if self.logger:
                self.logger.error(f"Run aborted at slot {slot}: {e}")
            try:
                trace_files = writer.close()
            except OSError:
                trace_files = {}
            partial = summarize(stats, p, dv, self.J, policy, status='failed', logger=self.logger,
                                extras=self._extras(writer, trace_files))
            partial.error = f"{type(e).__name__}: {e}"
            raise SimulationFailed(f"Run aborted at slot {slot}: {e}", partial=partial) from e

        summary = summarize(stats, p, dv, self.J, policy, logger=self.logger,
                            extras=self._extras(writer, writer.close()))

        if self.logger:
            agg = summary.aggregate
            self.logger.info(f"Run complete: mean AoI={agg['mean_aoi']:.4f} s, worst AoI={agg['worst_aoi']:.4f} s, "
                             f"Pr(AoI>d)={agg['p_aoi_violation']:.3e}, Pr(excess)={agg['p_excess']:.3e}")
            if not summary.tally.holds:
                self.logger.warning(f"Stale-packet frequency {summary.tally.lhs:.3e} exceeds "
                                    f"excess frequency {summary.tally.rhs:.3e} beyond slack")
        return summary

    def _extras(self, writer, trace_files):
        return {'assignments': self.rsu.history, 'trace': writer.rows('trace'),
                'control_trace': writer.rows('control_trace'), 'positions': writer.rows('positions'),
                'trace_files': trace_files}

    def _slot_rows(self, slot, power, R, Q, aoi, indicator, X):
        J = self.J
        return [
            {'slot': slot, 'pair': k, 'power': power[k], 'R': R[k], 'Q': Q[k],
             'aoi': None if math.isnan(aoi[k]) else aoi[k], 'indicator': bool(indicator[k]),
             'X': X[k] if indicator[k] else None,
             'J_X': J.J_X[k], 'J_Y': J.J_Y[k], 'J_R': J.J_R[k], 'J_Q': J.J_Q[k]}
            for k in range(self.params.K)
        ]

    def _control_rows(self, slot, weight, zeta, power):
        rows = self.J.as_rows(slot)
        for k, row in enumerate(rows):
            row.update({'weight': weight[k], 'zeta': zeta[k], 'power': power[k]})
        return rows


def run(params, policy=None, logger=None, trace_dir=None):
    return Simulator(params, logger, trace_dir).run(policy)


def _sweep_point(params, policy, point_dir=None):
    """Worker entry point; must stay at module level for process pools"""
    try:
        summary = run(params, policy, trace_dir=point_dir)
    except SimulationFailed as e:
        if point_dir and e.partial is not None:
            write_run_outputs(e.partial, point_dir)
        row = e.partial.to_row() if e.partial is not None else {}
        row.update({'status': 'failed', 'error': str(e)})
        return row
    except SimError as e:
        return {'status': 'failed', 'error': f"{type(e).__name__}: {e}"}

    if point_dir:
        write_run_outputs(summary, point_dir)
    return summary.to_row()


def sweep(params, axis, values, policy=None, workers=1, logger=None, out_dir=None):
    """Independent runs over one axis; a failed point is recorded and the sweep continues.

    With ``out_dir`` every point also writes its full run outputs to
    ``<out_dir>/<axis>_<value>/``.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"Sweep axis must be one of {SWEEP_AXES} (got {axis!r})")
    if not values:
        raise ConfigError("Sweep needs at least one value")

    cast = int if axis == 'K' else float
    points = []
    rows = [None] * len(values)
    for i, value in enumerate(values):
        point_dir = os.path.join(out_dir, f'{axis}_{value}') if out_dir else None
        try:
            points.append((i, params.with_changes(**{axis: cast(value)}), point_dir))
        except SimError as e:
            rows[i] = {'status': 'failed', 'error': f"{type(e).__name__}: {e}"}

    if logger:
        logger.info(f"Sweep over {axis}: {list(values)} ({len(points)} runs, {workers} workers)")

    if workers > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {i: pool.submit(_sweep_point, point, policy, point_dir) for i, point, point_dir in points}
            for i, future in futures.items():
                rows[i] = future.result()
    else:
        for i, point, point_dir in points:
            rows[i] = _sweep_point(point, policy, point_dir)

    for i, value in enumerate(values):
        rows[i] = {'axis': axis, 'value': value, **rows[i]}
        if logger and rows[i]['status'] != 'ok':
            logger.warning(f"Sweep point {axis}={value} failed: {rows[i].get('error')}")

    return pd.DataFrame(rows)
