import numpy as np
import pandas as pd
import pytest

import src.simulator as simulator
from src.errors import ConfigError, SimulationFailed
from src.params import dbm_to_watts
from src.simulator import Simulator, sweep


def test_short_run_summary(make_params):
    summary = Simulator(make_params()).run()

    assert summary.status == 'ok'
    assert summary.policy == 'proposed'
    assert summary.slots == 270
    assert summary.warmup == 30

    per_pair = summary.per_pair
    assert len(per_pair) == 4
    for column in ('p_aoi_violation', 'p_stale', 'p_excess'):
        values = per_pair[column].dropna()
        assert ((values >= 0) & (values <= 1)).all()

    defined = per_pair['mean_aoi'].notna()
    assert (per_pair.loc[defined, 'worst_aoi'] >= per_pair.loc[defined, 'mean_aoi']).all()
    assert (per_pair['mean_power'] <= dbm_to_watts(23.0) * (1 + 1e-9)).all()

    frame = summary.summary_frame()
    assert frame['pair'].tolist() == [0, 1, 2, 3, 'all']
    assert (frame['status'] == 'ok').all()


def test_same_seed_same_summary(make_params):
    first = Simulator(make_params(slots=200)).run()
    second = Simulator(make_params(slots=200)).run()
    pd.testing.assert_frame_equal(first.summary_frame(), second.summary_frame())
    assert first.assignments == second.assignments


def test_single_strong_pair_never_violates(make_params):
    summary = Simulator(make_params(K=1, P_max_dbm=40.0)).run()

    assert summary.aggregate['p_aoi_violation'] == 0.0
    assert summary.aggregate['p_excess'] == 0.0
    assert summary.fit is None
    assert 'InsufficientSamplesError' in summary.fit_error
    assert summary.tally.lhs == 0.0
    assert summary.tally.holds


def test_starved_queues_grow_and_go_stale(make_params):
    summary = Simulator(make_params(P_max_dbm=-100.0)).run('uniform')

    agg = summary.aggregate
    assert agg['p_stale'] == 1.0
    assert agg['p_excess'] == 1.0
    assert np.isnan(agg['mean_aoi'])
    assert np.isnan(agg['p_aoi_violation'])
    # Q before slot s is 0.375 s; slots 30..299 are recorded
    assert summary.per_pair['mean_queue'].tolist() == pytest.approx([0.375 * 164.5] * 4, rel=1e-3)
    assert summary.tally.holds


def test_uniform_policy_spends_the_whole_budget(make_params):
    summary = Simulator(make_params()).run('uniform')
    assert summary.policy == 'uniform'
    assert summary.aggregate['mean_power'] == pytest.approx(dbm_to_watts(23.0), rel=1e-9)
    assert summary.per_pair['J_X_growth'].min() >= 0


def test_trace_rows(make_params):
    summary = Simulator(make_params(slots=80, trace=True)).run()
    assert len(summary.trace) == 80 * 4
    assert len(summary.control_trace) == 80 * 4
    assert len(summary.positions) == 80 * 4
    assert {'slot', 'pair', 'power', 'R', 'Q', 'aoi', 'J_Q'} <= set(summary.trace[0])
    assert {'weight', 'zeta', 'J_R'} <= set(summary.control_trace[0])


def test_epochs_follow_the_recluster_period(make_params):
    summary = Simulator(make_params(slots=120, T0=50)).run()
    epochs = sorted({row['epoch'] for row in summary.assignments})
    assert epochs == [0, 1, 2]
    assert len(summary.assignments) == 3 * 4


def test_failure_carries_a_partial_summary(make_params, monkeypatch):
    real_rates = simulator.rates
    calls = []

    def flaky_rates(power, direct, interference, params):
        calls.append(1)
        R = real_rates(power, direct, interference, params)
        return R if len(calls) <= 100 else np.full_like(R, np.nan)

    monkeypatch.setattr(simulator, 'rates', flaky_rates)

    with pytest.raises(SimulationFailed) as excinfo:
        Simulator(make_params()).run('uniform')

    partial = excinfo.value.partial
    assert partial.status == 'failed'
    assert partial.slots == 70
    assert partial.error.startswith('SimError')
    assert (partial.summary_frame()['status'] == 'failed').all()


def test_sweep_records_failed_points(make_params, tmp_path):
    table = sweep(make_params(slots=120), 'pair_gap', [10.0, 15.0, 70.0], out_dir=str(tmp_path))

    assert table['value'].tolist() == [10.0, 15.0, 70.0]
    assert table['status'].tolist() == ['ok', 'ok', 'failed']
    assert 'ParameterError' in table.loc[2, 'error']
    assert (table['axis'] == 'pair_gap').all()
    assert (tmp_path / 'pair_gap_10.0' / 'summary.csv').exists()
    assert not (tmp_path / 'pair_gap_70.0').exists()


def test_sweep_over_density(make_params):
    table = sweep(make_params(slots=60), 'K', [2, 3], policy='uniform')
    assert table['status'].tolist() == ['ok', 'ok']
    assert table['policy'].tolist() == ['uniform', 'uniform']


@pytest.mark.parametrize('axis, values', [('speed', [10.0]), ('K', [])])
def test_sweep_rejects_bad_requests(make_params, axis, values):
    with pytest.raises(ConfigError):
        sweep(make_params(), axis, values)


def test_ccdf_tables_per_pair_and_pooled(make_params):
    summary = Simulator(make_params()).run()

    queue = summary.ccdf_queue
    assert queue['pair'].astype(str).unique().tolist() == ['0', '1', '2', '3', 'all']
    for _, table in queue.groupby(queue['pair'].astype(str)):
        assert table['level'].iloc[0] == pytest.approx(1.0)
        assert np.all(np.diff(table['x']) > 0)

    assert 'all' in summary.ccdf_aoi['pair'].astype(str).tolist()


def test_starved_run_has_an_empty_aoi_ccdf(make_params):
    summary = Simulator(make_params(P_max_dbm=-100.0)).run('uniform')
    assert summary.ccdf_aoi.empty
    assert list(summary.ccdf_aoi.columns) == ['pair', 'level', 'x', 'empirical']


def test_trace_streams_to_disk_in_chunks(make_params, tmp_path, monkeypatch):
    monkeypatch.setattr(simulator, 'TRACE_CHUNK_ROWS', 50)
    out = tmp_path / 'run'
    summary = Simulator(make_params(slots=80, trace=True), trace_dir=str(out)).run()

    assert summary.trace == [] and summary.positions == []
    assert set(summary.trace_files) == {'trace', 'control_trace', 'positions'}
    assert sorted(p.name for p in out.iterdir()) == ['control_trace.csv', 'positions.csv', 'trace.csv']

    trace = pd.read_csv(out / 'trace.csv')
    assert len(trace) == 80 * 4
    assert trace['slot'].tolist() == sorted(trace['slot'].tolist())
    assert len(pd.read_csv(out / 'control_trace.csv')) == 80 * 4


def test_large_in_memory_trace_is_refused(make_params, monkeypatch):
    monkeypatch.setattr(simulator, 'MAX_MEMORY_TRACE_ROWS', 100)
    with pytest.raises(ConfigError, match='output directory'):
        Simulator(make_params(slots=80, trace=True)).run()


def test_weak_links_keep_stale_packets_inside_excess_events(make_params):
    summary = Simulator(make_params(P_max_dbm=-40.0)).run('uniform')
    tally = summary.tally

    assert tally.excess_events > 0
    assert tally.stale_events <= tally.excess_events
    assert tally.lhs <= tally.rhs
    assert tally.holds


@pytest.mark.parametrize('policy, p_max_dbm', [('proposed', 23.0), ('proposed', -40.0), ('uniform', -40.0)])
def test_virtual_queue_growth_bounds_the_time_averages(make_params, policy, p_max_dbm):
    summary = Simulator(make_params(P_max_dbm=p_max_dbm)).run(policy)
    per_pair = summary.per_pair
    agg = summary.aggregate

    def at_most(lhs, rhs):
        return bool(np.all(lhs <= rhs + 1e-9 * (1.0 + np.abs(rhs))))

    assert at_most(agg['A'] - per_pair['J_R_growth'], per_pair['mean_rate'])
    assert at_most(per_pair['rate_indicator'], per_pair['rate_epsilon'] + per_pair['J_Q_growth'])

    hit = per_pair[per_pair['p_excess'] > 0]
    assert at_most(hit['mean_excess'], agg['H'] + hit['J_X_growth'] / hit['p_excess'])
    assert at_most(hit['mean_excess_square'], agg['B'] + hit['J_Y_growth'] / hit['p_excess'])


def test_queues_match_the_packet_count_and_age_stays_above_one_slot(make_params):
    params = make_params(slots=150, trace=True)
    sim = Simulator(params)
    summary = sim.run()

    assert sim.queues.ledger_gap().max() < 1e-6
    ages = [row['aoi'] for row in summary.trace if row['aoi'] is not None]
    assert ages
    assert min(ages) >= params.tau - 1e-12
