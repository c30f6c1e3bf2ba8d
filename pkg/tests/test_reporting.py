import json

import numpy as np
import pandas as pd
import pytest

from main import main
from src.evt import GpdParams, gpd_sample
from src.metrics import ccdf_table
from src.reporting import TraceWriter, read_excess, write_csv_atomic, write_run_outputs
from src.simulator import Simulator


def test_atomic_write_leaves_only_the_target(tmp_path):
    frame = pd.DataFrame({'a': [1, 2, 3], 'b': ['x', 'y', 'z']})
    path = write_csv_atomic(frame, str(tmp_path / 'out' / 'table.csv'))

    assert [p.name for p in (tmp_path / 'out').iterdir()] == ['table.csv']
    pd.testing.assert_frame_equal(pd.read_csv(path), frame)


def test_atomic_write_replaces_existing_file(tmp_path):
    target = tmp_path / 'table.csv'
    target.write_text('old\n', encoding='utf-8')
    write_csv_atomic(pd.DataFrame({'x': [0.5]}), str(target))
    assert pd.read_csv(target)['x'].tolist() == [0.5]


def test_run_outputs(make_params, tmp_path):
    summary = Simulator(make_params(slots=100, trace=True)).run()
    paths = write_run_outputs(summary, str(tmp_path))

    assert set(paths) == {'summary', 'gpd_fit', 'ccdf_queue', 'ccdf_aoi', 'ccdf_excess', 'excess_samples',
                          'assignments', 'trace', 'control_trace', 'positions'}
    written = pd.read_csv(paths['summary'])
    assert written['pair'].astype(str).tolist() == ['0', '1', '2', '3', 'all']
    assert len(pd.read_csv(paths['trace'])) == 400


def test_ccdf_table_levels():
    samples = gpd_sample(1000, GpdParams(1.0, -0.1), np.random.default_rng(0))
    table = ccdf_table(samples, GpdParams(1.0, -0.1))

    assert table['level'].max() == pytest.approx(1.0)
    assert table['level'].min() == pytest.approx(0.01)
    assert np.all(np.diff(table['x']) > 0)
    assert np.all(np.diff(table['empirical']) <= 0)
    assert np.all(np.diff(table['fitted']) <= 0)
    assert list(table.columns) == ['level', 'x', 'empirical', 'fitted']


def test_ccdf_table_of_nothing():
    assert ccdf_table([]).empty


def test_read_excess_falls_back_to_first_column(tmp_path):
    path = tmp_path / 'dump.csv'
    pd.DataFrame({'x': [1.0, None, 2.0]}).to_csv(path, index=False)
    assert read_excess(str(path)).tolist() == [1.0, 2.0]


def _config(tmp_path, text="K: 3\nN: 4\ng: 2\nT0: 20\n"):
    path = tmp_path / 'config.yaml'
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_cli_run(tmp_path, capsys):
    out = tmp_path / 'results'
    code = main(['run', '--config', _config(tmp_path), '--slots', '60', '--out', str(out)])

    assert code == 0
    result = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert result['status'] == 'ok'
    assert (out / 'summary.csv').exists()
    assert (out / 'gpd_fit.csv').exists()


def test_cli_sweep(tmp_path, capsys):
    out = tmp_path / 'results'
    code = main(['sweep', '--config', _config(tmp_path), '--slots', '40', '--axis', 'K',
                 '--values', '2,3', '--out', str(out)])

    assert code == 0
    table = pd.read_csv(out / 'sweep.csv')
    assert table['value'].tolist() == [2, 3]
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])['failed'] == 0


def test_cli_reports_config_errors(tmp_path, capsys):
    code = main(['run', '--config', _config(tmp_path, "speeed: 3\n"), '--out', str(tmp_path)])

    assert code == 2
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error['status'] == 'error'
    assert error['type'] == 'ConfigError'
    assert 'speeed' in error['message']


def test_cli_fit(tmp_path, capsys):
    dump = tmp_path / 'excess.csv'
    samples = gpd_sample(2000, GpdParams(1.0, -0.2), np.random.default_rng(3))
    pd.DataFrame({'excess': samples}).to_csv(dump, index=False)

    code = main(['fit', str(dump), '--out', str(tmp_path / 'fit')])

    assert code == 0
    fit = pd.read_csv(tmp_path / 'fit' / 'gpd_fit.csv')
    assert fit.loc[0, 'method'] == 'moments'
    assert fit.loc[0, 'xi'] == pytest.approx(-0.2, abs=0.1)
    assert (tmp_path / 'fit' / 'ccdf_excess.csv').exists()


def test_trace_writer_streams_and_verifies(tmp_path):
    writer = TraceWriter(str(tmp_path / 'run'), chunk_rows=3)
    for slot in range(10):
        writer.extend('trace', [{'slot': slot, 'pair': 0, 'aoi': None if slot < 2 else 0.003 * slot}])

    assert writer.written['trace'] == 9
    paths = writer.close()

    assert list(paths) == ['trace']
    assert [p.name for p in (tmp_path / 'run').iterdir()] == ['trace.csv']
    frame = pd.read_csv(paths['trace'])
    assert frame['slot'].tolist() == list(range(10))
    assert frame['aoi'].isna().sum() == 2


def test_trace_writer_in_memory(tmp_path):
    writer = TraceWriter()
    writer.extend('positions', [{'slot': 0, 'pair': 1}])
    assert writer.close() == {}
    assert writer.rows('positions') == [{'slot': 0, 'pair': 1}]
