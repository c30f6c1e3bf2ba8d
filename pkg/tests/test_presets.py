import pandas as pd
import pytest

from src.errors import ConfigError
from src.params import derive_params
from src.presets import PRESETS, get_preset, run_preset
from src.simulator import SWEEP_AXES


def test_presets_sweep_known_axes():
    for preset in PRESETS.values():
        assert preset.axis in SWEEP_AXES
        assert preset.values


def test_unknown_preset():
    with pytest.raises(ConfigError, match='fig6'):
        get_preset('rush-hour')


def test_run_preset_stacks_variants_and_policies(make_params, tmp_path):
    calls = []

    def fake_sweep(params, axis, values, policy, workers, logger, out_dir):
        calls.append((params.K, policy, out_dir))
        return pd.DataFrame({'axis': axis, 'value': values, 'status': 'ok'})

    table = run_preset(get_preset('fig6'), make_params(), fake_sweep, out_dir=str(tmp_path))

    assert len(table) == 2 * 7
    assert table['variant'].unique().tolist() == ['K80', 'K20']
    assert (table['preset'] == 'fig6').all()
    assert [(K, policy) for K, policy, _ in calls] == [(80, 'proposed'), (20, 'proposed')]
    assert calls[0][2] == str(tmp_path / 'K80' / 'proposed')


def test_policy_comparison_preset(make_params):
    policies = []

    def fake_sweep(params, axis, values, policy, workers, logger, out_dir):
        policies.append(policy)
        return pd.DataFrame({'axis': axis, 'value': values, 'status': 'ok'})

    table = run_preset(get_preset('fig3'), make_params(), fake_sweep)
    assert policies == ['proposed', 'uniform']
    assert table['variant'].unique().tolist() == ['base']


def test_presets_are_numbered_and_choose_psi():
    assert sorted(PRESETS) == ['fig2', 'fig3', 'fig4', 'fig5', 'fig6']
    for name, preset in PRESETS.items():
        assert preset.name == name
        assert 'psi' in preset.description
    assert [PRESETS[name].psi for name in sorted(PRESETS)] == [-3.25, -3.25, -3.25, -3.25, None]


def test_preset_psi_reaches_the_run_parameters(make_params):
    pinned = derive_params(get_preset('fig2').apply(make_params()))
    assert pinned.psi == -3.25
    assert pinned.psi_formula == pytest.approx(-5.125)

    derived = derive_params(get_preset('fig6').apply(make_params(psi=-1.0, arrival_rate=0.1e6)))
    assert derived.psi == derived.psi_formula == pytest.approx(2.0 - 19 * 0.075)


def test_preset_sweeps_run_with_the_preset_psi(make_params):
    seen = []

    def fake_sweep(params, axis, values, policy, workers, logger, out_dir):
        seen.append(params.psi_override)
        return pd.DataFrame({'axis': axis, 'value': values, 'status': 'ok'})

    run_preset(get_preset('fig5'), make_params(), fake_sweep)
    run_preset(get_preset('fig6'), make_params(psi=-3.25), fake_sweep)
    assert seen == [-3.25, None, None]
