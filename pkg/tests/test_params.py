import numpy as np
import pytest

from src.errors import ConfigError, ParameterError
from src.params import DEFAULTS, SimParams, db_to_linear, dbm_to_watts, derive_params


def test_table_defaults_derive_table_constants():
    derived = derive_params(SimParams.from_mapping({}))

    assert derived.A == pytest.approx(0.375)
    assert derived.psi_formula == pytest.approx(-5.125)
    assert derived.psi == derived.psi_formula
    assert derived.H == pytest.approx(0.8334, abs=1e-4)
    assert derived.B == pytest.approx(0.7576, abs=1e-4)


def test_psi_override_replaces_formula():
    derived = derive_params(SimParams.from_mapping({'psi': -3.25}))
    assert derived.psi == -3.25
    assert derived.psi_formula == pytest.approx(-5.125)


def test_db_inputs_are_converted_once():
    p = SimParams.from_mapping({})
    assert p.P_max == pytest.approx(0.19953, rel=1e-4)
    assert p.l0 == pytest.approx(db_to_linear(-68.5))
    assert p.noise_power == pytest.approx(dbm_to_watts(-174.0) * 180e3)


def test_unknown_key_is_a_config_error():
    with pytest.raises(ConfigError, match='bogus'):
        SimParams.from_mapping({'bogus': 1})


@pytest.mark.parametrize('override, fragment', [
    ({'tau': 0}, 'tau > 0'),
    ({'d': -1}, 'd > 0'),
    ({'g': 1}, 'g >= 2'),
    ({'xi_th': 0.6}, 'xi_th < 1/2'),
    ({'l0_prime_db': -50.0}, "l0' < l0"),
    ({'epsilon': 1.5}, 'epsilon'),
])
def test_violated_inequality_is_named(override, fragment):
    with pytest.raises(ParameterError, match=fragment):
        SimParams.from_mapping(override)


def test_epsilon_vector_must_match_K():
    with pytest.raises(ParameterError):
        SimParams.from_mapping({'K': 3, 'epsilon': [0.001, 0.002]})

    p = SimParams.from_mapping({'K': 2, 'epsilon': [0.001, 0.002]})
    assert p.epsilon_vector().tolist() == [0.001, 0.002]


def test_arrival_rate_too_low_for_age_limit():
    p = SimParams.from_mapping({'arrival_rate': 10e3})
    with pytest.raises(ParameterError, match='A/tau >= 1/d'):
        derive_params(p)


def test_bad_enum_value_is_a_config_error():
    with pytest.raises(ConfigError):
        SimParams.from_mapping({'eigensolver': 'lapack'})


def test_with_changes_revalidates():
    p = SimParams.from_mapping({})
    assert p.with_changes(K=40).K == 40
    with pytest.raises(ParameterError):
        p.with_changes(slots=0)


def test_warmup_slots():
    p = SimParams.from_mapping({'slots': 1000, 'warmup_fraction': 0.1})
    assert p.warmup_slots == 100
    assert set(DEFAULTS) >= {'K', 'N', 'slots', 'seed'}


def test_excess_bounds_keep_their_ratio_over_the_shape_range():
    for xi in np.linspace(-10.0, 0.49, 50):
        derived = derive_params(SimParams.from_mapping({'xi_th': float(xi)}))
        ratio = 2.0 * (1.0 - xi) / (1.0 - 2.0 * xi)
        assert derived.B == pytest.approx(derived.H ** 2 * ratio, rel=1e-12)
