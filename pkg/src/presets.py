"""Named experiment setups: config overrides, an optional sweep axis and the policies to compare."""
import os
from dataclasses import dataclass

import pandas as pd

from src.errors import ConfigError


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    overrides: dict
    axis: str | None = None
    values: tuple = ()
    policies: tuple = ('proposed',)
    variants: tuple = ({},)
    # None: derive psi from the age limit at every sweep point
    psi: float | None = -3.25

    def apply(self, params):
        """Base parameters with this preset's psi choice"""
        return params.with_changes(psi_override=self.psi)


PRESETS = {
    'fig2': Preset(
        name='fig2',
        description='GPD fit of the conditional queue excess for several VUE densities (psi=-3.25)',
        overrides={},
        axis='K',
        values=(20, 40, 80),
    ),
    'fig3': Preset(
        name='fig3',
        description='Queue-length tail against VUE density, proposed vs uniform full power (psi=-3.25)',
        overrides={},
        axis='K',
        values=(20, 40, 80),
        policies=('proposed', 'uniform'),
    ),
    'fig4': Preset(
        name='fig4',
        description='AoI tail against VUE density, proposed vs uniform full power (psi=-3.25)',
        overrides={},
        axis='K',
        values=(20, 40, 80),
        policies=('proposed', 'uniform'),
    ),
    'fig5': Preset(
        name='fig5',
        description='AoI tail against transmitter-receiver distance at K=80 (psi=-3.25)',
        overrides={'K': 80},
        axis='pair_gap',
        values=(10.0, 15.0, 20.0, 25.0),
    ),
    'fig6': Preset(
        name='fig6',
        description='Mean and worst AoI against arrival rate at K=80 and K=20 (psi derived per arrival rate)',
        overrides={},
        axis='arrival_rate',
        values=(0.1e6, 0.25e6, 0.5e6, 1.0e6, 1.5e6, 2.0e6, 3.0e6),
        variants=({'K': 80}, {'K': 20}),
        psi=None,
    ),
}


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}") from None


def run_preset(preset, params, sweep_fn, workers=1, logger=None, out_dir=None):
    """Every variant x policy sweep of a preset, stacked into one table"""
    frames = []
    for variant in preset.variants:
        base = preset.apply(params.with_changes(**variant) if variant else params)
        label = '_'.join(f'{k}{v}' for k, v in variant.items()) or 'base'
        for policy in preset.policies:
            if logger:
                logger.info(f"Preset {preset.name}: {label} / {policy}")
            point_dir = os.path.join(out_dir, label, policy) if out_dir else None
            frame = sweep_fn(base, preset.axis, list(preset.values), policy, workers, logger, point_dir)
            frame.insert(0, 'preset', preset.name)
            frame.insert(1, 'variant', label)
            frames.append(frame)
    return pd.concat(frames, ignore_index=True)
