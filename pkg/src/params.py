"""Simulation parameters and the constants derived from them.

Units are fixed by convention: seconds, metres, hertz, bits and watts.
Config keys ending in ``_db``/``_dbm``/``_dbm_hz`` are converted to linear
scale exactly once, in :meth:`SimParams.from_mapping`.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from src.errors import ConfigError, ParameterError

# Flat config keys and their defaults
DEFAULTS = {
    # Radio
    'K': 20,
    'N': 20,
    'omega': 180e3,
    'tau': 3e-3,
    'P_max_dbm': 23.0,
    'Z': 4000,
    'N0_dbm_hz': -174.0,
    # Traffic and reliability
    'arrival_rate': 0.5e6,
    'd': 0.06,
    'epsilon': 0.001,
    'sigma_th': 5.0,
    'xi_th': -5.0,
    'psi': None,
    'V': 0.0,
    # RSU clustering
    'g': 10,
    'gamma': 30.0,
    'phi': 150.0,
    'T0': 100,
    # Path loss
    'alpha': 1.61,
    'l0_db': -68.5,
    'l0_prime_db': -54.5,
    'D': 15.0,
    # Mobility
    'speed': 60.0 / 3.6,
    'pair_gap': 15.0,
    'area_side': 250.0,
    'street_spacing': 62.5,
    # Run
    'slots': 200_000,
    'seed': 1,
    'warmup_fraction': 0.1,
    'policy': 'proposed',
    'interference_smoothing': 0.01,
    'interference_constant': None,
    'indicator_rate': 'previous',
    'eigensolver': 'jacobi',
    'fit_method': 'moments',
    'min_fit_samples': 100,
    'trace': False,
}

INDICATOR_RATES = ('previous', 'tentative')
EIGENSOLVERS = ('jacobi', 'numpy')
FIT_METHODS = ('moments', 'mle')


def db_to_linear(value_db):
    return 10.0 ** (value_db / 10.0)


def dbm_to_watts(value_dbm):
    return 10.0 ** ((value_dbm - 30.0) / 10.0)


def linear_to_db(value):
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class SimParams:
    K: int
    N: int
    omega: float
    tau: float
    P_max: float
    Z: float
    N0: float
    arrival_rate: float
    d: float
    epsilon: tuple
    sigma_th: float
    xi_th: float
    psi_override: float | None
    V: float
    g: int
    gamma: float
    phi: float
    T0: int
    alpha: float
    l0: float
    l0_prime: float
    D: float
    speed: float
    pair_gap: float
    area_side: float
    street_spacing: float
    slots: int
    seed: int
    warmup_fraction: float = 0.1
    policy: str = 'proposed'
    interference_smoothing: float = 0.01
    interference_constant: float | None = None
    indicator_rate: str = 'previous'
    eigensolver: str = 'jacobi'
    fit_method: str = 'moments'
    min_fit_samples: int = 100
    trace: bool = False

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_mapping(cls, mapping=None):
        """Build parameters from flat config keys, converting dB inputs to linear"""
        mapping = dict(mapping or {})
        unknown = sorted(set(mapping) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

        values = {**DEFAULTS, **mapping}

        epsilon = values['epsilon']
        if isinstance(epsilon, (list, tuple, np.ndarray)):
            epsilon = tuple(float(e) for e in epsilon)
        else:
            epsilon = (float(epsilon),)

        try:
            return cls(
                K=int(values['K']),
                N=int(values['N']),
                omega=float(values['omega']),
                tau=float(values['tau']),
                P_max=dbm_to_watts(float(values['P_max_dbm'])),
                Z=float(values['Z']),
                N0=dbm_to_watts(float(values['N0_dbm_hz'])),
                arrival_rate=float(values['arrival_rate']),
                d=float(values['d']),
                epsilon=epsilon,
                sigma_th=float(values['sigma_th']),
                xi_th=float(values['xi_th']),
                psi_override=None if values['psi'] is None else float(values['psi']),
                V=float(values['V']),
                g=int(values['g']),
                gamma=float(values['gamma']),
                phi=float(values['phi']),
                T0=int(values['T0']),
                alpha=float(values['alpha']),
                l0=db_to_linear(float(values['l0_db'])),
                l0_prime=db_to_linear(float(values['l0_prime_db'])),
                D=float(values['D']),
                speed=float(values['speed']),
                pair_gap=float(values['pair_gap']),
                area_side=float(values['area_side']),
                street_spacing=float(values['street_spacing']),
                slots=int(values['slots']),
                seed=int(values['seed']),
                warmup_fraction=float(values['warmup_fraction']),
                policy=str(values['policy']),
                interference_smoothing=float(values['interference_smoothing']),
                interference_constant=(None if values['interference_constant'] is None
                                       else float(values['interference_constant'])),
                indicator_rate=str(values['indicator_rate']),
                eigensolver=str(values['eigensolver']),
                fit_method=str(values['fit_method']),
                min_fit_samples=int(values['min_fit_samples']),
                trace=bool(values['trace']),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid config value: {e}") from e

    def validate(self):
        checks = [
            (self.tau > 0, f"tau > 0 (got {self.tau})"),
            (self.omega > 0, f"omega > 0 (got {self.omega})"),
            (self.Z > 0, f"Z > 0 (got {self.Z})"),
            (self.P_max > 0, f"P_max > 0 (got {self.P_max})"),
            (self.d > 0, f"d > 0 (got {self.d})"),
            (self.arrival_rate > 0, f"arrival_rate > 0 (got {self.arrival_rate})"),
            (self.N0 > 0, f"N0 > 0 (got {self.N0})"),
            (self.K >= 1, f"K >= 1 (got {self.K})"),
            (self.N >= 1, f"N >= 1 (got {self.N})"),
            (self.g >= 2, f"g >= 2 (got {self.g})"),
            (self.sigma_th > 0, f"sigma_th > 0 (got {self.sigma_th})"),
            (self.xi_th < 0.5, f"xi_th < 1/2 (got {self.xi_th})"),
            (self.V >= 0, f"V >= 0 (got {self.V})"),
            (self.gamma > 0, f"gamma > 0 (got {self.gamma})"),
            (self.phi > 0, f"phi > 0 (got {self.phi})"),
            (self.T0 >= 1, f"T0 >= 1 (got {self.T0})"),
            (self.alpha > 0, f"alpha > 0 (got {self.alpha})"),
            (self.D > 0, f"D > 0 (got {self.D})"),
            (self.speed > 0, f"speed > 0 (got {self.speed})"),
            (self.pair_gap > 0, f"pair_gap > 0 (got {self.pair_gap})"),
            (self.slots >= 1, f"slots >= 1 (got {self.slots})"),
            (0 <= self.warmup_fraction < 1, f"0 <= warmup_fraction < 1 (got {self.warmup_fraction})"),
            (0 < self.interference_smoothing <= 1,
             f"0 < interference_smoothing <= 1 (got {self.interference_smoothing})"),
            (self.min_fit_samples >= 1, f"min_fit_samples >= 1 (got {self.min_fit_samples})"),
        ]
        for ok, inequality in checks:
            if not ok:
                raise ParameterError(f"Parameter check failed: {inequality}")

        if len(self.epsilon) not in (1, self.K):
            raise ParameterError(f"epsilon must be a scalar or have K={self.K} entries (got {len(self.epsilon)})")
        for eps in self.epsilon:
            if not 0 < eps < 1:
                raise ParameterError(f"Parameter check failed: 0 < epsilon_k << 1 (got {eps})")

        # NLOS coefficient must stay below the WLOS value at half the intersection distance
        wlos_edge = self.l0 * (self.D / 2.0) ** self.alpha
        if not self.l0_prime < wlos_edge:
            raise ParameterError(
                f"Parameter check failed: l0' < l0*(D/2)^alpha "
                f"({linear_to_db(self.l0_prime):.2f} dB >= {linear_to_db(wlos_edge):.2f} dB)"
            )

        if self.indicator_rate not in INDICATOR_RATES:
            raise ConfigError(f"indicator_rate must be one of {INDICATOR_RATES} (got {self.indicator_rate!r})")
        if self.eigensolver not in EIGENSOLVERS:
            raise ConfigError(f"eigensolver must be one of {EIGENSOLVERS} (got {self.eigensolver!r})")
        if self.fit_method not in FIT_METHODS:
            raise ConfigError(f"fit_method must be one of {FIT_METHODS} (got {self.fit_method!r})")

    def epsilon_vector(self):
        if len(self.epsilon) == 1:
            return np.full(self.K, self.epsilon[0])
        return np.asarray(self.epsilon, dtype=float)

    @property
    def warmup_slots(self):
        return int(math.floor(self.warmup_fraction * self.slots))

    @property
    def noise_power(self):
        """N0 * omega, the per-RB noise power in watts"""
        return self.N0 * self.omega

    def with_changes(self, **changes):
        """Copy with some fields replaced; a scalar epsilon survives a change of K"""
        if 'K' in changes and len(self.epsilon) != 1 and 'epsilon' not in changes:
            raise ParameterError("Changing K requires a new per-pair epsilon vector")
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedParams:
    A: float
    psi: float
    psi_formula: float
    H: float
    B: float
    A_per_sec: float


def derive_params(p):
    """Packets per slot, the queue offset psi and the excess-moment bounds H and B"""
    A = p.arrival_rate * p.tau / p.Z
    A_per_sec = A / p.tau

    if A_per_sec < 1.0 / p.d:
        raise ParameterError(
            f"Parameter check failed: A/tau >= 1/d ({A_per_sec:.6g} packets/s < {1.0 / p.d:.6g} 1/s)"
        )

    psi_formula = 2.0 - (p.d / p.tau - 1.0) * A
    psi = psi_formula if p.psi_override is None else p.psi_override

    H = p.sigma_th / (1.0 - p.xi_th)
    B = 2.0 * p.sigma_th ** 2 / ((1.0 - p.xi_th) * (1.0 - 2.0 * p.xi_th))

    return DerivedParams(A=A, psi=psi, psi_formula=psi_formula, H=H, B=B, A_per_sec=A_per_sec)
