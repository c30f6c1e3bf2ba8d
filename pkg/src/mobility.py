"""Manhattan-grid motion for transmitter/receiver pairs.

Transmitters drive along streets at constant speed and pick a direction at
every intersection. Each receiver replays its transmitter's trajectory with
a fixed lag of ``ceil(pair_gap / (speed * tau))`` slots, so the pair keeps
its spacing through turns.
"""
import math
from dataclasses import dataclass

import numpy as np

from src.errors import ParameterError

# Straight, left, right
TURN_PROBABILITIES = (0.5, 0.25, 0.25)

_TOL = 1e-9


class RoadGrid:
    def __init__(self, area_side=250.0, street_spacing=62.5):
        if area_side <= 0 or street_spacing <= 0:
            raise ParameterError("Parameter check failed: area_side > 0 and street_spacing > 0")

        n_blocks = area_side / street_spacing
        if abs(n_blocks - round(n_blocks)) > 1e-9 or round(n_blocks) < 1:
            raise ParameterError(
                f"Parameter check failed: street_spacing divides area_side "
                f"({street_spacing} does not divide {area_side})"
            )

        self.area_side = float(area_side)
        self.street_spacing = float(street_spacing)
        self.n_blocks = int(round(n_blocks))
        # Same coordinates serve both families: y = c streets and x = c streets
        self.streets = np.arange(self.n_blocks + 1) * self.street_spacing

    def on_street(self, coord):
        """True where a coordinate lies on a street line"""
        coord = np.asarray(coord, dtype=float)
        k = np.round(coord / self.street_spacing)
        return (np.abs(coord - k * self.street_spacing) < 1e-6) & (k >= 0) & (k <= self.n_blocks)

    def snap(self, coord):
        return np.round(np.asarray(coord, dtype=float) / self.street_spacing) * self.street_spacing

    def contains(self, pos):
        pos = np.asarray(pos, dtype=float)
        return bool(np.all(pos >= -1e-6) and np.all(pos <= self.area_side + 1e-6))


@dataclass
class PairState:
    index: int
    tx: np.ndarray
    rx: np.ndarray
    heading: np.ndarray
    lane: tuple

    @property
    def midpoint(self):
        return (self.tx + self.rx) / 2.0

    @property
    def separation(self):
        return float(np.linalg.norm(self.tx - self.rx))


def lane_of(pos, heading):
    """('h', y) for an east-west street, ('v', x) for a north-south one"""
    if heading[0] != 0:
        return ('h', float(pos[1]))
    return ('v', float(pos[0]))


class ManhattanMobility:
    def __init__(self, grid, K, speed, tau, pair_gap, rng, logger=None):
        self.grid = grid
        self.K = int(K)
        self.rng = rng
        self.logger = logger

        if self.K < 1:
            raise ParameterError(f"Parameter check failed: K >= 1 (got {K})")

        self.step_length = speed * tau
        self.lag = int(math.ceil(pair_gap / self.step_length - _TOL))
        self.pair_gap = pair_gap

        if self.lag * self.step_length >= grid.street_spacing:
            raise ParameterError(
                f"Parameter check failed: pair_gap < street_spacing "
                f"({pair_gap} m vs {grid.street_spacing} m)"
            )

        self.pos = np.zeros((self.K, 2))
        self.heading = np.zeros((self.K, 2))
        self.remaining = np.zeros(self.K)
        self.slot = 0

        # Ring buffer of transmitter positions; the oldest entry is the receiver
        self._history = np.zeros((self.lag + 1, self.K, 2))
        self._head = 0

    def init_pairs(self):
        """Place every receiver on a street and drive its transmitter ahead by the lag"""
        spacing = self.grid.street_spacing
        travel = self.lag * self.step_length

        for k in range(self.K):
            axis = int(self.rng.integers(2))
            street = self.grid.streets[int(self.rng.integers(self.grid.n_blocks + 1))]
            block = int(self.rng.integers(self.grid.n_blocks))
            direction = 1.0 if self.rng.random() < 0.5 else -1.0
            offset = self.rng.uniform(0.0, spacing - travel)

            start = block * spacing if direction > 0 else (block + 1) * spacing
            along = start + direction * offset

            heading = np.zeros(2)
            heading[axis] = direction
            pos = np.zeros(2)
            pos[axis] = along
            pos[1 - axis] = street

            self.pos[k] = pos
            self.heading[k] = heading
            self.remaining[k] = spacing - offset

        self._history[0] = self.pos
        self._head = 0
        for _ in range(self.lag):
            self._advance()

        self.slot = 0

        if self.logger:
            self.logger.info(f"Placed {self.K} pairs on a {self.grid.area_side:.0f} m grid "
                             f"(lag {self.lag} slots, step {self.step_length:.4f} m)")

        return self.pairs()

    def step(self):
        """Advance every transmitter by one slot; receivers follow through the buffer"""
        self._advance()
        self.slot += 1

    def _advance(self):
        d = self.step_length
        crossing = self.remaining <= d + _TOL

        moving = ~crossing
        self.pos[moving] += self.heading[moving] * d
        self.remaining[moving] -= d

        for k in np.flatnonzero(crossing):
            self._cross_intersection(k, d)

        self._head = (self._head + 1) % (self.lag + 1)
        self._history[self._head] = self.pos

    def _cross_intersection(self, k, distance):
        left = distance
        while left >= self.remaining[k] - _TOL:
            self.pos[k] = self.grid.snap(self.pos[k] + self.heading[k] * self.remaining[k])
            left = max(left - self.remaining[k], 0.0)
            self.heading[k] = self._choose_heading(self.pos[k], self.heading[k])
            self.remaining[k] = self.grid.street_spacing
            if left <= 0.0:
                break

        self.pos[k] += self.heading[k] * left
        self.remaining[k] -= left

    def _choose_heading(self, pos, heading):
        """Straight/left/right at 0.5/0.25/0.25, restricted to moves that stay inside"""
        straight = heading.copy()
        left = np.array([-heading[1], heading[0]])
        right = np.array([heading[1], -heading[0]])

        options = []
        weights = []
        for option, weight in zip((straight, left, right), TURN_PROBABILITIES):
            target = pos + option * self.grid.street_spacing
            if self.grid.contains(target):
                options.append(option)
                weights.append(weight)

        if not options:
            return -heading

        weights = np.asarray(weights) / sum(weights)
        choice = int(np.searchsorted(np.cumsum(weights), self.rng.random(), side='right'))
        return options[min(choice, len(options) - 1)]

    @property
    def tx_positions(self):
        return self._history[self._head]

    @property
    def rx_positions(self):
        return self._history[(self._head + 1) % (self.lag + 1)]

    @property
    def midpoints(self):
        return (self.tx_positions + self.rx_positions) / 2.0

    def pairs(self):
        tx = self.tx_positions
        rx = self.rx_positions
        return [
            PairState(index=k, tx=tx[k].copy(), rx=rx[k].copy(),
                      heading=self.heading[k].copy(), lane=lane_of(tx[k], self.heading[k]))
            for k in range(self.K)
        ]

    def position_rows(self, slot):
        """Rows for the optional position trace"""
        tx = self.tx_positions
        rx = self.rx_positions
        return [
            {'slot': slot, 'pair': k, 'tx_x': tx[k, 0], 'tx_y': tx[k, 1],
             'rx_x': rx[k, 0], 'rx_y': rx[k, 1]}
            for k in range(self.K)
        ]


def init_pairs(grid, K, seed, speed=60.0 / 3.6, tau=3e-3, pair_gap=15.0):
    """Seeded placement of K pairs; returns the model and its initial PairStates"""
    mobility = ManhattanMobility(grid, K, speed, tau, pair_gap, np.random.default_rng(seed))
    return mobility, mobility.init_pairs()
