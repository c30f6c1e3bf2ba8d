"""Link gains for one slot and the per-pair data rate.

Gains combine the LOS/WLOS/NLOS street path loss with unit-mean exponential
(Rayleigh power) fading drawn per link, RB and slot. Only links that can
matter are drawn: every pair's own RBs and every co-channel
transmitter/receiver combination under the current RB map.
"""
from enum import IntEnum

import numpy as np

# Coinciding vehicles are not modelled; distances are floored here
MIN_DISTANCE = 1.0


class LinkClass(IntEnum):
    LOS = 0
    WLOS = 1
    NLOS = 2


def classify_many(tx, rx, grid, D):
    """Vectorized link classification for (M, 2) position arrays"""
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))

    dx = np.abs(tx[:, 0] - rx[:, 0])
    dy = np.abs(tx[:, 1] - rx[:, 1])

    tx_h = grid.on_street(tx[:, 1])
    tx_v = grid.on_street(tx[:, 0])
    rx_h = grid.on_street(rx[:, 1])
    rx_v = grid.on_street(rx[:, 0])

    shared = (tx_h & rx_h & (dy < 1e-6)) | (tx_v & rx_v & (dx < 1e-6))
    perpendicular = ~shared & ((tx_h & rx_v) | (tx_v & rx_h))

    # On perpendicular streets |dx| and |dy| are the two distances to the corner
    near_corner = np.minimum(dx, dy) <= D
    on_axis = (dx < 1e-9) | (dy < 1e-9)

    classes = np.full(len(tx), LinkClass.LOS, dtype=np.int8)
    classes[perpendicular & (near_corner | on_axis)] = LinkClass.WLOS
    classes[perpendicular & ~near_corner & ~on_axis] = LinkClass.NLOS
    return classes


def classify(x, y, grid, D):
    return LinkClass(int(classify_many([x], [y], grid, D)[0]))


def pathloss_many(classes, tx, rx, l0, l0_prime, alpha):
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.atleast_2d(np.asarray(rx, dtype=float))
    classes = np.asarray(classes)

    dx = np.abs(tx[:, 0] - rx[:, 0])
    dy = np.abs(tx[:, 1] - rx[:, 1])

    l2 = np.maximum(np.hypot(dx, dy), MIN_DISTANCE)
    l1 = np.maximum(dx + dy, MIN_DISTANCE)
    product = np.maximum(dx * dy, MIN_DISTANCE)

    gain = l0 * l2 ** (-alpha)
    # An NLOS class with a zero offset on one axis falls back to the weak-LOS law
    nlos = (classes == LinkClass.NLOS) & (dx > 1e-9) & (dy > 1e-9)
    wlos = (classes == LinkClass.WLOS) | ((classes == LinkClass.NLOS) & ~nlos)
    gain[wlos] = l0 * l1[wlos] ** (-alpha)
    gain[nlos] = l0_prime * product[nlos] ** (-alpha)
    return gain


def pathloss(link_class, x, y, l0, l0_prime, alpha):
    """Linear path-loss gain of a single link"""
    return float(pathloss_many([int(link_class)], [x], [y], l0, l0_prime, alpha)[0])


class GainMatrix:
    """Sparse h[k'->k][n] for one slot: entries exist only for co-channel links"""

    def __init__(self, K, N, src, dst, rb, gain):
        self.K = K
        self.N = N
        self.src = src
        self.dst = dst
        self.rb = rb
        self.gain = gain

        own = src == dst
        self.direct = np.zeros((K, N))
        self.direct[dst[own], rb[own]] = gain[own]
        self._cross = ~own

    def interference(self, power):
        """Aggregate co-channel interference (K, N) at each receiver for a power matrix"""
        cross = self._cross
        flat = self.dst[cross] * self.N + self.rb[cross]
        weights = power[self.src[cross], self.rb[cross]] * self.gain[cross]
        return np.bincount(flat, weights=weights, minlength=self.K * self.N).reshape(self.K, self.N)

    def dense(self):
        """(K, K, N) array indexed [interferer, receiver, rb]; zeros where no link was drawn"""
        full = np.zeros((self.K, self.K, self.N))
        full[self.src, self.dst, self.rb] = self.gain
        return full


def co_channel_links(eta):
    """All (src, dst, rb) triples where both pairs hold the RB, self-links included"""
    src, dst, rb = [], [], []
    for n in range(eta.shape[1]):
        users = np.flatnonzero(eta[:, n])
        if users.size == 0:
            continue
        s, t = np.meshgrid(users, users, indexing='ij')
        src.append(s.ravel())
        dst.append(t.ravel())
        rb.append(np.full(s.size, n))
    if not src:
        empty = np.zeros(0, dtype=int)
        return empty, empty, empty
    return np.concatenate(src), np.concatenate(dst), np.concatenate(rb)


class ChannelModel:
    def __init__(self, params, grid, rng, logger=None):
        self.params = params
        self.grid = grid
        self.rng = rng
        self.logger = logger

        self._links = None

    def set_rb_map(self, rb_map):
        """Cache the co-channel link list for a new RB map"""
        self._links = co_channel_links(rb_map.eta)
        if self.logger:
            self.logger.debug(f"Epoch {rb_map.epoch}: {self._links[0].size} co-channel links")

    def draw(self, tx_positions, rx_positions):
        """Path loss times fresh fading for every cached link"""
        if self._links is None:
            raise RuntimeError("set_rb_map must be called before draw")

        p = self.params
        src, dst, rb = self._links
        tx = tx_positions[src]
        rx = rx_positions[dst]

        classes = classify_many(tx, rx, self.grid, p.D)
        gains = pathloss_many(classes, tx, rx, p.l0, p.l0_prime, p.alpha)
        fading = self.draw_fading(gains.size)

        return GainMatrix(p.K, p.N, src, dst, rb, gains * fading)

    def draw_fading(self, size):
        """Unit-mean exponential power fading"""
        return self.rng.exponential(1.0, size=size)


def rate(power, gains, interference, params):
    """Packets per slot for one pair; power, gains and interference run over its RBs"""
    power = np.asarray(power, dtype=float)
    gains = np.asarray(gains, dtype=float)
    interference = np.asarray(interference, dtype=float)
    sinr = power * gains / (params.noise_power + interference)
    return float(params.tau / params.Z * np.sum(params.omega * np.log2(1.0 + sinr)))


def rates(power, direct, interference, params):
    """Packets per slot for every pair at once; inputs are (K, N)"""
    sinr = power * direct / (params.noise_power + interference)
    return params.tau / params.Z * params.omega * np.log2(1.0 + sinr).sum(axis=1)
