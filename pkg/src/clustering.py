"""RSU-side grouping of VUE pairs and orthogonal RB assignment.

Every T0 slots the RSU builds a Gaussian similarity matrix from pair
midpoints, embeds it with the g smallest eigenvectors of the normalized
Laplacian, groups the rows with k-means and splits all N RBs among the
members of each group.
"""
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from src.errors import NumericalError

KMEANS_RESTARTS = 20


def similarity(midpoints, gamma, phi):
    """s_kk' = exp(-|v_k - v_k'|^2 / gamma^2), zero beyond phi"""
    v = np.asarray(midpoints, dtype=float)
    diff = v[:, None, :] - v[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    S = np.exp(-dist ** 2 / gamma ** 2)
    S[dist > phi] = 0.0
    return S


def normalized_laplacian(S):
    degree = S.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(degree)
    return np.eye(len(S)) - inv_sqrt[:, None] * S * inv_sqrt[None, :]


def _round_robin(n):
    """Disjoint (p, q) index sets covering every pair once per sweep"""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a symmetric matrix.

    Each sweep applies n - 1 rounds of disjoint plane rotations in
    round-robin order. Returns eigenvalues ascending and the matching
    eigenvectors as columns.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)

    scale = np.linalg.norm(A)
    if n < 2 or scale == 0:
        return np.diag(A).copy(), V

    rounds = _round_robin(n)
    off = np.linalg.norm(A - np.diag(np.diag(A)))

    for sweep in range(max_sweeps):
        if off < tol * scale:
            break

        for p, q in rounds:
            apq = A[p, q]
            app = A[p, p]
            aqq = A[q, q]

            rotate = apq != 0
            with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
                theta = np.where(rotate, (aqq - app) / (2.0 * np.where(rotate, apq, 1.0)), 0.0)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t = np.where(rotate, np.nan_to_num(t), 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c

            Ap = A[:, p].copy()
            Aq = A[:, q].copy()
            A[:, p] = c * Ap - s * Aq
            A[:, q] = s * Ap + c * Aq

            Rp = A[p, :].copy()
            Rq = A[q, :].copy()
            A[p, :] = c[:, None] * Rp - s[:, None] * Rq
            A[q, :] = s[:, None] * Rp + c[:, None] * Rq
            A[p, q] = 0.0
            A[q, p] = 0.0

            Vp = V[:, p].copy()
            Vq = V[:, q].copy()
            V[:, p] = c * Vp - s * Vq
            V[:, q] = s * Vp + c * Vq

        off = np.linalg.norm(A - np.diag(np.diag(A)))
    else:
        if off >= tol * scale:
            raise NumericalError(
                f"Jacobi eigensolver did not converge in {max_sweeps} sweeps",
                sweeps=max_sweeps, off_diagonal=float(off), norm=float(scale), size=n,
            )

    w = np.diag(A).copy()
    order = np.argsort(w, kind='stable')
    return w[order], V[:, order]


@dataclass
class Embedding:
    rows: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray
    degenerate: bool


def spectral_embed(S, g, eigensolver='jacobi'):
    """Row-normalized eigenvectors of the g smallest normalized-Laplacian eigenvalues"""
    L = normalized_laplacian(S)
    if eigensolver == 'numpy':
        w, U = np.linalg.eigh(L)
    else:
        w, U = jacobi_eigh(L)

    vectors = U[:, :g]
    gram_error = np.max(np.abs(vectors.T @ vectors - np.eye(g)))
    if gram_error > 1e-8:
        raise NumericalError(f"Embedding is not orthonormal (max error {gram_error:.3e})",
                             gram_error=float(gram_error))

    # A tie across the cut means the embedding is not unique
    degenerate = len(w) > g and abs(w[g] - w[g - 1]) < 1e-9

    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    rows = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)
    return Embedding(rows=rows, eigenvalues=w[:g], vectors=vectors, degenerate=bool(degenerate))


def kmeans(rows, g, seed):
    """k-means++ seeding, Lloyd iterations, best inertia over the restarts"""
    model = KMeans(n_clusters=g, init='k-means++', n_init=KMEANS_RESTARTS,
                   algorithm='lloyd', random_state=seed)
    labels = model.fit_predict(rows)
    return GroupAssignment(labels=np.asarray(labels, dtype=int), g=g)


@dataclass
class GroupAssignment:
    labels: np.ndarray
    g: int

    def members(self, group):
        return np.flatnonzero(self.labels == group)

    @property
    def groups(self):
        """Member index arrays of the nonempty groups, by group id"""
        return [self.members(j) for j in range(self.g) if np.any(self.labels == j)]

    @property
    def sizes(self):
        return np.bincount(self.labels, minlength=self.g)


@dataclass
class RbMap:
    eta: np.ndarray
    epoch: int = 0
    starved: list = field(default_factory=list)

    def rb_list(self, k):
        return np.flatnonzero(self.eta[k]).tolist()

    @property
    def counts(self):
        return self.eta.sum(axis=1)


def allocate_rbs(assignment, N, epoch=0, logger=None):
    """Round-robin split of all N RBs inside each group, members in index order"""
    K = len(assignment.labels)
    eta = np.zeros((K, N), dtype=bool)
    starved = []

    for members in assignment.groups:
        members = np.sort(members)
        if len(members) <= N:
            for n in range(N):
                eta[members[n % len(members)], n] = True
        else:
            eta[members[:N], np.arange(N)] = True
            left_out = members[N:].tolist()
            starved.extend(left_out)
            if logger:
                logger.warning(f"Group of {len(members)} pairs exceeds N={N}; "
                               f"pairs {left_out} get no RB this epoch")

    return RbMap(eta=eta, epoch=epoch, starved=sorted(starved))


class RsuScheduler:
    """Reclusters every T0 slots and keeps the current grouping between epochs"""

    def __init__(self, params, rng, logger=None):
        self.params = params
        self.rng = rng
        self.logger = logger

        self.g_eff = min(params.g, params.K)
        if self.g_eff < params.g and self.logger:
            self.logger.warning(f"K={params.K} < g={params.g}; clustering into {self.g_eff} groups")

        self.epoch = -1
        self.assignment = None
        self.rb_map = None
        self.embedding = None
        self.history = []

    def due(self, slot):
        return slot % self.params.T0 == 0 or self.rb_map is None

    def update(self, slot, midpoints, force=False):
        """New RbMap at epoch boundaries; the cached one otherwise"""
        if not force and not self.due(slot):
            return self.rb_map

        p = self.params
        self.epoch += 1

        if self.g_eff >= 2:
            S = similarity(midpoints, p.gamma, p.phi)
            self.embedding = spectral_embed(S, self.g_eff, p.eigensolver)
            if self.embedding.degenerate and self.logger:
                self.logger.warning(f"Epoch {self.epoch}: degenerate spectral embedding "
                                    f"(eigenvalue tie at position {self.g_eff})")
            seed = int(self.rng.integers(2 ** 31 - 1))
            self.assignment = kmeans(self.embedding.rows, self.g_eff, seed)
        else:
            self.assignment = GroupAssignment(labels=np.zeros(p.K, dtype=int), g=1)

        self.rb_map = allocate_rbs(self.assignment, p.N, epoch=self.epoch, logger=self.logger)
        self.history.extend(self.assignment_rows(slot))

        if self.logger:
            sizes = self.assignment.sizes
            self.logger.debug(f"Epoch {self.epoch} at slot {slot}: group sizes {sizes[sizes > 0].tolist()}")

        return self.rb_map

    def assignment_rows(self, slot):
        return [
            {'slot': slot, 'epoch': self.epoch, 'pair': k, 'group': int(self.assignment.labels[k]),
             'rbs': ' '.join(str(n) for n in self.rb_map.rb_list(k))}
            for k in range(len(self.assignment.labels))
        ]
