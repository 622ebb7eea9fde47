"""Conditional expectations as Markovian orthogonal projections.

On a finite space ``E[.|B]`` is the matrix ``M[i, j] = p_j / P(block(i))`` for
``j`` in the block of ``i``.  Conversely, an operator that is a weighted
orthogonal projection, fixes constants and maps ``[0, 1]``-valued vectors into
``[0, 1]`` is always such a matrix, and the partition can be read off its rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .core import FiniteProbSpace, Partition, as_randvec, block_probs, check_partition

PIVOT_TOL = 1e-9
ROW_TOL = 1e-9
EIG_LIMIT = 2048


def cond_exp(space: FiniteProbSpace, f, B: Partition) -> np.ndarray:
    """Blockwise weighted average of ``f`` over the blocks of ``B``."""
    f = as_randvec(space, f)
    check_partition(space, B)
    sums = np.bincount(B.labels, weights=space.weights * f, minlength=B.n_blocks)
    return (sums / block_probs(space, B))[B.labels]


def cond_exp_many(space: FiniteProbSpace, F: np.ndarray, B: Partition) -> np.ndarray:
    """``cond_exp`` applied to every row of the ``J x n`` array ``F``."""
    H = B.indicator_matrix()
    sums = (F * space.weights) @ H
    return (sums / block_probs(space, B))[:, B.labels]


@dataclass(frozen=True, eq=False)
class CondExpOperator:
    space: FiniteProbSpace
    partition: Partition
    matrix: np.ndarray

    def __call__(self, f) -> np.ndarray:
        return self.matrix @ as_randvec(self.space, f)


@dataclass(frozen=True, eq=False)
class ProjectionCandidate:
    """An arbitrary square operator to be tested for being a conditional expectation."""

    space: FiniteProbSpace
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix: expected a square matrix, got shape {m.shape}")
        if m.shape[0] != self.space.n_atoms:
            raise ValueError(f"matrix: size {m.shape[0]} does not match {self.space.n_atoms} atoms")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


def operator_of(space: FiniteProbSpace, B: Partition) -> CondExpOperator:
    check_partition(space, B)
    lab = B.labels
    same = lab[:, None] == lab[None, :]
    m = np.where(same, space.weights[None, :] / block_probs(space, B)[lab][:, None], 0.0)
    m.setflags(write=False)
    return CondExpOperator(space, B, m)


def _as_candidate(c) -> ProjectionCandidate:
    if isinstance(c, CondExpOperator):
        return ProjectionCandidate(c.space, c.matrix)
    return c


@dataclass(frozen=True)
class CharacterizationReport:
    is_projection: bool
    is_markov: bool
    fixes_constants: bool
    range_is_lattice: bool
    rank: int
    recovered_partition: Partition | None

    @property
    def all_pass(self) -> bool:
        return self.is_projection and self.is_markov and self.fixes_constants and self.range_is_lattice


def range_basis(matrix: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """Linearly independent columns of ``matrix`` spanning its range (``n x r``)."""
    _, r, piv = scipy.linalg.qr(matrix, pivoting=True, mode="economic")
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 0.0)))
    return matrix[:, np.sort(piv[:rank])]


def _in_range(basis: np.ndarray, vs: np.ndarray, tol: float) -> bool:
    """True iff every column of ``vs`` lies in the span of ``basis``."""
    if basis.shape[1] == 0:
        return bool(np.all(np.abs(vs) <= tol))
    q, _ = np.linalg.qr(basis)
    return bool(np.max(np.abs(vs - q @ (q.T @ vs))) <= tol)


def _is_projection(c: ProjectionCandidate, tol: float) -> bool:
    m = c.matrix
    dm = c.space.weights[:, None] * m
    # weighted self-adjointness: <Mf, g> = <f, Mg>  <=>  D M symmetric
    return bool(np.max(np.abs(m @ m - m)) <= tol and np.max(np.abs(dm - dm.T)) <= tol)


def _is_markov(c: ProjectionCandidate, tol: float) -> bool:
    m = c.matrix
    n = m.shape[0]
    one = np.ones(n)
    if np.max(np.abs(m @ one - one)) > tol:
        return False
    # images of atom indicators are the columns, of their complements 1 - column
    imgs = np.concatenate([m, (m @ one)[:, None] - m], axis=1)
    return bool(np.all(imgs >= -tol) and np.all(imgs <= 1 + tol))


def _level_partition(basis: np.ndarray, tol: float) -> Partition:
    """Atoms on which every basis vector takes the same value share a block."""
    return _group_rows(basis, tol)


def _group_rows(rows: np.ndarray, tol: float) -> Partition:
    n = rows.shape[0]
    labels = np.full(n, -1, dtype=np.intp)
    reps: list[int] = []
    for i in range(n):
        if reps:
            d = np.max(np.abs(rows[reps] - rows[i]), axis=1) if rows.shape[1] else np.zeros(len(reps))
            hit = np.flatnonzero(d <= tol)
            if hit.size:
                labels[i] = hit[0]
                continue
        labels[i] = len(reps)
        reps.append(i)
    return Partition(tuple(int(x) for x in labels))


def _range_is_lattice(c: ProjectionCandidate, basis: np.ndarray, tol: float) -> bool:
    n = c.matrix.shape[0]
    if not _in_range(basis, np.ones((n, 1)), tol):
        return False
    r = basis.shape[1]
    # pointwise minima of basis vectors with 0, with each other and with negatives
    probes = [np.minimum(basis, 0.0)]
    i, j = np.triu_indices(r, 1)
    probes.append(np.minimum(basis[:, i], basis[:, j]))
    probes.append(np.minimum(basis[:, i], -basis[:, j]))
    if not _in_range(basis, np.concatenate(probes, axis=1), tol):
        return False
    # a lattice subspace containing 1 is exactly L2 of the level-set partition
    return _level_partition(basis, tol).n_blocks == r


def check_markov_characterization(c, tol: float = PIVOT_TOL) -> CharacterizationReport:
    """Run the four equivalent characterizations of conditional expectations."""
    c = _as_candidate(c)
    n = c.matrix.shape[0]
    is_proj = _is_projection(c, tol)
    is_markov = _is_markov(c, tol)
    fixes = bool(np.max(np.abs(c.matrix @ np.ones(n) - 1.0)) <= tol)
    basis = range_basis(c.matrix, tol)
    lattice = _range_is_lattice(c, basis, tol)
    recovered = partition_from_projection(c) if (is_proj and is_markov) else None
    return CharacterizationReport(is_proj, is_markov, fixes, lattice, basis.shape[1], recovered)


def partition_from_projection(c, tol: float = ROW_TOL) -> Partition:
    """Read the partition off a Markovian projection: equal rows share a block."""
    c = _as_candidate(c)
    if not (_is_projection(c, tol) and _is_markov(c, tol)):
        raise ValueError("not a Markovian projection")
    B = _group_rows(c.matrix, tol)
    if np.max(np.abs(operator_of(c.space, B).matrix - c.matrix)) > tol:
        raise ValueError("not a Markovian projection")
    return B


def _lanczos_norm(s: np.ndarray) -> float:
    """Spectral radius of a symmetric matrix by Lanczos iteration."""
    s = 0.5 * (s + s.T)
    val = scipy.sparse.linalg.eigsh(s, k=1, which="LM", return_eigenvectors=False, tol=1e-12)
    return float(abs(val[0]))


def _block_frame(space: FiniteProbSpace, B: Partition) -> np.ndarray:
    """Columns ``sqrt(p) 1_b / sqrt(P(b))``: an orthonormal frame with ``E E^T = D^1/2 P_B D^-1/2``."""
    e = B.indicator_matrix() * np.sqrt(space.weights)[:, None]
    return e / np.sqrt(block_probs(space, B))[None, :]


def partition_norm_dev(space: FiniteProbSpace, A: Partition, B: Partition) -> float:
    """``||E[.|A] - E[.|B]||`` in the weighted operator norm, from the partitions.

    Small spaces use a dense symmetric eigensolve.  Larger ones compress onto
    the span of both block frames (dimension at most ``|A| + |B|``), where the
    difference lives, and fall back to Lanczos iteration only when that span
    is itself large.
    """
    n = space.n_atoms
    if n <= EIG_LIMIT or A.n_blocks + B.n_blocks > EIG_LIMIT:
        sq = np.sqrt(space.weights)
        s = sq[:, None] * (operator_of(space, A).matrix - operator_of(space, B).matrix) / sq[None, :]
        if n <= EIG_LIMIT:
            return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (s + s.T)))))
        return _lanczos_norm(s)
    ea, eb = _block_frame(space, A), _block_frame(space, B)
    q, _ = np.linalg.qr(np.hstack([ea, eb]))
    qa, qb = q.T @ ea, q.T @ eb
    t = qa @ qa.T - qb @ qb.T
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (t + t.T)))))


def operator_norm_dev(A: CondExpOperator, B: CondExpOperator) -> float:
    """Weighted-L2 operator norm of ``P_A - P_B``."""
    if A.space != B.space:
        raise ValueError("operators act on different spaces")
    return partition_norm_dev(A.space, A.partition, B.partition)
