"""The series metric of L2-varying convergence and finite compactness tools.

``d_kappa(A, B) = sum_j 2^-j * theta(||E[f_j|A]|| - ||E[f_j|B]||)`` over an
ordered test family.  Atom indicators alone do not separate partitions (two
different pairings of four equally likely atoms give identical norms), so the
default family also carries every pairwise sum ``1_i + 1_j``: the excess of
``||E[1_i + 1_j|B]||^2`` over the two atom terms is ``2 p_i p_j / P(b)`` when
``i`` and ``j`` share a block ``b`` and zero otherwise.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FiniteProbSpace, Partition, block_probs, check_partition
from .projection import cond_exp_many

KINDS = ("atoms", "atoms+pairs", "custom")


@dataclass(frozen=True, eq=False)
class TestFamily:
    """Ordered test functions; the j-th (1-based) carries weight ``2^-j``."""

    __test__ = False  # not a pytest class

    functions: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        F = np.array(self.functions, dtype=float)
        if F.ndim != 2 or F.shape[0] == 0:
            raise ValueError("test family must hold at least one function")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        F.setflags(write=False)
        object.__setattr__(self, "functions", F)

    @classmethod
    def atoms(cls, n: int) -> "TestFamily":
        return cls(np.eye(n), "atoms")

    @classmethod
    def atoms_pairs(cls, n: int) -> "TestFamily":
        i, j = np.triu_indices(n, 1)
        pairs = np.zeros((i.size, n))
        pairs[np.arange(i.size), i] = 1.0
        pairs[np.arange(i.size), j] = 1.0
        return cls(np.vstack([np.eye(n), pairs]), "atoms+pairs")

    @classmethod
    def custom(cls, functions) -> "TestFamily":
        return cls(functions, "custom")

    @property
    def size(self) -> int:
        return self.functions.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.functions.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return 2.0 ** -np.arange(1, self.size + 1)

    @property
    def truncation_bound(self) -> float:
        """Upper bound on the tail a truncated infinite family drops."""
        return 2.0 ** -self.size

    def normalized(self, space: FiniteProbSpace) -> "TestFamily":
        F = self.functions
        nrm = np.sqrt((F**2) @ space.weights)
        nrm[nrm == 0] = 1.0
        return TestFamily(F / nrm[:, None], self.kind)


def default_family(n: int) -> TestFamily:
    return TestFamily.atoms_pairs(n)


def _check_family(space: FiniteProbSpace, tests: TestFamily) -> None:
    if tests.n_atoms != space.n_atoms:
        raise ValueError(f"test family lives on {tests.n_atoms} atoms, space has {space.n_atoms}")


def cond_norms(space: FiniteProbSpace, B: Partition, tests: TestFamily) -> np.ndarray:
    """``||E[f_j|B]||_2`` for every test function."""
    check_partition(space, B)
    _check_family(space, tests)
    sums = (tests.functions * space.weights) @ B.indicator_matrix()
    return np.sqrt((sums**2) @ (1.0 / block_probs(space, B)))


def theta(s: float) -> float:
    s = abs(s)
    return s / (1.0 + s)


def _dkappa_from_norms(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> float:
    d = np.abs(a - b)
    return float(np.dot(w, d / (1.0 + d)))


def d_kappa(space: FiniteProbSpace, A: Partition, B: Partition, tests: TestFamily | None = None) -> float:
    tests = tests or default_family(space.n_atoms)
    return _dkappa_from_norms(cond_norms(space, A, tests), cond_norms(space, B, tests), tests.weights)


def _check_seq(space: FiniteProbSpace, seq: Sequence[Partition]) -> None:
    if len(seq) == 0:
        raise ValueError("partition sequence is empty")
    for B in seq:
        check_partition(space, B)


def l2_varying_dev(space: FiniteProbSpace, seq: Sequence[Partition], limit: Partition,
                   tests: TestFamily | None = None) -> np.ndarray:
    """Per index, ``max_j | ||E[f_j|B_n]|| - ||E[f_j|limit]|| |``."""
    tests = tests or default_family(space.n_atoms)
    ref = cond_norms(space, limit, tests)
    return np.array([np.max(np.abs(cond_norms(space, B, tests) - ref)) for B in seq])


def _most_frequent(seq: Sequence[Partition], idx: Sequence[int]) -> Partition:
    counts = Counter(seq[i] for i in idx)
    best = max(counts.values())
    # ties go to the value whose first occurrence is earliest
    return next(seq[i] for i in idx if counts[seq[i]] == best)


def extract_convergent_subsequence(seq: Sequence[Partition]) -> tuple[list[int], Partition]:
    """Pigeonhole a constant subsequence out of a finite partition lattice."""
    if len(seq) == 0:
        raise ValueError("partition sequence is empty")
    limit = _most_frequent(seq, range(len(seq)))
    return [i for i, B in enumerate(seq) if B == limit], limit


@dataclass(frozen=True)
class PropertyEResult:
    cauchy_ok: bool
    limit: Partition | None
    tail_indices: list[int]
    oscillation: float
    strong_dev: float | None


def property_E_check(space: FiniteProbSpace, seq: Sequence[Partition], tests: TestFamily | None = None,
                     tol: float = 1e-9) -> PropertyEResult:
    """Finite-horizon Cauchy test of the norm sequences over the last half.

    When the tail is Cauchy, any partition whose norms stay within ``tol`` of
    every tail element is an admissible finite-horizon limit.  The meet of the
    tail, whose events lie in every tail element, is preferred when admissible;
    otherwise the tail value with the smallest worst-case norm deviation is
    taken (ties toward the most frequent).  Conditioning on a finer partition
    never lowers a norm, so a pure minimal-deviation rule would never return
    a limit coarser than the tail.  The strong deviation
    ``max ||E[f|B_k] - E[f|limit]||`` over the tail is reported.
    """
    from .lattice import meet

    _check_seq(space, seq)
    tests = tests or default_family(space.n_atoms)
    tail = list(range(len(seq) // 2, len(seq)))
    norms = np.array([cond_norms(space, seq[k], tests) for k in tail])
    osc = float(np.max(norms.max(axis=0) - norms.min(axis=0)))
    if osc > tol:
        return PropertyEResult(False, None, tail, osc, None)

    score = lambda c: float(np.max(np.abs(norms - cond_norms(space, c, tests))))
    bottom = seq[tail[0]]
    for k in tail[1:]:
        bottom = meet(bottom, seq[k])
    if score(bottom) <= tol:
        limit = bottom
    else:
        candidates = [_most_frequent(seq, tail)]
        candidates += [seq[k] for k in tail if seq[k] not in candidates]
        scores = [score(c) for c in candidates]
        limit = candidates[int(np.argmin(scores))]

    ref = cond_exp_many(space, tests.functions, limit)
    strong = 0.0
    for k in tail:
        diff = cond_exp_many(space, tests.functions, seq[k]) - ref
        strong = max(strong, float(np.max(np.sqrt((diff**2) @ space.weights))))
    return PropertyEResult(True, limit, tail, osc, strong)
