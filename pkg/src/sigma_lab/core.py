"""Finite probability spaces, partitions and the weighted L2 geometry.

A sub-sigma-algebra of a finite space whose atoms all carry positive mass is
nothing but a partition of the atoms, so partitions are the basic currency of
the package.  Random variables are plain one-dimensional float arrays with one
entry per atom.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

WEIGHT_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteProbSpace:
    """Atoms ``0..n-1`` with strictly positive probabilities.

    The weights are normalized on construction.  Zero-mass atoms are rejected,
    which keeps the null ideal trivial.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size == 0:
            raise ValueError("weights: need at least one atom")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights: entries must be finite")
        if np.any(w <= 0):
            raise ValueError("weights: every atom needs strictly positive mass")
        total = w.sum()
        # already normalized inputs (e.g. re-read JSON) are kept bit for bit
        if abs(total - 1.0) > 8 * w.size * np.finfo(float).eps:
            w = w / total
        object.__setattr__(self, "weights", _frozen(w))

    @classmethod
    def uniform(cls, n: int) -> "FiniteProbSpace":
        return cls(np.full(n, 1.0 / n))

    @property
    def n_atoms(self) -> int:
        return self.weights.size

    def __eq__(self, other):
        if not isinstance(other, FiniteProbSpace):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())

    def to_json(self) -> dict:
        return {"weights": self.weights.tolist()}

    @classmethod
    def from_json(cls, doc: dict) -> "FiniteProbSpace":
        return cls(doc["weights"])


def canonical_labels(block_of: Iterable[int]) -> tuple[int, ...]:
    """Relabel blocks by order of first appearance."""
    seen: dict = {}
    out = []
    for b in block_of:
        if b not in seen:
            seen[b] = len(seen)
        out.append(seen[b])
    return tuple(out)


@dataclass(frozen=True)
class Partition:
    """A partition of the atoms stored as an atom -> block map.

    ``block_of`` is always canonical (blocks numbered by first appearance), so
    dataclass equality and hashing coincide with equality of partitions.
    """

    block_of: tuple[int, ...]
    _labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        raw = [int(b) for b in self.block_of]
        if not raw:
            raise ValueError("block_of: partition of an empty set")
        canon = canonical_labels(raw)
        object.__setattr__(self, "block_of", canon)
        object.__setattr__(self, "_labels", _frozen(np.asarray(canon, dtype=np.intp)))

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls((0,) * n)

    @classmethod
    def discrete(cls, n: int) -> "Partition":
        return cls(tuple(range(n)))

    @classmethod
    def from_blocks(cls, blocks: Sequence[Iterable[int]], n: int | None = None) -> "Partition":
        blocks = [list(b) for b in blocks]
        if n is None:
            n = sum(len(b) for b in blocks)
        labels = [-1] * n
        for j, b in enumerate(blocks):
            if not b:
                raise ValueError("blocks: empty block")
            for i in b:
                if labels[i] != -1:
                    raise ValueError(f"blocks: atom {i} appears twice")
                labels[i] = j
        if -1 in labels:
            raise ValueError(f"blocks: atom {labels.index(-1)} not covered")
        return cls(tuple(labels))

    @property
    def n_atoms(self) -> int:
        return len(self.block_of)

    @property
    def n_blocks(self) -> int:
        return int(self._labels.max()) + 1

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    def blocks(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.n_blocks)]
        for i, b in enumerate(self.block_of):
            out[b].append(i)
        return out

    def indicator_matrix(self) -> np.ndarray:
        """``n x B`` 0/1 matrix whose column b is the indicator of block b."""
        h = np.zeros((self.n_atoms, self.n_blocks))
        h[np.arange(self.n_atoms), self._labels] = 1.0
        return h

    def is_finer_than(self, other: "Partition") -> bool:
        """True iff every block of ``self`` sits inside a block of ``other``."""
        _check_same_size(self, other)
        image = {}
        for a, b in zip(self.block_of, other.block_of):
            if image.setdefault(a, b) != b:
                return False
        return True

    def to_json(self) -> dict:
        return {"block_of": list(self.block_of)}

    @classmethod
    def from_json(cls, doc: dict) -> "Partition":
        return cls(tuple(doc["block_of"]))


def _check_same_size(a: Partition, b: Partition) -> None:
    if a.n_atoms != b.n_atoms:
        raise ValueError(f"partitions live on {a.n_atoms} and {b.n_atoms} atoms")


def as_randvec(space: FiniteProbSpace, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (space.n_atoms,):
        raise ValueError(f"random variable has shape {f.shape}, space has {space.n_atoms} atoms")
    return f


def check_partition(space: FiniteProbSpace, B: Partition) -> None:
    if B.n_atoms != space.n_atoms:
        raise ValueError(f"partition has {B.n_atoms} atoms, space has {space.n_atoms}")


def inner(space: FiniteProbSpace, f, g) -> float:
    """``E[f g]``."""
    f = as_randvec(space, f)
    g = as_randvec(space, g)
    # f * g first: the product is commutative bit for bit, so symmetry is exact
    return float(np.dot(space.weights, f * g))


def norm2(space: FiniteProbSpace, f) -> float:
    return float(np.sqrt(inner(space, f, f)))


def block_probs(space: FiniteProbSpace, B: Partition) -> np.ndarray:
    check_partition(space, B)
    return np.bincount(B.labels, weights=space.weights, minlength=B.n_blocks)


def is_measurable(f, B: Partition, tol: float | None = None) -> bool:
    """True iff ``f`` is constant on every block of ``B``.

    Exact comparison by default; pass ``tol`` for numerically produced vectors.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (B.n_atoms,):
        raise ValueError(f"random variable has shape {f.shape}, partition has {B.n_atoms} atoms")
    lab = B.labels
    first = np.full(B.n_blocks, -1, dtype=np.intp)
    # index of the first atom of each block
    first[lab[::-1]] = np.arange(B.n_atoms)[::-1]
    ref = f[first[lab]]
    if tol is None:
        return bool(np.all(f == ref))
    return bool(np.all(np.abs(f - ref) <= tol))


def partitions_equal(A: Partition, B: Partition) -> bool:
    _check_same_size(A, B)
    return A.block_of == B.block_of


def all_partitions(n: int) -> Iterator[Partition]:
    """Every partition of ``n`` atoms, via restricted growth strings."""
    if n < 1:
        raise ValueError("n must be positive")
    a = [0] * n
    m = [0] * n  # m[i] = max(a[:i+1])

    def rec(i):
        if i == n:
            yield Partition(tuple(a))
            return
        for v in range(m[i - 1] + 2):
            a[i] = v
            m[i] = max(m[i - 1], v)
            yield from rec(i + 1)

    yield from rec(1)


def random_space(n: int, rng: np.random.Generator, uniform: bool = False) -> FiniteProbSpace:
    if uniform:
        return FiniteProbSpace.uniform(n)
    return FiniteProbSpace(rng.uniform(0.05, 1.0, size=n))


def random_partition(n: int, rng: np.random.Generator, max_blocks: int | None = None) -> Partition:
    k = int(rng.integers(1, (max_blocks or n) + 1))
    return Partition(tuple(int(x) for x in rng.integers(0, k, size=n)))
