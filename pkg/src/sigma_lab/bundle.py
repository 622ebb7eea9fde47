"""Elements of the bundle of fibers L2(B), their convergence and fingerprints.

A bundle element is a vector together with the partition it is measured
against; the same vector on two different partitions gives two different
elements.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FiniteProbSpace, Partition, as_randvec, check_partition, is_measurable, norm2
from .metric import TestFamily, cond_norms, default_family, l2_varying_dev
from .projection import cond_exp_many


@dataclass(frozen=True, eq=False)
class BundleElement:
    space: FiniteProbSpace
    u: np.ndarray
    index: Partition

    def __post_init__(self):
        u = np.array(as_randvec(self.space, self.u), dtype=float)
        check_partition(self.space, self.index)
        if not is_measurable(u, self.index, tol=1e-12):
            raise ValueError("u: not measurable with respect to its index partition")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def norm(self) -> float:
        return norm2(self.space, self.u)

    def combine(self, alpha: float, other: "BundleElement", beta: float) -> "BundleElement":
        """``alpha * self + beta * other`` within a shared fiber."""
        if other.index != self.index:
            raise ValueError("linear combinations need a shared fiber")
        return BundleElement(self.space, alpha * self.u + beta * other.u, self.index)

    def to_json(self) -> dict:
        return {"u": self.u.tolist(), "partition": self.index.to_json()}

    @classmethod
    def from_json(cls, space: FiniteProbSpace, doc: dict) -> "BundleElement":
        return cls(space, doc["u"], Partition.from_json(doc["partition"]))


def project(space: FiniteProbSpace, u, B: Partition) -> BundleElement:
    """The element ``E[u|B]`` of the fiber over ``B``."""
    return BundleElement(space, cond_exp_many(space, np.atleast_2d(as_randvec(space, u)), B)[0], B)


def bundle_strong_dev(seq: Sequence[BundleElement], limit: BundleElement,
                      tests: TestFamily | None = None) -> np.ndarray:
    """Per index ``max(||u_k - u||, L2-varying deviation of the fibers)``."""
    space = limit.space
    tests = tests or default_family(space.n_atoms)
    idx = l2_varying_dev(space, [e.index for e in seq], limit.index, tests)
    vals = np.array([norm2(space, e.u - limit.u) for e in seq])
    return np.maximum(vals, idx)


@dataclass(frozen=True)
class WeakDev:
    w1_sup: float
    w2_dev: np.ndarray
    index_dev: np.ndarray


def bundle_weak_dev(seq: Sequence[BundleElement], limit: BundleElement,
                    tests: TestFamily | None = None) -> WeakDev:
    """Bounded norms (W1) and pairings against ``E[v|pi(u_k)]`` (W2).

    The pairing partners are the canonical strongly convergent sequences
    ``E[v|pi(u_k)] -> E[v|pi(u)]`` for every test ``v``.
    """
    space = limit.space
    tests = tests or default_family(space.n_atoms)
    V = tests.functions
    w = space.weights
    ref = (cond_exp_many(space, V, limit.index) * w) @ limit.u
    w2 = np.array([np.max(np.abs((cond_exp_many(space, V, e.index) * w) @ e.u - ref)) for e in seq])
    w1 = max(e.norm for e in seq)
    idx = l2_varying_dev(space, [e.index for e in seq], limit.index, tests)
    return WeakDev(float(w1), w2, idx)


@dataclass(frozen=True)
class Fingerprint:
    first: np.ndarray
    second: np.ndarray

    def to_json(self) -> list[dict]:
        return [{"test": j + 1, "first": float(a), "second": float(b)}
                for j, (a, b) in enumerate(zip(self.first, self.second))]

    @classmethod
    def from_json(cls, doc: list[dict]) -> "Fingerprint":
        doc = sorted(doc, key=lambda r: r["test"])
        return cls(np.array([r["first"] for r in doc]), np.array([r["second"] for r in doc]))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.first, self.second])


def fingerprint(f: BundleElement, tests: TestFamily | None = None) -> Fingerprint:
    """``(<f, E[u_j|pi(f)]>, ||E[u_j|pi(f)]||)`` for every test ``u_j``."""
    space = f.space
    tests = tests or default_family(space.n_atoms)
    if f.norm > 1 + 1e-12:
        warnings.warn(f"element has norm {f.norm:.6g} > 1; box bounds scale accordingly", stacklevel=2)
    P = cond_exp_many(space, tests.functions, f.index)
    first = (P * space.weights) @ f.u
    return Fingerprint(first, cond_norms(space, f.index, tests))


def fingerprints_distinct(prints: Sequence[Fingerprint], threshold: float = 1e-9) -> bool:
    """True iff every pair of fingerprints differs by more than ``threshold`` somewhere."""
    if len(prints) < 2:
        return True
    X = np.array([p.vector() for p in prints])
    for i in range(len(X) - 1):
        d = np.max(np.abs(X[i + 1:] - X[i]), axis=1)
        if np.any(d <= threshold):
            return False
    return True


def check_box_bounds(f: BundleElement, fp: Fingerprint, tests: TestFamily | None = None,
                     slack: float = 1e-12) -> bool:
    space = f.space
    tests = tests or default_family(space.n_atoms)
    unorm = np.sqrt((tests.functions**2) @ space.weights)
    return bool(np.all(np.abs(fp.first) <= f.norm * unorm + slack)
                and np.all(fp.second >= 0) and np.all(fp.second <= unorm + slack))

