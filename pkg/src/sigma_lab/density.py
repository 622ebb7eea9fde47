"""Pairs (G, density) and their rho-convergence.

A pair is stored through its Radon-Nikodym density ``u = dmu/dP^G``: a
nonnegative G-measurable vector with ``E[u] = 1``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FiniteProbSpace, Partition, as_randvec, block_probs, check_partition, is_measurable, norm2
from .metric import TestFamily, default_family, l2_varying_dev
from .projection import cond_exp, cond_exp_many

DENSITY_TOL = 1e-12
BISECT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DensityPair:
    space: FiniteProbSpace
    g: Partition
    u: np.ndarray

    def __post_init__(self):
        u = np.array(as_randvec(self.space, self.u), dtype=float)
        check_partition(self.space, self.g)
        if np.any(u < -DENSITY_TOL):
            raise ValueError("u: density takes negative values")
        mass = float(np.dot(self.space.weights, u))
        if abs(mass - 1.0) > DENSITY_TOL:
            raise ValueError(f"u: density integrates to {mass!r}, not 1")
        if not is_measurable(u, self.g, tol=DENSITY_TOL):
            raise ValueError("u: density is not measurable with respect to g")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @classmethod
    def reference(cls, space: FiniteProbSpace, g: Partition) -> "DensityPair":
        """The pair ``(g, P restricted to g)``, that is ``u = 1``."""
        return cls(space, g, np.ones(space.n_atoms))

    def to_json(self) -> dict:
        return {"partition": self.g.to_json(), "u": self.u.tolist()}

    @classmethod
    def from_json(cls, space: FiniteProbSpace, doc: dict) -> "DensityPair":
        return cls(space, Partition.from_json(doc["partition"]), doc["u"])


def _rho_values(pair: DensityPair, F: np.ndarray) -> np.ndarray:
    P = cond_exp_many(pair.space, F, pair.g)
    w = pair.space.weights
    # same reduction as ``inner``, so u = 1 reproduces ``norm2`` bit for bit
    return np.sqrt([np.dot(w, (e * e) * pair.u) for e in P])


def rho_value(pair: DensityPair, f) -> float:
    """``sqrt(E[E[f|g]^2 u])``."""
    e = cond_exp(pair.space, f, pair.g)
    return float(np.sqrt(np.dot(pair.space.weights, (e * e) * pair.u)))


def rho_dev(seq: Sequence[DensityPair], limit: DensityPair, tests: TestFamily | None = None) -> np.ndarray:
    space = limit.space
    tests = tests or default_family(space.n_atoms)
    F = tests.functions
    idx = l2_varying_dev(space, [p.g for p in seq], limit.g, tests)
    ref = _rho_values(limit, F)
    vals = np.array([np.max(np.abs(_rho_values(p, F) - ref)) for p in seq])
    return np.maximum(idx, vals)


@dataclass(frozen=True, eq=False)
class RhoExtraction:
    indices: list[int]
    limit: DensityPair
    cluster_radius: float
    envelope: np.ndarray  # rho_dev along ``indices``


def _bisect_cluster(X: np.ndarray, tol: float) -> np.ndarray:
    """Indices (into rows of X) of a cluster found by coordinate bisection.

    Each step halves the widest side of the current box and keeps the half
    holding more points; ties go to the half holding the latest point.
    """
    alive = np.arange(X.shape[0])
    lo = X.min(axis=0)
    hi = X.max(axis=0)
    while True:
        width = hi - lo
        d = int(np.argmax(width))
        if width[d] <= tol:
            return alive
        mid = 0.5 * (lo[d] + hi[d])
        left = alive[X[alive, d] <= mid]
        right = alive[X[alive, d] > mid]
        if len(left) > len(right) or (len(left) == len(right) and left.max() > right.max()):
            alive, hi[d] = left, mid
        else:
            alive, lo[d] = right, mid


def extract_rho_convergent(seq: Sequence[DensityPair], K: float, tests: TestFamily | None = None,
                           tol: float = BISECT_TOL) -> RhoExtraction:
    """Pigeonhole a constant-partition subsequence, then bisect to a cluster point."""
    if len(seq) == 0:
        raise ValueError("density sequence is empty")
    space = seq[0].space
    for k, p in enumerate(seq):
        if norm2(space, p.u) > K:
            raise ValueError(f"index {k}: ||u||_2 = {norm2(space, p.u):.6g} exceeds K = {K}")
    counts = Counter(p.g for p in seq)
    best = max(counts.values())
    g = next(p.g for p in seq if counts[p.g] == best)
    idx = np.array([k for k, p in enumerate(seq) if p.g == g])

    # coefficient vectors: one value per block of g
    first_atom = np.array([b[0] for b in g.blocks()])
    X = np.array([seq[k].u[first_atom] for k in idx])
    chosen = idx[np.sort(_bisect_cluster(X, tol))]

    coeff = np.mean([seq[k].u[first_atom] for k in chosen], axis=0)
    coeff = np.maximum(coeff, 0.0)
    u_star = coeff[g.labels]
    limit = DensityPair(space, g, u_star)
    radius = max(norm2(space, seq[k].u - u_star) for k in chosen)
    env = rho_dev([seq[k] for k in chosen], limit, tests)
    return RhoExtraction([int(k) for k in chosen], limit, float(radius), env)


def random_density(space: FiniteProbSpace, g: Partition, rng: np.random.Generator, K: float | None = None) -> np.ndarray:
    """A random density on ``g``; rescaled toward 1 until ``||u||_2 <= K``."""
    pb = block_probs(space, g)
    c = rng.exponential(size=g.n_blocks)
    c = c / np.dot(pb, c)
    u = c[g.labels]
    if K is not None:
        t = 1.0
        while norm2(space, u) > K:
            t *= 0.5
            u = (1 - t) + t * (c[g.labels])
    return u
