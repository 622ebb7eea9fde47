"""Join, meet and independence of partitions, plus the continuity experiment."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import FiniteProbSpace, Partition, _check_same_size, block_probs, canonical_labels, check_partition
from .metric import TestFamily, d_kappa, default_family, theta
from .projection import cond_exp_many


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, x, y):
        x, y = self.find(x), self.find(y)
        if x == y:
            return
        if self.rank[x] < self.rank[y]:
            x, y = y, x
        elif self.rank[x] == self.rank[y]:
            self.rank[x] += 1
        self.parent[y] = x


def join(A: Partition, B: Partition) -> Partition:
    """Common refinement: atoms share a block iff they do in both inputs."""
    _check_same_size(A, B)
    return Partition(canonical_labels(zip(A.block_of, B.block_of)))


def meet(A: Partition, B: Partition) -> Partition:
    """Finest common coarsening, as components of the block-overlap graph."""
    _check_same_size(A, B)
    # nodes 0..nA-1 are blocks of A, nA.. are blocks of B
    uf = UnionFind(A.n_blocks + B.n_blocks)
    for a, b in zip(A.block_of, B.block_of):
        uf.union(a, A.n_blocks + b)
    return Partition(tuple(uf.find(a) for a in A.block_of))


def joint_probs(space: FiniteProbSpace, A: Partition, B: Partition) -> np.ndarray:
    check_partition(space, A)
    check_partition(space, B)
    p = np.zeros((A.n_blocks, B.n_blocks))
    np.add.at(p, (A.labels, B.labels), space.weights)
    return p


def independent(space: FiniteProbSpace, A: Partition, B: Partition, tol: float = 1e-12) -> bool:
    p = joint_probs(space, A, B)
    prod = np.outer(block_probs(space, A), block_probs(space, B))
    return bool(np.max(np.abs(p - prod)) <= tol)


def commute(space: FiniteProbSpace, A: Partition, B: Partition, tol: float = 1e-10) -> bool:
    """Whether ``E[.|A]`` and ``E[.|B]`` commute."""
    eye = np.eye(space.n_atoms)
    ab = cond_exp_many(space, cond_exp_many(space, eye, B), A)
    ba = cond_exp_many(space, cond_exp_many(space, eye, A), B)
    return bool(np.max(np.abs(ab - ba)) <= tol)


@dataclass
class ContinuityReport:
    join_dkappa: list[float] = field(default_factory=list)
    meet_dkappa: list[float] = field(default_factory=list)
    meet_bound: list[float] = field(default_factory=list)
    violations: list[int] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "join_dkappa": self.join_dkappa,
            "meet_dkappa": self.meet_dkappa,
            "meet_bound": self.meet_bound,
            "violations": self.violations,
        }


def lattice_continuity_experiment(space: FiniteProbSpace, seqA: Sequence[Partition], seqB: Sequence[Partition],
                                  limA: Partition, limB: Partition,
                                  tests: TestFamily | None = None) -> ContinuityReport:
    """Trace ``d_kappa`` of joins and meets against the limit join and meet.

    The meet trace is compared with the estimate
    ``sum_j 2^-j theta(||(P_An - P_A) P_Bvee f_j|| + ||(P_Bn - P_B) P_A f_j||)``,
    where ``Bvee`` is the join of every ``B_n``; indices exceeding it are listed
    in ``violations``.
    """
    if len(seqA) != len(seqB):
        raise ValueError(f"sequences have lengths {len(seqA)} and {len(seqB)}")
    tests = tests or default_family(space.n_atoms)
    F = tests.functions
    w = space.weights
    j_lim = join(limA, limB)
    m_lim = meet(limA, limB)
    b_vee = seqB[0] if seqB else limB
    for B in seqB[1:]:
        b_vee = join(b_vee, B)
    f_c = cond_exp_many(space, F, b_vee)
    f_b = cond_exp_many(space, F, limA)
    report = ContinuityReport()
    for n, (A_n, B_n) in enumerate(zip(seqA, seqB)):
        report.join_dkappa.append(d_kappa(space, join(A_n, B_n), j_lim, tests))
        report.meet_dkappa.append(d_kappa(space, meet(A_n, B_n), m_lim, tests))
        d1 = cond_exp_many(space, f_c, A_n) - cond_exp_many(space, f_c, limA)
        d2 = cond_exp_many(space, f_b, B_n) - cond_exp_many(space, f_b, limB)
        est = np.sqrt((d1**2) @ w) + np.sqrt((d2**2) @ w)
        bound = float(sum(wt * theta(e) for wt, e in zip(tests.weights, est)))
        report.meet_bound.append(bound)
        if report.meet_dkappa[-1] > bound + 1e-12:
            report.violations.append(n)
    return report
