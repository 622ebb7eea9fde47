"""Deviation functionals for every mode of convergence and their hierarchy.

For a sequence ``B_n`` and a candidate limit ``B`` the report holds, per index:

* ``dev_l2varying``  max over unit tests of ``| ||P_n f|| - ||P f|| |``
* ``dev_strong_op``  max over unit tests of ``||(P_n - P) f||``
* ``dev_weak_op``    max over pairs of unit tests of ``|<(P_n - P) f, g>|``
* ``dev_op_norm``    ``||P_n - P||`` in the weighted operator norm
* ``dev_events_l2``  max over events A of ``||(P_n - P) 1_A||``
* ``dev_in_prob``    max over events A of ``P(|P_n 1_A - P 1_A| > eps)``
  (``dev_in_prob_atoms`` restricts A to single atoms)
* ``dev_j1``         max over blocks A of the limit of ``P(|P_n 1_A - 1_A| > eps)``

Events used for ``dev_in_prob`` are the atoms together with the blocks of the
limit (plus any caller-supplied events), so the J1 row is always dominated by the in-probability row.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import FiniteProbSpace, Partition, as_randvec, block_probs, check_partition
from .metric import TestFamily, default_family
from .projection import cond_exp, cond_exp_many, partition_norm_dev

HIER_TOL = 1e-12
COLUMNS = ("index", "dev_l2varying", "dev_strong_op", "dev_weak_op", "dev_op_norm",
           "dev_events_l2", "dev_in_prob_atoms", "dev_in_prob", "dev_j1")


@dataclass(frozen=True)
class ConvergenceReport:
    eps: float
    probe_atoms: tuple[int, ...]
    dev_l2varying: np.ndarray
    dev_strong_op: np.ndarray
    dev_weak_op: np.ndarray
    dev_op_norm: np.ndarray
    dev_events_l2: np.ndarray
    dev_in_prob_atoms: np.ndarray
    dev_in_prob: np.ndarray
    dev_j1: np.ndarray
    pointwise_trace: np.ndarray  # (len(seq), len(probe_atoms))
    tests_contain_atoms: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.dev_op_norm)

    def rows(self) -> list[dict]:
        out = []
        for n in range(len(self)):
            row = {"index": n}
            for c in COLUMNS[1:]:
                row[c] = float(getattr(self, c)[n])
            row["pointwise_trace"] = [float(x) for x in self.pointwise_trace[n]]
            out.append(row)
        return out

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "probe_atoms": list(self.probe_atoms),
            "tests_contain_atoms": self.tests_contain_atoms,
            "rows": self.rows(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ConvergenceReport":
        rows = doc["rows"]
        cols = {c: np.array([r[c] for r in rows], dtype=float) for c in COLUMNS[1:]}
        trace = np.array([r["pointwise_trace"] for r in rows], dtype=float).reshape(len(rows), -1)
        return cls(doc["eps"], tuple(doc["probe_atoms"]), pointwise_trace=trace,
                   tests_contain_atoms=doc["tests_contain_atoms"], **cols)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS + tuple(f"trace_{a}" for a in self.probe_atoms))
        for r in self.rows():
            w.writerow([r["index"]] + ["%.17g" % r[c] for c in COLUMNS[1:]]
                       + ["%.17g" % x for x in r["pointwise_trace"]])
        return buf.getvalue()


def default_probe_atoms(n: int) -> tuple[int, ...]:
    return tuple(sorted({n // 4, n // 2, (3 * n) // 4} & set(range(n))))


def _contains_atoms(space: FiniteProbSpace, tests: TestFamily) -> bool:
    unit = tests.normalized(space).functions
    atoms = np.eye(space.n_atoms) / np.sqrt(space.weights)[:, None]
    return all(np.any(np.all(np.abs(unit - a) <= 1e-12, axis=1)) for a in atoms)


def atom_event_stats(space: FiniteProbSpace, B: Partition, L: Partition, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Per atom ``i``: ``||E[1_i|B] - E[1_i|L]||`` and ``P(|E[1_i|B] - E[1_i|L]| > eps)``.

    The difference takes three values: ``p_i/P(b) - p_i/P(l)`` on ``b & l``,
    ``p_i/P(b)`` on ``b - l`` and ``-p_i/P(l)`` on ``l - b``, where ``b`` and
    ``l`` are the blocks of ``i``; this avoids an n x n array.
    """
    p = space.weights
    lb, ll = B.labels, L.labels
    joint = np.bincount(lb * L.n_blocks + ll, weights=p, minlength=B.n_blocks * L.n_blocks)
    q = joint[lb * L.n_blocks + ll]
    pb, pl = block_probs(space, B)[lb], block_probs(space, L)[ll]
    a1, a2, a3 = p / pb - p / pl, p / pb, p / pl
    m2, m3 = np.maximum(pb - q, 0.0), np.maximum(pl - q, 0.0)
    nrm = np.sqrt(q * a1**2 + m2 * a2**2 + m3 * a3**2)
    hits = q * (np.abs(a1) > eps) + m2 * (a2 > eps) + m3 * (a3 > eps)
    return nrm, hits


def analyze(space: FiniteProbSpace, seq: Sequence[Partition], limit: Partition,
            tests: TestFamily | None = None, eps: float = 0.1,
            probe_atoms: Sequence[int] | None = None, probe_f=None, events=None) -> ConvergenceReport:
    """Per-index deviations of ``seq`` from ``limit`` in every mode.

    ``events`` adds indicator rows (k x n, 0/1) to the in-probability family.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    check_partition(space, limit)
    n = space.n_atoms
    tests = tests or default_family(n)
    unit = tests.normalized(space)
    U = unit.functions
    w = space.weights
    probe_atoms = tuple(default_probe_atoms(n) if probe_atoms is None else probe_atoms)
    for a in probe_atoms:
        if not 0 <= a < n:
            raise ValueError(f"probe atom {a} outside 0..{n - 1}")
    probe_f = as_randvec(space, np.arange(n, dtype=float) if probe_f is None else probe_f)
    events_extra = None
    if events is not None:
        events_extra = np.atleast_2d(np.asarray(events, dtype=float))
        if events_extra.shape[1] != n or not np.all((events_extra == 0) | (events_extra == 1)):
            raise ValueError(f"events: expected 0/1 rows of length {n}")

    # events: atoms (closed form), then the blocks of the limit and extras
    events = limit.indicator_matrix().T
    if events_extra is not None:
        events = np.vstack([events, events_extra])
    PU = cond_exp_many(space, U, limit)
    PE = cond_exp_many(space, events, limit)
    lim_norms = np.sqrt((PU**2) @ w)
    blocks = limit.indicator_matrix().T

    cols = {c: [] for c in COLUMNS[1:]}
    trace = []
    for B in seq:
        check_partition(space, B)
        QU = cond_exp_many(space, U, B)
        D = QU - PU
        cols["dev_l2varying"].append(np.max(np.abs(np.sqrt((QU**2) @ w) - lim_norms)))
        cols["dev_strong_op"].append(np.max(np.sqrt((D**2) @ w)))
        cols["dev_weak_op"].append(np.max(np.abs((D * w) @ U.T)))
        cols["dev_op_norm"].append(partition_norm_dev(space, B, limit))
        a_nrm, a_hits = atom_event_stats(space, B, limit, eps)
        DE = cond_exp_many(space, events, B) - PE
        hits = (np.abs(DE) > eps) @ w
        cols["dev_events_l2"].append(max(np.max(a_nrm), np.max(np.sqrt((DE**2) @ w))))
        cols["dev_in_prob_atoms"].append(np.max(a_hits))
        cols["dev_in_prob"].append(max(np.max(a_hits), np.max(hits)))
        DJ = cond_exp_many(space, blocks, B) - blocks
        cols["dev_j1"].append(np.max((np.abs(DJ) > eps) @ w))
        trace.append(cond_exp(space, probe_f, B)[list(probe_atoms)])

    arrays = {c: np.asarray(v, dtype=float) for c, v in cols.items()}
    return ConvergenceReport(eps, probe_atoms, pointwise_trace=np.asarray(trace, dtype=float).reshape(len(seq), -1),
                             tests_contain_atoms=_contains_atoms(space, tests), **arrays)


def check_hierarchy(report: ConvergenceReport, tol: float = HIER_TOL) -> list[str]:
    """Return the implications of the mode hierarchy violated by ``report``."""
    bad = []
    eps = report.eps
    for n in range(len(report)):
        weak, strong, op = report.dev_weak_op[n], report.dev_strong_op[n], report.dev_op_norm[n]
        if weak > strong + tol:
            bad.append(f"index {n}: weak operator <= strong operator")
        if strong > op + tol:
            bad.append(f"index {n}: strong operator <= operator norm")
        if report.dev_l2varying[n] > strong + tol:
            bad.append(f"index {n}: L2-varying <= strong operator")
        if report.dev_events_l2[n] > op + tol:
            bad.append(f"index {n}: event deviation <= operator norm")
        if report.dev_in_prob[n] > (report.dev_events_l2[n] / eps) ** 2 + tol:
            bad.append(f"index {n}: in probability <= Chebyshev bound")
        if report.tests_contain_atoms and report.dev_in_prob_atoms[n] > (strong / eps) ** 2 + tol:
            bad.append(f"index {n}: in probability <= (strong operator / eps)^2")
        if report.dev_j1[n] > report.dev_in_prob[n] + tol:
            bad.append(f"index {n}: J1 <= in probability")
    return bad


def corrupt(report: ConvergenceReport, **changes) -> ConvergenceReport:
    """Copy of ``report`` with some columns replaced (negative controls)."""
    return replace(report, **{k: np.asarray(v, dtype=float) for k, v in changes.items()})


@dataclass(frozen=True)
class BorelCantelliResult:
    terms: np.ndarray
    sum: float
    summable_at_horizon: bool


def borel_cantelli_check(space: FiniteProbSpace, seq: Sequence[Partition], limit: Partition, f,
                         eps_seq) -> BorelCantelliResult:
    """Partial sum of ``P(|E[f|B_n] - E[f|B]| > eps_n)``.

    ``summable_at_horizon`` is a finite-horizon heuristic: every term in the
    last quarter of the horizon is below 1e-6.
    """
    eps_seq = np.asarray(eps_seq, dtype=float)
    if eps_seq.shape != (len(seq),):
        raise ValueError(f"eps_seq has length {eps_seq.size}, sequence has length {len(seq)}")
    if np.any(eps_seq <= 0) or np.any(np.diff(eps_seq) > 0):
        raise ValueError("eps_seq must be positive and nonincreasing")
    f = as_randvec(space, f)
    ref = cond_exp(space, f, limit)
    terms = np.array([
        float(np.dot(space.weights, np.abs(cond_exp(space, f, B) - ref) > e))
        for B, e in zip(seq, eps_seq)
    ])
    quarter = terms[len(terms) - max(1, len(terms) // 4):]
    return BorelCantelliResult(terms, float(terms.sum()), bool(np.all(quarter < 1e-6)))
