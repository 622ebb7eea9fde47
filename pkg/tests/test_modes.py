import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sigma_lab.core import FiniteProbSpace, Partition, random_partition, random_space
from sigma_lab.dyadic import DyadicSpace, g0, partition_In, sequence
from sigma_lab.metric import TestFamily
from sigma_lab.modes import (COLUMNS, ConvergenceReport, analyze, atom_event_stats, borel_cantelli_check,
                             check_hierarchy, corrupt)

import oracle


def random_seq(rng, n, length):
    return [random_partition(n, rng) for _ in range(length)]


def test_constant_sequence_all_zero(rng):
    s = random_space(6, rng)
    B = random_partition(6, rng)
    rep = analyze(s, [B] * 4, B)
    for c in COLUMNS[1:]:
        assert np.all(getattr(rep, c) == 0), c


def test_two_atom_example():
    u2 = FiniteProbSpace.uniform(2)
    rep = analyze(u2, [Partition.discrete(2)], Partition.trivial(2), TestFamily.custom([[1, -1]]))
    assert rep.dev_op_norm[0] == pytest.approx(1, abs=1e-12)
    assert rep.dev_l2varying[0] == pytest.approx(1, abs=1e-12)


def test_atom_event_stats_match_dense(rng):
    for _ in range(40):
        n = int(rng.integers(1, 9))
        s = random_space(n, rng)
        B, L = random_partition(n, rng), random_partition(n, rng)
        eps = float(rng.uniform(0.01, 0.5))
        nrm, hits = atom_event_stats(s, B, L, eps)
        p = list(s.weights)
        for i in range(n):
            e = [1.0 if k == i else 0.0 for k in range(n)]
            d = np.subtract(oracle.cond_exp(p, e, B.block_of), oracle.cond_exp(p, e, L.block_of))
            assert nrm[i] == pytest.approx(oracle.norm(p, d), abs=1e-12)
            assert hits[i] == pytest.approx(sum(pk for pk, x in zip(p, d) if abs(x) > eps), abs=1e-12)


def test_pointwise_trace(rng):
    s = random_space(8, rng)
    seq = random_seq(rng, 8, 3)
    f = rng.normal(size=8)
    rep = analyze(s, seq, Partition.trivial(8), probe_atoms=[0, 5], probe_f=f)
    for k, B in enumerate(seq):
        ref = oracle.cond_exp(list(s.weights), list(f), B.block_of)
        np.testing.assert_allclose(rep.pointwise_trace[k], [ref[0], ref[5]], rtol=1e-12, atol=1e-12)


def test_dyadic_in_probability_interval_events():
    K = 8
    ds = DyadicSpace(K)
    for n in (16, 21, 40, 77, 130, 255):
        m = n.bit_length() - 1
        a, b = ds.atoms_of(n)
        ind = np.zeros(2**K)
        ind[a:b] = 1
        rep = analyze(ds.space, [partition_In(n, ds)], Partition.trivial(2**K), TestFamily.atoms(2**K),
                      eps=0.1, events=[ind])
        assert rep.dev_in_prob[0] == pytest.approx(2.0**-m, abs=1e-15)


@given(st.integers(1, 10), st.integers(1, 12), st.floats(0.01, 0.9), st.integers(0, 2**32 - 1))
def test_hierarchy_holds(n, length, eps, seed):
    rng = np.random.default_rng(seed)
    s = random_space(n, rng)
    fam = TestFamily.atoms(n) if seed % 2 else TestFamily.atoms_pairs(n)
    rep = analyze(s, random_seq(rng, n, length), random_partition(n, rng), fam, eps=eps)
    assert check_hierarchy(rep) == []


def test_j1_against_trivial_is_zero(rng):
    s = random_space(7, rng)
    rep = analyze(s, random_seq(rng, 7, 10), Partition.trivial(7), eps=0.05)
    assert np.all(rep.dev_j1 == 0)


def test_corrupted_reports_are_flagged(rng):
    s = random_space(6, rng)
    rep = analyze(s, random_seq(rng, 6, 5), random_partition(6, rng), eps=0.1)
    bad = corrupt(rep, dev_strong_op=rep.dev_weak_op - 0.5)
    assert any("weak operator <= strong operator" in m for m in check_hierarchy(bad))
    bad = corrupt(rep, dev_op_norm=np.zeros(len(rep)) - 1)
    assert any("strong operator <= operator norm" in m for m in check_hierarchy(bad))
    bad = corrupt(rep, dev_j1=np.full(len(rep), 2.0))
    assert any("J1" in m for m in check_hierarchy(bad))


def test_dyadic_hierarchy_k12():
    ds = DyadicSpace(12)
    x = np.arange(4096)
    fam = TestFamily.custom([g0(ds), x < 2048, x < 1024])
    rep = analyze(ds.space, sequence(ds, range(1, 513)), Partition.trivial(4096), fam)
    assert check_hierarchy(rep) == []


def test_analyze_validation(rng):
    s = random_space(4, rng)
    with pytest.raises(ValueError):
        analyze(s, [Partition.trivial(4)], Partition.trivial(4), eps=0)
    with pytest.raises(ValueError):
        analyze(s, [Partition.trivial(4)], Partition.trivial(4), probe_atoms=[9])
    with pytest.raises(ValueError):
        analyze(s, [Partition.trivial(4)], Partition.trivial(4), events=[[0.5, 0, 0, 0]])


def test_report_round_trips(rng):
    s = random_space(5, rng)
    rep = analyze(s, random_seq(rng, 5, 4), random_partition(5, rng))
    back = ConvergenceReport.from_json(json.loads(json.dumps(rep.to_json())))
    assert back.to_json() == rep.to_json()
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",")[:len(COLUMNS)] == list(COLUMNS)
    assert len(lines) == 5
    assert float(lines[1].split(",")[4]) == rep.dev_op_norm[0]


def test_borel_cantelli_constant(rng):
    s = random_space(5, rng)
    B = random_partition(5, rng)
    r = borel_cantelli_check(s, [B] * 8, B, rng.normal(size=5), np.full(8, 0.1))
    assert r.sum == 0 and r.summable_at_horizon


def test_borel_cantelli_alternating():
    u4 = FiniteProbSpace.uniform(4)
    A, B = Partition((0, 0, 1, 1)), Partition((0, 1, 0, 1))
    r = borel_cantelli_check(u4, [A, B] * 10, A, [0, 1, 2, 3], np.full(20, 0.01))
    assert not r.summable_at_horizon and r.sum >= 10


def test_borel_cantelli_dyadic():
    ds = DyadicSpace(8)
    ns = np.arange(1, 256)
    seq = sequence(ds, ns)
    r = borel_cantelli_check(ds.space, seq, Partition.trivial(256), g0(ds), ns ** -0.25)
    rates = 2.0 ** -np.floor(np.log2(ns))
    assert np.all(r.terms <= rates + 1e-15)
    assert r.sum <= rates.sum()
    # every level contributes a full unit of 2^-m mass, so nothing is summable
    assert not r.summable_at_horizon


def test_borel_cantelli_validation(rng):
    s = random_space(3, rng)
    B = Partition.trivial(3)
    with pytest.raises(ValueError):
        borel_cantelli_check(s, [B, B], B, [1, 2, 3], [0.1])
    with pytest.raises(ValueError):
        borel_cantelli_check(s, [B, B], B, [1, 2, 3], [0.1, 0.2])
