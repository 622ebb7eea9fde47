import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sigma_lab.core import FiniteProbSpace, Partition, norm2, random_partition, random_space
from sigma_lab.density import DensityPair, extract_rho_convergent, random_density, rho_dev, rho_value
from sigma_lab.dyadic import DyadicSpace, claim1_trace, g0, sequence
from sigma_lab.metric import TestFamily
from sigma_lab.projection import cond_exp

U2 = FiniteProbSpace.uniform(2)
D2 = Partition.discrete(2)


def test_pair_validation():
    with pytest.raises(ValueError, match="negative"):
        DensityPair(U2, D2, [3, -1])
    with pytest.raises(ValueError, match="integrates"):
        DensityPair(U2, D2, [1, 2])
    with pytest.raises(ValueError, match="measurable"):
        DensityPair(U2, Partition.trivial(2), [2, 0])
    DensityPair(U2, D2, [2, 0])


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_rho_with_unit_density_is_norm(n, seed):
    rng = np.random.default_rng(seed)
    s = random_space(n, rng)
    g = random_partition(n, rng)
    f = rng.normal(size=n)
    assert rho_value(DensityPair.reference(s, g), f) == norm2(s, cond_exp(s, f, g))


def test_rho_examples(rng):
    s = random_space(5, rng)
    f = rng.normal(size=5)
    T = Partition.trivial(5)
    assert rho_value(DensityPair(s, T, np.ones(5)), f) == pytest.approx(abs(np.dot(s.weights, f)), rel=1e-12)
    assert rho_value(DensityPair(U2, D2, [2, 0]), [1, 3]) == 1


def test_rho_dev_constant(rng):
    s = random_space(4, rng)
    g = random_partition(4, rng)
    pair = DensityPair(s, g, random_density(s, g, rng))
    assert np.all(rho_dev([pair] * 3, pair) == 0)


def test_rho_dev_fixed_partition_bound(rng):
    s = random_space(6, rng)
    g = random_partition(6, rng)
    fam = TestFamily.atoms_pairs(6)
    u = random_density(s, g, rng)
    limit = DensityPair(s, g, u)
    for k in range(1, 8):
        t = 2.0**-k
        v = random_density(s, g, rng)
        pair = DensityPair(s, g, (1 - t) * u + t * v)
        l1 = float(np.dot(s.weights, np.abs(pair.u - u)))
        for f in fam.functions:
            e2 = cond_exp(s, f, g) ** 2
            assert abs(rho_value(pair, f) ** 2 - rho_value(limit, f) ** 2) <= e2.max() * l1 + 1e-15
        assert rho_dev([pair], limit, fam)[0] <= math.sqrt(l1 * 4)  # sup ||E[f|g]^2||_inf <= 4 for pair tests


def test_rho_dev_dyadic():
    ds = DyadicSpace(6)
    ns = range(1, 64)
    seq = [DensityPair.reference(ds.space, B) for B in sequence(ds, ns)]
    limit = DensityPair.reference(ds.space, Partition.trivial(64))
    dev = rho_dev(seq, limit, TestFamily.custom([g0(ds)]))
    exact = [math.sqrt(1 + r.delta) - 1 for r in claim1_trace(ds, ns)]
    np.testing.assert_allclose(dev, exact, atol=1e-14)


def test_extract_constant(rng):
    s = random_space(4, rng)
    g = random_partition(4, rng)
    pair = DensityPair(s, g, random_density(s, g, rng))
    r = extract_rho_convergent([pair] * 4, K=10)
    assert r.indices == [0, 1, 2, 3]
    np.testing.assert_allclose(r.limit.u, pair.u, rtol=1e-14)
    assert r.limit.g == g and r.cluster_radius <= 1e-14


def test_extract_alternating():
    seq = [DensityPair(U2, D2, [2, 0] if k % 2 == 0 else [0, 2]) for k in range(7)]
    r = extract_rho_convergent(seq, K=2)
    assert r.indices == [0, 2, 4, 6]
    np.testing.assert_array_equal(r.limit.u, [2, 0])


def test_extract_converging():
    seq = [DensityPair(U2, D2, [1 + 1 / k, 1 - 1 / k]) for k in range(1, 201)]
    r = extract_rho_convergent(seq, K=2)
    assert np.max(np.abs(r.limit.u - 1)) <= 1 / 200 + 1e-12
    assert abs(np.dot(U2.weights, r.limit.u) - 1) <= 1e-12 and np.all(r.limit.u >= -1e-12)


def test_extract_norm_bound_error():
    seq = [DensityPair(U2, D2, [1, 1]), DensityPair(U2, D2, [2, 0])]
    with pytest.raises(ValueError, match="index 1"):
        extract_rho_convergent(seq, K=1.2)
    with pytest.raises(ValueError):
        extract_rho_convergent([], K=1)


def test_pigeonhole_partition():
    A, B = Partition((0, 0, 1)), Partition((0, 1, 1))
    s = FiniteProbSpace.uniform(3)
    seq = [DensityPair.reference(s, A), DensityPair.reference(s, B), DensityPair.reference(s, B)]
    r = extract_rho_convergent(seq, K=2)
    assert r.limit.g == B and r.indices == [1, 2]


def test_weak_star_along_extracted(rng):
    s = random_space(6, rng)
    g = random_partition(6, rng, max_blocks=3)
    center = random_density(s, g, rng)
    seq = []
    for k in range(40):
        v = random_density(s, g, rng)
        t = 4.0**-k
        seq.append(DensityPair(s, g, (1 - t) * center + t * v))
    r = extract_rho_convergent(seq, K=10)
    F = rng.normal(size=(5, 6))
    for k in r.indices:
        assert np.max(np.abs(F @ (s.weights * (seq[k].u - r.limit.u)))) <= 1e-8


def test_random_density_norm_cap(rng):
    s = random_space(8, rng)
    g = random_partition(8, rng)
    for _ in range(20):
        u = random_density(s, g, rng, K=1.5)
        assert norm2(s, u) <= 1.5
        DensityPair(s, g, u)


def test_pair_json(rng):
    s = random_space(4, rng)
    g = random_partition(4, rng)
    p = DensityPair(s, g, random_density(s, g, rng))
    back = DensityPair.from_json(s, json.loads(json.dumps(p.to_json())))
    assert back.g == p.g and np.array_equal(back.u, p.u)
