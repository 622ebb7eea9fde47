"""The dyadic typewriter sequence on ``[0, 1]``, discretized at resolution K.

Atom ``i`` stands for ``[i 2^-K, (i+1) 2^-K]``.  For ``n >= 1`` with
``m = floor(log2 n)`` and ``k = n - 2^m``, ``B_n`` is generated by the single
interval ``I(k, m) = [k 2^-m, (k+1) 2^-m]``.  ``B_n`` converges to the trivial
partition in the L2-varying sense, yet ``E[g0|B_n]`` with ``g0(w) = 2w`` fails
to converge at every point, because each level sweeps the whole interval.

``g0`` is discretized at atom midpoints, which makes every dyadic block mean
of ``g0`` equal to the continuum value, so all quantities below are exact.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .core import FiniteProbSpace, Partition


def level(n: int) -> int:
    """``floor(log2 n)`` for ``n >= 1``."""
    n = operator.index(n)
    if n < 1:
        raise ValueError("n must be a positive integer")
    return n.bit_length() - 1


def interval(n: int) -> tuple[int, int]:
    """``(k, m)`` with ``I^(n) = I(k, m)``."""
    m = level(n)
    return n - (1 << m), m


@dataclass(frozen=True)
class DyadicSpace:
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")

    @property
    def n_atoms(self) -> int:
        return 1 << self.K

    @property
    def weight(self) -> Fraction:
        return Fraction(1, self.n_atoms)

    @property
    def space(self) -> FiniteProbSpace:
        return FiniteProbSpace.uniform(self.n_atoms)

    def max_n(self) -> int:
        """Largest ``n`` whose interval is resolved, that is ``2^(K+1) - 1``."""
        return (1 << (self.K + 1)) - 1

    def default_range(self) -> range:
        return range(1, self.n_atoms)

    def atom_of(self, omega: float) -> int:
        if not 0 <= omega <= 1:
            raise ValueError(f"omega = {omega} outside [0, 1]")
        return min(int(omega * self.n_atoms), self.n_atoms - 1)

    def atoms_of(self, n: int) -> tuple[int, int]:
        """Half-open atom range ``[a, b)`` covered by ``I^(n)``."""
        k, m = interval(n)
        if m > self.K:
            raise ValueError(f"n = {n} needs resolution K >= {m}, have K = {self.K}")
        width = 1 << (self.K - m)
        return k * width, (k + 1) * width


def check_range(space: DyadicSpace, n_range: Iterable[int]) -> list[int]:
    ns = [operator.index(n) for n in n_range]
    if not ns:
        raise ValueError("n_range is empty")
    if any(b - a != 1 for a, b in zip(ns, ns[1:])):
        raise ValueError("n_range must be contiguous")
    for n in (ns[0], ns[-1]):
        space.atoms_of(n)
    return ns


def partition_In(n: int, space: DyadicSpace) -> Partition:
    """Blocks ``I^(n)`` and its complement (trivial for ``n = 1``)."""
    a, b = space.atoms_of(n)
    labels = [1] * space.n_atoms
    for i in range(a, b):
        labels[i] = 0
    return Partition(tuple(labels))


def sequence(space: DyadicSpace, n_range: Iterable[int] | None = None) -> list[Partition]:
    ns = check_range(space, space.default_range() if n_range is None else n_range)
    return [partition_In(n, space) for n in ns]


def g0_exact(space: DyadicSpace) -> list[Fraction]:
    N = space.n_atoms
    return [Fraction(2 * i + 1, N) for i in range(N)]


def g0(space: DyadicSpace) -> np.ndarray:
    """Midpoint values ``(2i + 1) 2^-K``; exactly representable for K <= 52."""
    return (2 * np.arange(space.n_atoms) + 1) / space.n_atoms


def _g0_mass(space: DyadicSpace, a: int, b: int) -> Fraction:
    """``E[g0 1_[a,b)] = sum (2i+1)/N * 1/N = (b^2 - a^2) / N^2``."""
    N = space.n_atoms
    return Fraction(b * b - a * a, N * N)


def block_mean_g0(space: DyadicSpace, k: int, m: int) -> Fraction:
    """Mean of ``g0`` over ``I(k, m)``; equals ``(2k + 1) / 2^m``."""
    w = 1 << (space.K - m)
    return _g0_mass(space, k * w, (k + 1) * w) / Fraction(w, space.n_atoms)


@dataclass(frozen=True)
class Claim1Row:
    n: int
    m: int
    p_interval: Fraction
    norm_sq: Fraction
    delta: Fraction

    def to_dict(self) -> dict:
        return {
            "n": self.n, "m": self.m,
            "P_I": str(self.p_interval), "P_I_float": float(self.p_interval),
            "norm_sq": str(self.norm_sq), "norm_sq_float": float(self.norm_sq),
            "delta": str(self.delta), "delta_float": float(self.delta),
        }


def _as_fractions(f) -> list[Fraction]:
    return [x if isinstance(x, Fraction) else Fraction(float(x)) for x in f]


def claim1_trace(space: DyadicSpace, n_range: Iterable[int] | None = None, f=None) -> list[Claim1Row]:
    """Exact ``| ||E[f|B_n]||^2 - E[f]^2 |`` for every ``n`` in the range.

    ``f`` defaults to ``g0``; float inputs are converted to their exact
    binary rationals.
    """
    ns = check_range(space, space.default_range() if n_range is None else n_range)
    N = space.n_atoms
    vals = g0_exact(space) if f is None else _as_fractions(f)
    if len(vals) != N:
        raise ValueError(f"f has {len(vals)} entries, space has {N} atoms")
    # prefix[i] = sum_{j < i} f_j, so E[f 1_[a,b)] = (prefix[b] - prefix[a]) / N
    prefix = [Fraction(0)]
    for x in vals:
        prefix.append(prefix[-1] + x)
    mean = prefix[N] / N
    rows = []
    for n in ns:
        a, b = space.atoms_of(n)
        p = Fraction(b - a, N)
        inside = (prefix[b] - prefix[a]) / N
        if p == 1:
            nsq = inside * inside
        else:
            outside = mean - inside
            nsq = inside * inside / p + outside * outside / (1 - p)
        rows.append(Claim1Row(n, level(n), p, nsq, abs(nsq - mean * mean)))
    return rows


def claim1_envelope(rows: Sequence[Claim1Row]) -> dict[int, Fraction]:
    """``max Delta(n)`` over each level ``m`` present."""
    env: dict[int, Fraction] = {}
    for r in rows:
        if r.m not in env or r.delta > env[r.m]:
            env[r.m] = r.delta
    return env


def envelope_constant(env: dict[int, Fraction]) -> Fraction:
    """Smallest ``C`` with ``max_m Delta <= C 2^-m`` on the levels given."""
    return max((d * (1 << m) for m, d in env.items()), default=Fraction(0))


@dataclass(frozen=True)
class Claim2Probe:
    atom: int
    omega: float
    x: Fraction                      # g0 at the atom
    ns: tuple[int, ...]
    trace: tuple[Fraction, ...]      # E[g0|B_n] at the atom
    covered: tuple[bool, ...]        # atom inside I^(n)
    horizon_limsup: Fraction         # max |trace - 1| over the last full level
    horizon_liminf: Fraction         # min |trace - 1| over the last full level
    powers: tuple[tuple[int, Fraction], ...]       # (n, trace) along n = 2^m
    powers_plus_one: tuple[tuple[int, Fraction], ...]  # along n = 2^m + 1

    def tail_dev(self, which: str = "powers", last: int = 5) -> Fraction:
        """``max |trace - 1|`` over the last ``last`` subsequence values."""
        seq = self.powers if which == "powers" else self.powers_plus_one
        return max(abs(t - 1) for _, t in seq[-last:])

    def subsequence_ok(self, which: str = "powers", last: int = 5) -> bool:
        """Each of the last values lies within ``2^(1-m)`` of 1."""
        seq = self.powers if which == "powers" else self.powers_plus_one
        return all(abs(t - 1) <= Fraction(2, 1 << level(n)) for n, t in seq[-last:])

    def to_dict(self) -> dict:
        return {
            "atom": self.atom, "omega": self.omega, "x": str(self.x),
            "horizon_limsup": str(self.horizon_limsup), "horizon_limsup_float": float(self.horizon_limsup),
            "horizon_liminf": str(self.horizon_liminf), "horizon_liminf_float": float(self.horizon_liminf),
            "powers": [[n, str(t)] for n, t in self.powers],
            "powers_plus_one": [[n, str(t)] for n, t in self.powers_plus_one],
            "powers_tail_dev": str(self.tail_dev("powers")),
            "powers_ok": self.subsequence_ok("powers"),
            "powers_plus_one_tail_dev": str(self.tail_dev("plus_one")),
            "powers_plus_one_ok": self.subsequence_ok("plus_one"),
        }


def trace_value(space: DyadicSpace, n: int, atom: int) -> tuple[Fraction, bool]:
    """``E[g0|B_n]`` at ``atom`` and whether the atom lies in ``I^(n)``."""
    a, b = space.atoms_of(n)
    N = space.n_atoms
    p = Fraction(b - a, N)
    inside = _g0_mass(space, a, b)
    if a <= atom < b:
        return inside / p, True
    return (1 - inside) / (1 - p), False


def claim2_trace(space: DyadicSpace, n_range: Iterable[int] | None = None,
                 probe_atoms: Sequence[int] = (), omegas: Sequence[float] | None = None) -> list[Claim2Probe]:
    """Pointwise traces of ``E[g0|B_n]`` with finite-horizon estimates.

    The horizon limsup/liminf are taken over the last level that the range
    covers completely (one full sweep of the typewriter).
    """
    ns = check_range(space, space.default_range() if n_range is None else n_range)
    atoms = list(probe_atoms)
    om = [None] * len(atoms)
    if omegas is not None:
        atoms += [space.atom_of(w) for w in omegas]
        om += list(omegas)
    for a in atoms:
        if not 0 <= a < space.n_atoms:
            raise ValueError(f"probe atom {a} outside 0..{space.n_atoms - 1}")
    have = set(ns)
    full = [m for m in sorted({level(n) for n in ns}) if all(n in have for n in range(1 << m, 1 << (m + 1)))]
    last = full[-1] if full else level(ns[-1])
    out = []
    for atom, w in zip(atoms, om):
        vals, cov = zip(*(trace_value(space, n, atom) for n in ns))
        sweep = [abs(v - 1) for n, v in zip(ns, vals) if level(n) == last]
        pows = tuple((n, v) for n, v in zip(ns, vals) if n & (n - 1) == 0)
        pows1 = tuple((n, v) for n, v in zip(ns, vals) if n > 2 and (n - 1) & (n - 2) == 0)
        x = Fraction(2 * atom + 1, space.n_atoms)
        out.append(Claim2Probe(atom, float(x) / 2 if w is None else float(w), x, tuple(ns), vals, cov,
                               max(sweep), min(sweep), pows, pows1))
    return out


def covering_index(space: DyadicSpace, atom: int, m: int) -> int:
    """The unique ``n`` at level ``m`` with ``atom`` inside ``I^(n)``."""
    if not 0 <= m <= space.K:
        raise ValueError(f"level {m} outside 0..{space.K}")
    return (1 << m) + (atom >> (space.K - m))
