"""A finite information-design game and its equilibrium.

The decision maker (DM) knows ``dm_info`` and receives an extra partition ``H``
drawn from a transfer ``nu`` over a finite support.  Her mixed strategy for
``H`` is one point of the action simplex per block of ``join(dm_info, H)``,
which makes the measurability constraint structural.  The shared payoff is

    f(s, nu) = sum_H nu(H) E[ sum_i v(s_i) + sum_i s_i c_i ]

where ``c`` is an optional state utility (n_atoms x N).  Without it the payoff
does not depend on the state at all and every transfer is worth the same.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import FiniteProbSpace, Partition, block_probs, check_partition
from .lattice import join

KKT_TOL = 1e-8
GAP_TOL = 1e-8
TIE_TOL = 1e-12


@dataclass(frozen=True)
class Utility:
    """Concave increasing Bernoulli index: ``x**alpha`` or ``log1p``."""

    kind: str = "power"
    alpha: float = 0.5

    def __post_init__(self):
        if self.kind not in ("power", "log1p"):
            raise ValueError(f"v.kind: unknown utility {self.kind!r}")
        if self.kind == "power" and not (0 < self.alpha <= 1):
            raise ValueError("v.alpha: must lie in (0, 1] for a concave increasing index")

    @property
    def linear(self) -> bool:
        return self.kind == "power" and self.alpha == 1

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "log1p":
            return np.log1p(x)
        return np.power(np.maximum(x, 0.0), self.alpha)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "log1p":
            return 1.0 / (1.0 + x)
        if self.linear:
            return np.ones_like(x)
        with np.errstate(divide="ignore"):
            return self.alpha * np.power(x, self.alpha - 1)

    def grad_inverse(self, y):
        """Smallest ``x >= 0`` with ``grad(x) <= y`` (for strictly concave kinds)."""
        y = np.asarray(y, dtype=float)
        if self.kind == "log1p":
            return np.maximum(1.0 / y - 1.0, 0.0)
        return np.power(y / self.alpha, 1.0 / (self.alpha - 1))

    def to_json(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha}

    @classmethod
    def from_json(cls, doc: dict) -> "Utility":
        return cls(doc.get("kind", "power"), float(doc.get("alpha", 0.5)))


@dataclass(frozen=True, eq=False)
class InfoDesignInstance:
    space: FiniteProbSpace
    dm_info: Partition
    support: tuple[Partition, ...]
    n_actions: int
    v: Utility = field(default_factory=Utility)
    state_utility: np.ndarray | None = None

    def __post_init__(self):
        check_partition(self.space, self.dm_info)
        support = tuple(self.support)
        if not support:
            raise ValueError("support: must be nonempty")
        for H in support:
            check_partition(self.space, H)
        if self.dm_info not in support:
            raise ValueError("support: must contain dm_info")
        object.__setattr__(self, "support", support)
        if int(self.n_actions) < 1:
            raise ValueError("n_actions: need at least one action")
        if self.state_utility is not None:
            c = np.array(self.state_utility, dtype=float)
            if c.shape != (self.space.n_atoms, self.n_actions):
                raise ValueError(f"state_utility: expected shape {(self.space.n_atoms, self.n_actions)}, got {c.shape}")
            c.setflags(write=False)
            object.__setattr__(self, "state_utility", c)

    def cells(self, h: int) -> Partition:
        """The DM's information ``join(dm_info, H)`` for the h-th support element."""
        return join(self.dm_info, self.support[h])

    def block_utility(self, h: int) -> np.ndarray:
        """Block averages of the state utility over ``cells(h)`` (B x N)."""
        cells = self.cells(h)
        if self.state_utility is None:
            return np.zeros((cells.n_blocks, self.n_actions))
        w = self.space.weights
        sums = cells.indicator_matrix().T @ (w[:, None] * self.state_utility)
        return sums / block_probs(self.space, cells)[:, None]

    def index_of(self, H: Partition) -> int:
        for h, G in enumerate(self.support):
            if G == H:
                return h
        raise ValueError("H: not in the support")

    def to_json(self) -> dict:
        return {
            "weights": self.space.weights.tolist(),
            "dm_info": self.dm_info.to_json(),
            "support": [H.to_json() for H in self.support],
            "n_actions": self.n_actions,
            "v": self.v.to_json(),
            "state_utility": None if self.state_utility is None else self.state_utility.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "InfoDesignInstance":
        return cls(
            FiniteProbSpace(doc["weights"]),
            Partition.from_json(doc["dm_info"]),
            tuple(Partition.from_json(d) for d in doc["support"]),
            int(doc["n_actions"]),
            Utility.from_json(doc.get("v", {})),
            doc.get("state_utility"),
        )


def _check_simplex(x: np.ndarray, what: str) -> None:
    if np.any(x < -1e-12) or np.any(np.abs(x.sum(axis=-1) - 1) > 1e-12):
        raise ValueError(f"{what}: not a point of the simplex")


@dataclass(frozen=True, eq=False)
class StrategyProfile:
    """``mixed[h]`` is a (blocks of cells(h)) x N array of simplex rows."""

    mixed: tuple[np.ndarray, ...]

    def __post_init__(self):
        arrs = []
        for h, m in enumerate(self.mixed):
            m = np.array(m, dtype=float)
            _check_simplex(m, f"strategy for support element {h}")
            m.setflags(write=False)
            arrs.append(m)
        object.__setattr__(self, "mixed", tuple(arrs))

    def to_json(self) -> list:
        return [m.tolist() for m in self.mixed]


@dataclass(frozen=True, eq=False)
class Transfer:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        _check_simplex(w, "transfer")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, size: int, h: int) -> "Transfer":
        w = np.zeros(size)
        w[h] = 1.0
        return cls(w)


def _check_shapes(inst: InfoDesignInstance, s: StrategyProfile, nu: Transfer) -> None:
    if len(s.mixed) != len(inst.support) or nu.weights.shape != (len(inst.support),):
        raise ValueError("strategy/transfer do not match the support size")
    for h, m in enumerate(s.mixed):
        if m.shape != (inst.cells(h).n_blocks, inst.n_actions):
            raise ValueError(f"strategy for support element {h} has shape {m.shape}")


def value_under(inst: InfoDesignInstance, h: int, mixed: np.ndarray) -> float:
    """``E[sum_i v(s_i) + s . c]`` when the DM holds ``cells(h)``.

    Summed atom by atom with ``math.fsum`` so that equal blockwise values give
    bit-identical totals whatever the partition.
    """
    cells = inst.cells(h)
    per_block = inst.v(mixed).sum(axis=1) + np.sum(mixed * inst.block_utility(h), axis=1)
    return math.fsum(inst.space.weights * per_block[cells.labels])


def payoff(inst: InfoDesignInstance, s: StrategyProfile, nu: Transfer) -> float:
    _check_shapes(inst, s, nu)
    return float(sum(w * value_under(inst, h, s.mixed[h]) for h, w in enumerate(nu.weights) if w != 0))


def _block_best(v: Utility, c: np.ndarray, no_state: bool) -> np.ndarray:
    """Maximize ``sum_i v(x_i) + x . c`` over the simplex."""
    N = c.size
    if N == 1:
        return np.ones(1)
    if v.linear:
        x = np.zeros(N)
        x[int(np.argmax(c))] = 1.0  # argmax: ties to the lowest index
        return x
    if no_state:
        return np.full(N, 1.0 / N)
    # KKT: v'(x_i) + c_i = lam on the support, x_i = 0 where v'(0) + c_i <= lam
    total = lambda lam: v.grad_inverse(np.maximum(lam - c, 1e-300)).sum()
    hi = float(np.max(c) + v.grad(np.array([1.0 / N]))[0]) + 1.0
    lo = float(np.max(c) + v.grad(np.array([1.0]))[0])
    while total(hi) > 1:
        hi = lo + 2 * (hi - lo)
    # total is decreasing in lam; total(lo) >= 1 >= total(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if total(mid) > 1:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(hi)):
            break
    x = v.grad_inverse(np.maximum(0.5 * (lo + hi) - c, 1e-300))
    return x / x.sum()


def dm_best_response(inst: InfoDesignInstance, nu: Transfer | None = None) -> StrategyProfile:
    """Per support element and block, the payoff-maximizing simplex point.

    Support elements with zero weight under ``nu`` are payoff-irrelevant and get
    the uniform point; with ``nu=None`` every element gets its best response.
    """
    no_state = inst.state_utility is None
    mixed = []
    for h in range(len(inst.support)):
        C = inst.block_utility(h)
        if nu is not None and nu.weights[h] == 0:
            mixed.append(np.full(C.shape, 1.0 / inst.n_actions))
        else:
            mixed.append(np.array([_block_best(inst.v, c, no_state) for c in C]))
    return StrategyProfile(tuple(mixed))


def kkt_residual(inst: InfoDesignInstance, s: StrategyProfile, support_tol: float = 1e-12) -> float:
    """Largest violation of the simplex KKT conditions over all blocks."""
    worst = 0.0
    for h, m in enumerate(s.mixed):
        C = inst.block_utility(h)
        for x, c in zip(m, C):
            if x.size == 1:
                continue
            g = inst.v.grad(np.maximum(x, 0.0)) + c
            on = x > support_tol
            lam = float(np.max(g[on]))
            worst = max(worst, float(lam - np.min(g[on])))
            if np.any(~on):
                worst = max(worst, float(np.max(g[~on]) - lam))
    return max(worst, 0.0)


def value_of_information(inst: InfoDesignInstance, H: Partition) -> float:
    h = inst.index_of(H)
    nu = Transfer.dirac(len(inst.support), h)
    return payoff(inst, dm_best_response(inst, nu), nu)


@dataclass(frozen=True)
class Certificate:
    dm_kkt_residual: float
    id_vertex_gap: float
    vertex_values: tuple[float, ...]
    optimal_vertices: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return self.dm_kkt_residual <= KKT_TOL and self.id_vertex_gap <= GAP_TOL

    def to_json(self) -> dict:
        return {
            "dm_kkt_residual": self.dm_kkt_residual,
            "id_vertex_gap": self.id_vertex_gap,
            "vertex_values": list(self.vertex_values),
            "optimal_vertices": list(self.optimal_vertices),
            "ok": self.ok,
        }


@dataclass(frozen=True, eq=False)
class Equilibrium:
    nu_hat: Transfer
    s_hat: StrategyProfile
    certificate: Certificate
    payoff: float

    def to_json(self) -> dict:
        return {
            "nu_hat": self.nu_hat.weights.tolist(),
            "strategies": self.s_hat.to_json(),
            "payoff": self.payoff,
            "certificate": self.certificate.to_json(),
        }


def solve_equilibrium(inst: InfoDesignInstance) -> Equilibrium:
    """Shared payoff: the designer picks the most valuable Dirac transfer.

    Payoff is linear in ``nu``, so checking the designer against every vertex
    of the support simplex certifies optimality over all randomized transfers.
    """
    s_hat = dm_best_response(inst)
    values = [value_under(inst, h, s_hat.mixed[h]) for h in range(len(inst.support))]
    best = max(values)
    h_hat = next(h for h, x in enumerate(values) if x >= best - TIE_TOL)
    nu_hat = Transfer.dirac(len(inst.support), h_hat)
    eq_pay = payoff(inst, s_hat, nu_hat)
    gap = max(payoff(inst, s_hat, Transfer.dirac(len(values), h)) for h in range(len(values))) - eq_pay
    optimal = tuple(h for h, x in enumerate(values) if x >= best - TIE_TOL)
    cert = Certificate(kkt_residual(inst, s_hat), gap, tuple(values), optimal)
    return Equilibrium(nu_hat, s_hat, cert, eq_pay)


def random_strategy(inst: InfoDesignInstance, rng: np.random.Generator) -> StrategyProfile:
    mixed = []
    for h in range(len(inst.support)):
        m = rng.dirichlet(np.ones(inst.n_actions), size=inst.cells(h).n_blocks)
        mixed.append(m)
    return StrategyProfile(tuple(mixed))
