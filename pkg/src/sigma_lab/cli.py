"""``sigma-lab``: file I/O and subcommand dispatch.

Exit codes: 0 success, 1 invalid input or usage, 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import bundle, density, dyadic, infodesign, lattice, metric, modes, projection
from .core import FiniteProbSpace, Partition, random_partition, random_space


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------- file I/O

def _load(path: str, what: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ValueError(f"{what}: file {path!r} not found") from None
    except json.JSONDecodeError as e:
        raise ValueError(f"{what}: {path!r} is not valid JSON ({e})") from None


def _field(doc, key: str, what: str):
    if not isinstance(doc, dict) or key not in doc:
        raise ValueError(f"{what}: missing field {key!r}")
    return doc[key]


def load_space(path: str) -> FiniteProbSpace:
    return FiniteProbSpace(_field(_load(path, "space"), "weights", "space"))


def _partition(doc, what: str) -> Partition:
    return Partition(tuple(int(x) for x in _field(doc, "block_of", what)))


def load_partition(path: str, what: str = "partition") -> Partition:
    return _partition(_load(path, what), what)


def load_seq(path: str, what: str = "seq") -> list[Partition]:
    return [_partition(d, f"{what}.partitions[{k}]")
            for k, d in enumerate(_field(_load(path, what), "partitions", what))]


def load_randvec(path: str, what: str = "f") -> np.ndarray:
    return np.asarray(_field(_load(path, what), "values", what), dtype=float)


def _tests(kind: str, n: int) -> metric.TestFamily:
    return metric.TestFamily.atoms(n) if kind == "atoms" else metric.TestFamily.atoms_pairs(n)


def _dumps(doc) -> str:
    # repr floats: shortest strings that parse back to the identical double
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _g17(x: float) -> str:
    return "%.17g" % x


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------- commands

def cmd_condexp(args):
    space = load_space(args.space)
    e = projection.cond_exp(space, load_randvec(args.f), load_partition(args.partition))
    _emit(args, _dumps({"values": e.tolist()}))


def cmd_charcheck(args):
    space = load_space(args.space)
    if args.matrix:
        m = _field(_load(args.matrix, "matrix"), "matrix", "matrix")
        c = projection.ProjectionCandidate(space, m)
    elif args.partition:
        c = projection.operator_of(space, load_partition(args.partition))
    else:
        raise UsageError("charcheck needs --matrix or --partition")
    r = projection.check_markov_characterization(c, tol=args.tol or projection.PIVOT_TOL)
    _emit(args, _dumps({
        "is_projection": r.is_projection, "is_markov": r.is_markov,
        "fixes_constants": r.fixes_constants, "range_is_lattice": r.range_is_lattice,
        "rank": r.rank, "all_pass": r.all_pass,
        "recovered_partition": None if r.recovered_partition is None else r.recovered_partition.to_json(),
    }))


def cmd_metric_dkappa(args):
    space = load_space(args.space)
    d = metric.d_kappa(space, load_partition(args.a, "a"), load_partition(args.b, "b"),
                       _tests(args.tests, space.n_atoms))
    _emit(args, _g17(d) + "\n")


def cmd_metric_extract(args):
    idx, lim = metric.extract_convergent_subsequence(load_seq(args.seq))
    _emit(args, _dumps({"indices": idx, "limit": lim.to_json()}))


def cmd_metric_property_e(args):
    space = load_space(args.space)
    r = metric.property_E_check(space, load_seq(args.seq), _tests(args.tests, space.n_atoms),
                                tol=args.tol or 1e-9)
    _emit(args, _dumps({
        "cauchy_ok": r.cauchy_ok, "limit": None if r.limit is None else r.limit.to_json(),
        "tail_indices": list(r.tail_indices), "oscillation": float(r.oscillation),
        "strong_dev": None if r.strong_dev is None else float(r.strong_dev),
    }))


def cmd_modes_analyze(args):
    space = load_space(args.space)
    rep = modes.analyze(space, load_seq(args.seq), load_partition(args.limit, "limit"),
                        _tests(args.tests, space.n_atoms), eps=args.eps)
    bad = modes.check_hierarchy(rep, tol=args.tol or modes.HIER_TOL)
    if args.format == "csv" or (args.out or "").endswith(".csv"):
        _emit(args, rep.to_csv())
    else:
        doc = rep.to_json()
        doc["hierarchy"] = "ok" if not bad else bad
        _emit(args, _dumps(doc))


def _element(space, d, what):
    return bundle.BundleElement(space, _field(d, "u", what), _partition(_field(d, "partition", what), what))


def _load_elements(space, path, what):
    items = _field(_load(path, what), "elements", what)
    return [_element(space, d, f"{what}.elements[{k}]") for k, d in enumerate(items)]


def _load_element(space, path, what):
    return _element(space, _load(path, what), what)


def cmd_bundle_fingerprint(args):
    space = load_space(args.space)
    fp = bundle.fingerprint(_load_element(space, args.element, "element"), _tests(args.tests, space.n_atoms))
    _emit(args, _dumps(fp.to_json()))


def cmd_bundle_strongdev(args):
    space = load_space(args.space)
    dev = bundle.bundle_strong_dev(_load_elements(space, args.seq, "seq"),
                                   _load_element(space, args.limit, "limit"), _tests(args.tests, space.n_atoms))
    _emit(args, _dumps({"strong_dev": dev.tolist()}))


def cmd_bundle_weakdev(args):
    space = load_space(args.space)
    r = bundle.bundle_weak_dev(_load_elements(space, args.seq, "seq"),
                               _load_element(space, args.limit, "limit"), _tests(args.tests, space.n_atoms))
    _emit(args, _dumps({"w1_sup": r.w1_sup, "w2_dev": r.w2_dev.tolist(), "index_dev": r.index_dev.tolist()}))


def cmd_lattice(args):
    A, B = load_partition(args.a, "a"), load_partition(args.b, "b")
    if args.op == "join":
        _emit(args, _dumps(lattice.join(A, B).to_json()))
    elif args.op == "meet":
        _emit(args, _dumps(lattice.meet(A, B).to_json()))
    else:
        space = load_space(args.space)
        ok = lattice.independent(space, A, B, tol=args.tol or 1e-12)
        _emit(args, _dumps({"independent": ok}))


def cmd_lattice_continuity(args):
    space = load_space(args.space)
    r = lattice.lattice_continuity_experiment(
        space, load_seq(args.seqa, "seqa"), load_seq(args.seqb, "seqb"),
        load_partition(args.lima, "lima"), load_partition(args.limb, "limb"), _tests(args.tests, space.n_atoms))
    _emit(args, _dumps(r.to_json()))


def _density_pair(space, d, what):
    return density.DensityPair(space, _partition(_field(d, "partition", what), what), _field(d, "u", what))


def cmd_density_rho(args):
    space = load_space(args.space)
    pair = _density_pair(space, _load(args.pair, "pair"), "pair")
    _emit(args, _g17(density.rho_value(pair, load_randvec(args.f))) + "\n")


def cmd_density_extract(args):
    space = load_space(args.space)
    items = _field(_load(args.seq, "seq"), "pairs", "seq")
    seq = [_density_pair(space, d, f"seq.pairs[{k}]") for k, d in enumerate(items)]
    r = density.extract_rho_convergent(seq, args.K, _tests(args.tests, space.n_atoms),
                                       tol=args.tol or density.BISECT_TOL)
    _emit(args, _dumps({"indices": r.indices, "limit": r.limit.to_json(),
                        "cluster_radius": r.cluster_radius, "envelope": r.envelope.tolist()}))


def cmd_infodesign_solve(args):
    doc = _load(args.instance, "instance")
    try:
        inst = infodesign.InfoDesignInstance.from_json(doc)
    except (KeyError, TypeError) as e:
        raise ValueError(f"instance: missing or malformed field {e}") from None
    eq = infodesign.solve_equilibrium(inst)
    _emit(args, _dumps(eq.to_json()))


def _frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def cmd_dyadic_claim1(args):
    ds = dyadic.DyadicSpace(args.K)
    nmax = args.nmax or ds.n_atoms - 1
    f = None
    if args.f != "g0":
        f = load_randvec(args.f)
    rows = dyadic.claim1_trace(ds, range(1, nmax + 1), f)
    if args.format == "json":
        _emit(args, _dumps({"rows": [r.to_dict() for r in rows]}))
        return
    _emit(args, _csv(
        ["n", "m", "P_I", "P_I_float", "norm_sq", "norm_sq_float", "delta", "delta_float"],
        ([r.n, r.m, _frac(r.p_interval), _g17(r.p_interval), _frac(r.norm_sq), _g17(r.norm_sq),
          _frac(r.delta), _g17(r.delta)] for r in rows)))


def cmd_dyadic_claim2(args):
    ds = dyadic.DyadicSpace(args.K)
    nmax = args.nmax or ds.n_atoms - 1
    try:
        omegas = [float(x) for x in args.omegas.split(",") if x.strip()]
    except ValueError:
        raise ValueError(f"omegas: cannot parse {args.omegas!r}") from None
    probes = dyadic.claim2_trace(ds, range(1, nmax + 1), omegas=omegas)
    if args.format == "json":
        _emit(args, _dumps({"probes": [p.to_dict() for p in probes]}))
        return
    header = ["n", "m"] + [f"trace_{p.omega!r}" for p in probes] + [f"trace_{p.omega!r}_float" for p in probes]
    rows = []
    for k, n in enumerate(probes[0].ns if probes else []):
        rows.append([n, dyadic.level(n)] + [_frac(p.trace[k]) for p in probes]
                    + [_g17(p.trace[k]) for p in probes])
    _emit(args, _csv(header, rows))


def cmd_generate(args):
    rng = np.random.default_rng(args.seed)
    n = args.n
    if args.what == "space":
        doc = random_space(n, rng).to_json()
    elif args.what == "partition":
        doc = random_partition(n, rng).to_json()
    else:
        doc = {"partitions": [random_partition(n, rng).to_json() for _ in range(args.length)]}
    _emit(args, _dumps(doc))


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the subcommand; SUPPRESS keeps a
    # subparser from resetting a value given at the top level
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, help="seed for randomized generators (default 0)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--tol", type=float, help="override the module tolerance")
    common.add_argument("--jobs", type=int, help="worker count (default $SIGMA_LAB_JOBS or 1)")
    common.add_argument("--out", help="output file (default stdout)")
    common.add_argument("--tests", choices=("atoms", "atoms+pairs"), help="test family (default atoms+pairs)")

    p = _Parser(prog="sigma-lab", parents=[common],
                description="Finite sub-sigma-algebras, conditional expectations and their convergence.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def add(parent, name, fn, *opts, **kw):
        q = parent.add_parser(name, parents=[common], **kw)
        for o in opts:
            q.add_argument(f"--{o}", required=True)
        q.set_defaults(fn=fn)
        return q

    add(sub, "condexp", cmd_condexp, "space", "partition", "f")
    q = add(sub, "charcheck", cmd_charcheck, "space")
    q.add_argument("--matrix")
    q.add_argument("--partition")

    m = sub.add_parser("metric").add_subparsers(dest="sub", parser_class=_Parser)
    add(m, "dkappa", cmd_metric_dkappa, "space", "a", "b")
    add(m, "extract", cmd_metric_extract, "seq")
    add(m, "property-e", cmd_metric_property_e, "space", "seq")

    m = sub.add_parser("modes").add_subparsers(dest="sub", parser_class=_Parser)
    q = add(m, "analyze", cmd_modes_analyze, "space", "seq", "limit")
    q.add_argument("--eps", type=float, default=0.1)

    m = sub.add_parser("bundle").add_subparsers(dest="sub", parser_class=_Parser)
    add(m, "fingerprint", cmd_bundle_fingerprint, "space", "element")
    add(m, "strongdev", cmd_bundle_strongdev, "space", "seq", "limit")
    add(m, "weakdev", cmd_bundle_weakdev, "space", "seq", "limit")

    m = sub.add_parser("lattice").add_subparsers(dest="sub", parser_class=_Parser)
    for op in ("join", "meet"):
        add(m, op, cmd_lattice, "a", "b").set_defaults(op=op)
    add(m, "independent", cmd_lattice, "space", "a", "b").set_defaults(op="independent")
    add(m, "continuity", cmd_lattice_continuity, "space", "seqa", "seqb", "lima", "limb")

    m = sub.add_parser("density").add_subparsers(dest="sub", parser_class=_Parser)
    add(m, "rho", cmd_density_rho, "space", "pair", "f")
    q = add(m, "extract", cmd_density_extract, "space", "seq")
    q.add_argument("--K", type=float, default=4.0)

    m = sub.add_parser("infodesign").add_subparsers(dest="sub", parser_class=_Parser)
    add(m, "solve", cmd_infodesign_solve, "instance")

    m = sub.add_parser("dyadic").add_subparsers(dest="sub", parser_class=_Parser)
    q = add(m, "claim1", cmd_dyadic_claim1)
    q.add_argument("--K", type=int, default=12)
    q.add_argument("--nmax", type=int, default=None)
    q.add_argument("--f", default="g0", help="'g0' or a randvec JSON file")
    q = add(m, "claim2", cmd_dyadic_claim2)
    q.add_argument("--K", type=int, default=12)
    q.add_argument("--nmax", type=int, default=None)
    q.add_argument("--omegas", default="0.1,0.3,0.7")

    q = add(sub, "generate", cmd_generate)
    q.add_argument("what", choices=("space", "partition", "seq"))
    q.add_argument("--n", type=int, default=8)
    q.add_argument("--length", type=int, default=10)
    return p


GLOBAL_DEFAULTS = {"seed": 0, "format": None, "tol": None, "jobs": None, "out": None, "tests": "atoms+pairs"}


def jobs(args) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("SIGMA_LAB_JOBS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ValueError(f"SIGMA_LAB_JOBS: expected an integer, got {env!r}") from None


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not hasattr(args, "fn"):
            parser.print_usage(sys.stderr)
            print("sigma-lab: error: missing or unknown subcommand", file=sys.stderr)
            return 1
        for k, v in GLOBAL_DEFAULTS.items():
            if not hasattr(args, k):
                setattr(args, k, v)
        args.jobs = jobs(args)
        args.fn(args)
    except UsageError as e:
        print(f"sigma-lab: error: {e}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, KeyError) as e:
        print(f"sigma-lab: invalid input: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        print(f"sigma-lab: internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
