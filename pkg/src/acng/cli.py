"""Command-line entry point: ``acng <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 malformed data, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from acng import datasets
from acng._parallel import default_threads
from acng.construction import CngParams, build_cng
from acng.core import Dataset, ProximityGraph, compute_stats, read_fvecs, write_fvecs
from acng.errors import AcngError, UsageError, VerificationError
from acng.eval import GroundTruth, compute_ground_truth, records_to_csv, sweep
from acng.exact import ExactBuildParams, build_exact, verify_alpha_reducible, verify_shortcut_reachable
from acng.knn import KnnParams
from acng.pruning import PruneRule

log = logging.getLogger("acng")

RULES = ("alpha", "triangle", "scaled", "shifted")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _load_data(path, *, unique: bool = True) -> Dataset:
    return Dataset(read_fvecs(path), unique=unique)


def _rule(name: str, alpha: float, tau: float) -> PruneRule:
    return {
        "alpha": lambda: PruneRule.shifted_scaled(alpha, tau),
        "triangle": PruneRule.triangle,
        "scaled": lambda: PruneRule.scaled(alpha),
        "shifted": lambda: PruneRule.shifted(tau),
    }[name]()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_build(a) -> int:
    if a.exact:
        rule = _rule(a.rule or "alpha", a.alpha, a.tau)
        params = ExactBuildParams(rule=rule, max_n=a.max_n)
    else:
        override = None
        if a.rule is not None and a.rule != "alpha":
            override = _rule(a.rule, a.alpha, a.tau)
        params = CngParams(
            knn=KnnParams(K=a.K, iters=a.knn_iters, seed=a.seed),
            M=a.M, L=a.L, C=a.C, alpha0=a.alpha0, alpha_max=a.alpha_max, d_alpha=a.dalpha,
            tau=a.tau, fixed_alpha=a.fixed_alpha, rule_override=override, seed=a.seed,
        )
    data = _load_data(a.data)
    if a.exact:
        graph = build_exact(data, params, threads=a.threads)
        report = {
            "mode": "exact",
            "rule": str(params.rule),
            "entry_point": graph.entry_point,
            "max_degree": graph.max_degree,
            "mean_degree": round(float(graph.degrees().mean()), 6),
        }
    else:
        graph, rep = build_cng(data, params, threads=a.threads)
        report = {"mode": "cng", **rep.to_dict()}
        if not a.timings:
            report.pop("seconds")
    graph.save(a.out)
    _emit(_dump(report), a.report)
    return 0


def cmd_gt(a) -> int:
    data = _load_data(a.data)
    queries = _load_data(a.queries, unique=False)
    if queries.dim != data.dim:
        raise UsageError(f"query dim {queries.dim} differs from data dim {data.dim}")
    compute_ground_truth(data, queries, a.k).save(a.out)
    return 0


def cmd_search(a) -> int:
    data = _load_data(a.data)
    queries = _load_data(a.queries, unique=False)
    if queries.dim != data.dim:
        raise UsageError(f"query dim {queries.dim} differs from data dim {data.dim}")
    graph = ProximityGraph.load(a.graph)
    if graph.n != data.n:
        raise UsageError(f"graph has {graph.n} vertices but data has {data.n} points")
    bad = [L for L in a.L_list if L < a.k]
    if bad:
        raise UsageError(f"every L must be >= k={a.k}; got {bad}")
    truth = GroundTruth.load(a.gt) if a.gt else compute_ground_truth(data, queries, a.k)
    records = sweep(graph, data, queries, truth, a.k, a.L_list, threads=a.threads)
    _emit(records_to_csv(records), a.out)
    return 0


def cmd_stats(a) -> int:
    data = _load_data(a.data, unique=False)
    st = compute_stats(data)
    _emit(_dump({"n": data.n, "dim": data.dim, **st.to_dict()}), a.out)
    return 0


def cmd_verify(a) -> int:
    data = _load_data(a.data)
    graph = ProximityGraph.load(a.graph)
    if graph.n != data.n:
        raise UsageError(f"graph has {graph.n} vertices but data has {data.n} points")
    checks = a.check or (["reducible", "shortcut"] if a.queries else ["shortcut"])
    summary = {}
    for check in checks:
        if check == "reducible":
            if not a.queries or a.tau is None:
                raise UsageError("the reducible check needs --queries and --tau")
            queries = _load_data(a.queries, unique=False)
            rep = verify_alpha_reducible(graph, data, queries, a.tau, a.alpha)
            what = "query {0}: vertex {1} at distance {2:.6g} has no neighbor within {2:.6g}/alpha (best {3:.6g})"
        else:
            rep = verify_shortcut_reachable(graph, data, a.alpha)
            what = "pair ({0}, {1}) at distance {2:.6g}: no neighbor of {0} within distance/alpha (best {3:.6g})"
        summary[check] = {"checked": rep.checked, "violations": len(rep.violations)}
        if rep.violations:
            sys.stdout.write(_dump(summary))
            raise VerificationError(f"{check}: {len(rep.violations)} violations; first: " + what.format(*rep.violations[0]))
    sys.stdout.write(_dump(summary))
    return 0


def cmd_synth(a) -> int:
    if a.kind == "uniform":
        x = datasets.uniform(a.n, a.dim, seed=a.seed)
    else:
        x = datasets.sift_like(a.n, a.dim, seed=a.seed)
    write_fvecs(a.out, x)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="acng", description="alpha-convergent proximity graphs: build, search, verify.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def threads(sp):
        sp.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: available cores)")

    b = sub.add_parser("build", help="build a graph from an fvecs file")
    b.add_argument("--data", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--report", default=None, help="build report JSON path (default stdout)")
    b.add_argument("--K", type=_positive_int, default=200)
    b.add_argument("--knn-iters", type=_positive_int, default=10)
    b.add_argument("--M", type=int, default=70)
    b.add_argument("--L", type=int, default=60)
    b.add_argument("--C", type=int, default=500)
    b.add_argument("--tau", type=float, default=0.0)
    b.add_argument("--alpha0", type=float, default=0.9)
    b.add_argument("--alpha-max", type=float, default=1.6)
    b.add_argument("--dalpha", type=float, default=0.05)
    b.add_argument("--fixed-alpha", type=float, default=None)
    b.add_argument("--rule", choices=RULES, default=None)
    b.add_argument("--alpha", type=float, default=1.2, help="alpha for --exact and single-rule builds")
    b.add_argument("--exact", action="store_true", help="quadratic exact construction")
    b.add_argument("--max-n", type=_positive_int, default=20_000)
    b.add_argument("--timings", action="store_true", help="include wall-clock seconds in the report")
    b.add_argument("--seed", type=int, default=0)
    threads(b)
    b.set_defaults(func=cmd_build)

    g = sub.add_parser("gt", help="exact ground truth as ivecs")
    g.add_argument("--data", required=True)
    g.add_argument("--queries", required=True)
    g.add_argument("--k", type=_positive_int, default=100)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gt)

    s = sub.add_parser("search", help="sweep beam-search queue sizes and write CSV")
    s.add_argument("--graph", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--gt", default=None, help="ivecs ground truth (computed if absent)")
    s.add_argument("--k", type=_positive_int, default=100)
    s.add_argument("--L-list", dest="L_list", type=_int_list, required=True)
    s.add_argument("--out", default=None, help="CSV path (default stdout)")
    threads(s)
    s.set_defaults(func=cmd_search)

    st = sub.add_parser("stats", help="diameter, minimum distance and aspect ratio as JSON")
    st.add_argument("--data", required=True)
    st.add_argument("--out", default=None)
    st.set_defaults(func=cmd_stats)

    v = sub.add_parser("verify", help="exhaustive routing-property checks on a graph")
    v.add_argument("--graph", required=True)
    v.add_argument("--data", required=True)
    v.add_argument("--alpha", type=float, required=True)
    v.add_argument("--queries", default=None)
    v.add_argument("--tau", type=float, default=None)
    v.add_argument("--check", action="append", choices=("reducible", "shortcut"))
    v.set_defaults(func=cmd_verify)

    y = sub.add_parser("synth", help="write a synthetic fvecs dataset")
    y.add_argument("--kind", choices=("uniform", "sift"), default="uniform")
    y.add_argument("--n", type=_positive_int, required=True)
    y.add_argument("--dim", type=_positive_int, default=8)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out", required=True)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if getattr(args, "threads", None) is None and hasattr(args, "threads"):
            args.threads = default_threads()
        return args.func(args)
    except AcngError as e:
        print(f"acng: error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"acng: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
