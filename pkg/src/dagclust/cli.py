"""Command-line surface.

Subcommands cover layer assignment, the cluster-mapping search, the exact
brute-force oracle, inference-cost evaluation, benchmark generation, and a
multi-run convergence comparison.  Every run is deterministic given the
input file, the flags, and the seed; a JSON manifest echoing that triple is
emitted alongside the results so any run can be replayed bit-for-bit.

Exit codes: 0 success, 2 input validation, 3 enumeration cap, 4 config.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone

from . import __version__
from .dag import (
    CapExceededError,
    Dag,
    ValidationError,
    assign_layers,
    format_dag_text,
    load_dag,
    parse_dag_text,
    search_space_size,
)
from .costs import BnComputationCost
from .factors import (
    OpCostWeights,
    bucket_elimination_cost,
    dump_schedule_tsv,
    eval_schedule,
    jointree_fixture_schedule,
)
from .generator import GeneratorSpec, degree_histogram, generate_dag
from .inference import cluster_inference_schedule
from .oracle import DEFAULT_CAP, mapping_similarity, optimal_set
from .search import ConfigError, SearchConfig, search

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAP = 3
EXIT_CONFIG = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(value: float, weights: OpCostWeights, precise: bool) -> str:
    # Default weights make every cost a multiple of 0.2; one decimal suffices.
    if precise or not weights.is_default:
        return repr(value)
    return f"{value:.1f}"


def _load(path: str) -> Dag:
    try:
        return load_dag(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_VALIDATION) from None
    except ValidationError as exc:
        raise CliError(str(exc), EXIT_VALIDATION) from None


def _weights(args) -> OpCostWeights:
    try:
        return OpCostWeights(add=args.w_add, mul=args.w_mul, div=args.w_div)
    except ValidationError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def _model(dag, layers, args):
    if args.cost != "bn":
        raise CliError(f"unknown cost model {args.cost!r}", EXIT_CONFIG)
    return BnComputationCost(dag, layers, _weights(args))


def _parse_mapping(dag: Dag, text: str) -> dict[int, int]:
    out: dict[int, int] = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise CliError(f"bad mapping item {part!r}; want name=cluster", EXIT_CONFIG)
        name, _, k = part.partition("=")
        try:
            out[dag.id_of(name.strip())] = int(k)
        except ValidationError as exc:
            raise CliError(str(exc), EXIT_VALIDATION) from None
        except ValueError:
            raise CliError(f"bad cluster label in {part!r}", EXIT_CONFIG) from None
    return out


def _mapping_str(dag: Dag, mapping: dict[int, int]) -> str:
    return ",".join(f"{dag.name(x)}={mapping[x]}" for x in sorted(mapping))


def _manifest(command: str, input_path: str | None, config: dict) -> dict:
    digest = None
    if input_path:
        with open(input_path, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
    return {
        "artifact": "dagclust",
        "version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "command": command,
        "input": input_path,
        "input_sha256": digest,
        "config": config,
    }


def _write_manifest(manifest: dict, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_layers(args, out) -> int:
    dag = _load(args.file)
    layers = assign_layers(dag)
    if args.format == "json":
        json.dump(
            {"layers": {dag.name(i): layers.of(i) for i in dag.node_ids()}},
            out,
            sort_keys=True,
        )
        out.write("\n")
    else:
        out.write("node\tlayer\n")
        for i in dag.node_ids():
            out.write(f"{dag.name(i)}\t{layers.of(i)}\n")
    return EXIT_OK


def _search_config(args) -> SearchConfig:
    try:
        return SearchConfig(
            alpha=args.alpha,
            seed=args.seed,
            max_iterations=args.max_iters,
            stall_window=args.stall,
            prune_enabled=not args.no_prune,
            gmin_infinite=args.gmin_inf,
            root_split_filter=args.root_split,
        )
    except ConfigError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None


def cmd_search(args, out) -> int:
    dag = _load(args.file)
    layers = assign_layers(dag)
    model = _model(dag, layers, args)
    config = _search_config(args)
    references = None
    if args.reference:
        ref_rows = []
        with open(args.reference, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    ref_rows.append(_parse_mapping(dag, line))
        if not ref_rows:
            raise CliError("reference file holds no mappings", EXIT_VALIDATION)
        references = ref_rows

    manifest = _manifest(
        "search", args.file, {**dataclasses.asdict(config), "weights": dataclasses.asdict(_weights(args))}
    )
    _write_manifest(manifest, args.manifest)

    result = search(dag, layers, model, config)
    for rec in result.solutions:
        if references is not None:
            rec.similarity = mapping_similarity(rec.mapping, references)

    w = model.weights
    report = {
        "optimal_cost": result.report.optimal_cost,
        "optimal_solution_count": result.report.optimal_solution_count,
        "iterations_total": result.report.iterations_total,
        "iteration_of_first_optimal": result.report.iteration_of_first_optimal,
        "branches_created": result.report.branches_created,
        "branches_complete": result.report.branches_complete,
        "solutions_emitted": result.report.solutions_emitted,
        "gmin": result.report.gmin,
        "terminated_early": result.report.terminated_early,
    }
    if args.format == "json":
        payload = {
            "manifest": manifest,
            "solutions": [
                {
                    "iteration": r.iteration,
                    "branch": r.branch,
                    "total_cost": r.total_cost,
                    "gmin": result.report.gmin,
                    "mapping": {dag.name(x): k for x, k in sorted(r.mapping.items())},
                    "optimal": r.optimal,
                    **({"similarity": r.similarity} if references is not None else {}),
                }
                for r in result.solutions
            ],
            "report": report,
        }
        json.dump(payload, out, sort_keys=True)
        out.write("\n")
    else:
        cols = ["iteration", "branch", "total_cost", "gmin", "mapping", "optimal"]
        if references is not None:
            cols.append("similarity")
        out.write("\t".join(cols) + "\n")
        gmin_seen = float("inf")
        for r in result.solutions:
            gmin_seen = min(gmin_seen, r.total_cost)
            row = [
                str(r.iteration),
                str(r.branch),
                _fmt(r.total_cost, w, args.precise),
                _fmt(gmin_seen, w, args.precise),
                _mapping_str(dag, r.mapping),
                "1" if r.optimal else "0",
            ]
            if references is not None:
                row.append(f"{r.similarity:.4f}")
            out.write("\t".join(row) + "\n")
        for key, val in report.items():
            if isinstance(val, float):
                val = _fmt(val, w, args.precise)
            out.write(f"# report\t{key}={val}\n")
    return EXIT_OK


def cmd_oracle(args, out) -> int:
    dag = _load(args.file)
    layers = assign_layers(dag)
    model = _model(dag, layers, args)
    try:
        if args.all:
            from .oracle import enumerate_feasible

            fms = enumerate_feasible(dag, layers, model, cap=args.cap)
            winners = sorted(fms, key=lambda f: (f.total_cost, f.signature))
            best = winners[0].total_cost if winners else float("inf")
        else:
            best, winners = optimal_set(dag, layers, model, cap=args.cap)
    except CapExceededError as exc:
        raise CliError(str(exc), EXIT_CAP) from None
    w = model.weights
    if args.format == "json":
        json.dump(
            {
                "optimal_cost": best,
                "mappings": [
                    {
                        "mapping": {dag.name(x): k for x, k in sorted(fm.u.items())},
                        "cost": fm.total_cost,
                        "partition": list(fm.signature),
                    }
                    for fm in winners
                ],
            },
            out,
            sort_keys=True,
        )
        out.write("\n")
    else:
        out.write("mapping\tcost\tpartition\n")
        for fm in winners:
            part = ",".join(map(str, fm.signature))
            out.write(f"{_mapping_str(dag, fm.u)}\t{_fmt(fm.total_cost, w, args.precise)}\t{part}\n")
        out.write(f"# report\toptimal_cost={_fmt(best, w, args.precise)}\n")
        out.write(f"# report\toptimal_solution_count={len(winners)}\n")
    return EXIT_OK


def cmd_infer_cost(args, out) -> int:
    dag = _load(args.file)
    layers = assign_layers(dag)
    weights = _weights(args)
    if args.strategy == "be":
        target = dag.id_of(args.target) if args.target else dag.leaves[0]
        order = None
        if args.order:
            order = [dag.id_of(n.strip()) for n in args.order.split(",")]
        try:
            total, rows = bucket_elimination_cost(dag, layers, target, order, weights)
        except ValidationError as exc:
            raise CliError(str(exc), EXIT_VALIDATION) from None
    elif args.strategy == "jointree-fixture":
        try:
            schedule = jointree_fixture_schedule(dag)
        except ValidationError as exc:
            raise CliError(str(exc), EXIT_VALIDATION) from None
        total, rows = eval_schedule(schedule, dag.states, weights)
    elif args.strategy == "clusters":
        if not args.mapping:
            raise CliError("--strategy clusters requires --mapping", EXIT_CONFIG)
        mapping = _parse_mapping(dag, args.mapping)
        try:
            res = cluster_inference_schedule(dag, layers, mapping, weights)
        except ValidationError as exc:
            raise CliError(str(exc), EXIT_VALIDATION) from None
        if args.format == "json":
            json.dump(
                {
                    "total": res.total,
                    "steps": [dataclasses.asdict(s) for s in res.steps],
                },
                out,
                sort_keys=True,
            )
            out.write("\n")
        else:
            out.write("phase\tcluster\tlayer\tcost\tlabel\n")
            for s in res.steps:
                out.write(
                    f"{s.phase}\t{s.cluster}\t{s.layer}\t{_fmt(s.cost, weights, args.precise)}\t{s.label}\n"
                )
            out.write(f"# report\ttotal={_fmt(res.total, weights, args.precise)}\n")
        return EXIT_OK
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown strategy {args.strategy!r}", EXIT_CONFIG)
    if args.format == "json":
        json.dump(
            {
                "total": total,
                "steps": [
                    {
                        "step_index": r.index,
                        "op": r.op,
                        "accumulator_id": r.acc,
                        "dims": sorted(dag.name(d) for d in r.dims),
                        "cost": r.cost,
                    }
                    for r in rows
                ],
            },
            out,
            sort_keys=True,
        )
        out.write("\n")
    else:
        out.write(dump_schedule_tsv(rows, dag, precise=args.precise))
        out.write(f"# report\ttotal={_fmt(total, weights, args.precise)}\n")
    return EXIT_OK


def cmd_gen(args, out) -> int:
    try:
        lo, _, hi = args.states.partition("-")
        spec = GeneratorSpec(
            n=args.n,
            layers=args.layers,
            rewire=args.rewire,
            max_in=args.max_in,
            max_out=args.max_out,
            extra_arc_rate=args.extra_arcs,
            states=(int(lo), int(hi or lo)),
            seed=args.seed,
        )
        dag = generate_dag(spec)
    except (ValueError, ValidationError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    text = format_dag_text(dag)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        out.write(text)
    ins, outs = degree_histogram(dag)
    layers = assign_layers(dag)
    out.write(f"# nodes={dag.n} arcs={len(dag.arcs)} layers={layers.l_max + 1}\n")
    out.write(f"# search_space={search_space_size(dag, layers)}\n")
    out.write("# in-degree histogram: " + " ".join(f"{d}:{c}" for d, c in ins.items()) + "\n")
    out.write("# out-degree histogram: " + " ".join(f"{d}:{c}" for d, c in outs.items()) + "\n")
    return EXIT_OK


def cmd_compare(args, out) -> int:
    dag = _load(args.file)
    layers = assign_layers(dag)
    model = _model(dag, layers, args)
    alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    oracle_best = None
    oracle_refs = None
    try:
        oracle_best, winners = optimal_set(dag, layers, model, cap=args.cap)
        oracle_refs = [fm.u for fm in winners]
    except CapExceededError:
        pass

    h_all = model.heuristic(dag.node_ids(), [])
    jobs = []
    for seed in range(args.seeds):
        for alpha in alphas:
            jobs.append((seed, alpha))

    def one(seed: float, alpha: float):
        cfg = SearchConfig(alpha=alpha, seed=seed, stall_window=args.stall)
        res = search(dag, layers, model, cfg)
        first_cost = res.solutions[0].total_cost if res.solutions else None
        first_iter = res.solutions[0].iteration if res.solutions else None
        sim = None
        if oracle_refs and res.solutions:
            sim = mapping_similarity(res.solutions[-1].mapping, oracle_refs)
        return {
            "seed": seed,
            "alpha": alpha,
            "optimal_cost": res.report.optimal_cost,
            "iterations_total": res.report.iterations_total,
            "iteration_of_first_optimal": res.report.iteration_of_first_optimal,
            "first_found_cost": first_cost,
            "first_found_iteration": first_iter,
            "first_vs_naive": (first_cost / h_all) if first_cost else None,
            "matches_oracle": (
                None
                if oracle_best is None
                else abs(res.report.optimal_cost - oracle_best) <= 1e-9
            ),
            "final_similarity": sim,
        }

    if args.jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(lambda sa: one(*sa), jobs))
    else:
        rows = [one(*sa) for sa in jobs]
    rows.sort(key=lambda r: (r["seed"], r["alpha"]))

    if args.format == "json":
        json.dump({"naive_cost": h_all, "oracle_cost": oracle_best, "runs": rows}, out, sort_keys=True)
        out.write("\n")
    else:
        cols = list(rows[0].keys()) if rows else []
        out.write("\t".join(cols) + "\n")
        for r in rows:
            out.write("\t".join("" if r[c] is None else str(r[c]) for c in cols) + "\n")
        out.write(f"# report\tnaive_cost={h_all}\n")
        out.write(f"# report\toracle_cost={oracle_best}\n")
    return EXIT_OK


def cmd_replay(args, out) -> int:
    try:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read manifest: {exc}", EXIT_VALIDATION) from None
    if manifest.get("command") != "search":
        raise CliError("only search manifests can be replayed", EXIT_CONFIG)
    cfg = manifest["config"]
    weights = cfg.get("weights", {})
    argv = [
        "search",
        manifest["input"],
        "--alpha",
        str(cfg["alpha"]),
        "--seed",
        str(cfg["seed"]),
        "--w-add",
        str(weights.get("add", 0.6)),
        "--w-mul",
        str(weights.get("mul", 1.0)),
        "--w-div",
        str(weights.get("div", 3.0)),
        "--format",
        args.format,
    ]
    if cfg.get("max_iterations") is not None:
        argv += ["--max-iters", str(cfg["max_iterations"])]
    if cfg.get("stall_window") is not None:
        argv += ["--stall", str(cfg["stall_window"])]
    if not cfg.get("prune_enabled", True):
        argv.append("--no-prune")
    if cfg.get("gmin_infinite"):
        argv.append("--gmin-inf")
    if cfg.get("root_split_filter"):
        argv.append("--root-split")
    return main(argv, out)


# ---------------------------------------------------------------------------


def _add_common(p: _Parser) -> None:
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.add_argument("--precise", action="store_true", help="full float precision")
    p.add_argument("--cost", default="bn", help="cost model name")
    p.add_argument("--w-add", type=float, default=0.6)
    p.add_argument("--w-mul", type=float, default=1.0)
    p.add_argument("--w-div", type=float, default=3.0)


def build_parser() -> _Parser:
    top = _Parser(prog="dagclust", description=__doc__)
    sub = top.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("layers", parents=[], help="print the layer of every node")
    p.add_argument("file")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.set_defaults(fn=cmd_layers)

    p = sub.add_parser("search", help="run the cluster-mapping search")
    p.add_argument("file")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--stall", type=int, default=None, help="stop after this many iterations without improvement")
    p.add_argument("--no-prune", action="store_true")
    p.add_argument("--gmin-inf", action="store_true", help="enumeration mode: no cost-based termination")
    p.add_argument("--root-split", action="store_true", help="never co-cluster two root nodes of a layer")
    p.add_argument("--reference", default=None, help="file of mappings to score similarity against")
    p.add_argument("--manifest", default=None, help="write the run manifest to this path")
    _add_common(p)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("oracle", help="exact optimal mappings by brute force")
    p.add_argument("file")
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--all", action="store_true", help="dump every feasible mapping, not just the optima")
    _add_common(p)
    p.set_defaults(fn=cmd_oracle)

    p = sub.add_parser("infer-cost", help="inference-cost schedules and totals")
    p.add_argument("file")
    p.add_argument("--strategy", choices=("be", "jointree-fixture", "clusters"), default="be")
    p.add_argument("--target", default=None, help="target node for bucket elimination")
    p.add_argument("--order", default=None, help="comma-joined elimination order")
    p.add_argument("--mapping", default=None, help="name=cluster pairs for --strategy clusters")
    _add_common(p)
    p.set_defaults(fn=cmd_infer_cost)

    p = sub.add_parser("gen", help="generate a benchmark DAG")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--layers", type=int, default=0)
    p.add_argument("--rewire", type=float, default=0.1)
    p.add_argument("--max-in", type=int, default=7)
    p.add_argument("--max-out", type=int, default=9)
    p.add_argument("--extra-arcs", type=float, default=0.5)
    p.add_argument("--states", default="2", help="state-count range, e.g. 2 or 2-4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the DAG file here instead of stdout")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("compare", help="convergence across seeds and alphas")
    p.add_argument("file")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--alphas", default="0,0.5,1")
    p.add_argument("--stall", type=int, default=None)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--jobs", type=int, default=1)
    _add_common(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("replay", help="re-run a search from its manifest")
    p.add_argument("manifest")
    p.add_argument("--format", choices=("tsv", "json"), default="tsv")
    p.set_defaults(fn=cmd_replay)

    return top


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args, out)
    except CliError as exc:
        print(f"dagclust: error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"dagclust: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
