"""
rmdgraph command line

Exit status: 0 on success, 1 on a domain error, 2 on invalid arguments or an
invalid config file.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from app.core.config import configure_logging
from app.core.exceptions import RMDGraphError
from app.schemas.schemas import (
    DataSourceConfig,
    ExperimentConfig,
    GraphBuilder,
    GraphConfig,
    MixtureSpec,
    StatVariant,
    StatVariantKind,
    WeightKind,
)
from app.services import (
    data_service,
    evaluation_service,
    graph_service,
    pipeline_service,
    rank_service,
    selection_service,
    spectral_service,
    ssl_service,
    theory_service,
)
from app.utils.io import dumps_json, read_json, write_csv, write_json

logger = logging.getLogger("rmdgraph")

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2

PRESETS = {
    "fig1": data_service.fig1_mixture,
    "three-gaussian": data_service.three_gaussian_mixture,
}


class UsageError(Exception):
    """Bad input that argparse itself cannot catch"""


def parse_floats(text: str) -> List[float]:
    """'0,0.2,0.4' or 'start:stop:step' (stop included)"""
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        if step == 0:
            raise argparse.ArgumentTypeError("step must be nonzero")
        count = int(round((stop - start) / step)) + 1
        return [round(start + i * step, 12) for i in range(max(count, 0))]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from e


def parse_ints(text: str) -> List[int]:
    return [int(v) for v in parse_floats(text)]


def load_mixture(value: str) -> MixtureSpec:
    if value in PRESETS:
        return PRESETS[value]()
    path = Path(value)
    if not path.is_file():
        raise UsageError(f"mixture file not found: {value}")
    return MixtureSpec.model_validate(read_json(path))


def load_config(path: str) -> ExperimentConfig:
    try:
        payload = read_json(path)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path} is not valid JSON: {e}") from None
    return ExperimentConfig.model_validate(payload)


def variant_from(args) -> StatVariant:
    return StatVariant(kind=args.variant, l=args.l, eps=args.variant_eps)


def graph_config_from(args) -> GraphConfig:
    return GraphConfig(
        method=args.method, k=args.k, lam=args.lam, l=args.l, B=args.B,
        variant=args.variant, variant_eps=args.variant_eps,
        eps=args.eps, eps_scale=args.eps_scale,
        weight=args.weight, sigma=args.sigma, sigma_scale=args.sigma_scale,
    )


def _emit(payload, out: Optional[str]) -> None:
    if out:
        write_json(out, payload)
    else:
        sys.stdout.write(dumps_json(payload))


# Subcommands

def cmd_gen(args) -> int:
    if args.two_moons is not None:
        dataset = data_service.gen_two_moons_gaussian(args.n, args.two_moons, args.noise, args.seed)
    else:
        dataset = data_service.gen_gaussian_mixture(load_mixture(args.mixture), args.n, args.seed)
    data_service.save_dataset(dataset, args.out)
    logger.info("Wrote %d points to %s", dataset.n, args.out)
    return EXIT_OK


def cmd_rank(args) -> int:
    dataset = data_service.load_dataset(args.input)
    ranks = rank_service.compute_ranks_ustat(dataset, variant_from(args), B=args.B, seed=args.seed)
    rank_service.write_ranks(ranks, args.out)
    return EXIT_OK


def cmd_build(args) -> int:
    dataset = data_service.load_dataset(args.input)
    config = graph_config_from(args)
    ranks = None
    if config.method == GraphBuilder.RMD:
        if args.ranks:
            ranks = rank_service.read_ranks(args.ranks, config.stat_variant(), B=args.B, seed=args.seed)
        else:
            ranks = rank_service.compute_ranks_ustat(dataset, config.stat_variant(), B=args.B, seed=args.seed)
    graph = graph_service.build_graph(dataset, config, ranks)
    graph_service.save_graph(graph, args.out)
    logger.info("Wrote graph with %d edges to %s", graph.n_edges, args.out)
    return EXIT_OK


def cmd_cluster(args) -> int:
    graph = graph_service.load_graph(args.graph)
    partition = spectral_service.spectral_cluster(graph, args.K, normalized=args.normalized, seed=args.seed)
    spectral_service.write_partition(partition, args.out)
    report = spectral_service.cut_metrics(graph, partition)
    write_json(Path(args.out).with_suffix(".json"), report)
    return EXIT_OK


def cmd_ssl(args) -> int:
    graph = graph_service.load_graph(args.graph)
    labels = ssl_service.read_labels(args.labels, K=args.K)
    result = ssl_service.grf_propagate(graph, labels)
    spectral_service.write_partition(result.prediction, args.out)
    return EXIT_OK


def cmd_select(args) -> int:
    dataset = data_service.load_dataset(args.input)
    if args.mode == "lambda":
        weight = graph_service.weight_scheme(dataset, graph_config_from(args))
        result = selection_service.optimize_lambda(
            dataset, args.k, args.l or args.k, B=args.B, weight=weight, delta=args.delta,
            lambda_grid=args.grid, K=args.K, seed=args.seed, normalized=args.normalized,
            variant=StatVariant(kind=args.variant, l=args.l or args.k, eps=args.variant_eps),
        )
    else:
        result = selection_service.optimize_baseline(
            dataset, args.baseline, args.k_grid, args.sigma_exponents, delta=args.delta,
            K=args.K, seed=args.seed, normalized=args.normalized,
        )
    write_json(args.out, {
        "chosen": result.chosen,
        "objective": result.objective,
        "trace": [entry.model_dump(mode="json") for entry in result.trace],
    })
    if args.partition:
        spectral_service.write_partition(result.partition, args.partition)
    return EXIT_OK


def cmd_sweep_delta(args) -> int:
    dataset = data_service.load_dataset(args.input)
    weight = graph_service.weight_scheme(dataset, graph_config_from(args))
    curve = selection_service.delta_sweep(
        dataset, args.k, args.l or args.k, args.deltas, B=args.B, weight=weight,
        lambda_grid=args.grid, K=args.K, seed=args.seed, normalized=args.normalized,
        rel_tol=args.rel_tol, position_tol=args.position_tol,
        variant=StatVariant(kind=args.variant, l=args.l or args.k, eps=args.variant_eps),
    )
    pipeline_service.write_delta_curve(curve, args.out)
    write_json(Path(args.out).with_suffix(".json"), curve.flat_segments)
    return EXIT_OK


def cmd_sweep_cutline(args) -> int:
    if args.input:
        source = data_service.load_dataset(args.input)
    else:
        source = DataSourceConfig(kind="mixture", mixture=load_mixture(args.mixture), n=args.n)
    rows = pipeline_service.sweep_cutline(source, graph_config_from(args), args.axis, args.positions,
                                          seeds=args.seeds, seed=args.seed)
    pipeline_service.write_cutline(rows, args.out)
    return EXIT_OK


def cmd_limit_check(args) -> int:
    report = theory_service.limit_check(
        load_mixture(args.mixture), args.cut_axis, args.cut_at, args.lam,
        n=args.n, seeds=args.seeds, seed=args.seed, k=args.k, l=args.l, B=args.B,
    )
    _emit(report, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    partition = spectral_service.read_partition(args.pred)
    truth = data_service.load_dataset(args.truth)
    if truth.labels is None:
        raise UsageError(f"{args.truth} has no label column")
    if args.labels:
        labelled = ssl_service.read_labels(args.labels)
        mask = [True] * truth.n
        for i in labelled.indices:
            mask[int(i)] = False
        report = evaluation_service.classification_error(partition, truth.labels, mask)
    else:
        report = evaluation_service.clustering_error(partition, truth.labels)
    _emit(report, args.out)
    return EXIT_OK


def cmd_trials(args) -> int:
    config = load_config(args.config)
    report = evaluation_service.run_trials(config, args.T, args.seed)
    _emit(report, args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    config = load_config(args.config)
    result = pipeline_service.run_pipeline(config, args.out_dir)
    if not result.ok:
        logger.error("Run failed in stage '%s': %s", result.failed_stage, result.error)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_imbalance_sweep(args) -> int:
    config = load_config(args.config)
    rows = evaluation_service.imbalance_sweep(config, args.ratios, args.total, args.T, args.seed)
    write_csv(args.out, ["ratio", "method", "mean_error", "std_error"], rows)
    return EXIT_OK


# Parser

def _add_graph_args(p: argparse.ArgumentParser, method_default: str = "knn") -> None:
    p.add_argument("--method", choices=[m.value for m in GraphBuilder], default=method_default)
    p.add_argument("--k", type=int, default=30, help="Neighbour count (default 30)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="Degree modulation in [0, 1]")
    _add_rank_args(p)
    p.add_argument("--weight", choices=[w.value for w in WeightKind], default=WeightKind.UNIT.value)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--sigma-scale", type=float, default=None, help="sigma as a multiple of the mean k-NN distance")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--eps-scale", type=float, default=None, help="eps as a multiple of the mean k-NN distance")


def _add_rank_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--l", type=int, default=None, help="Statistic neighbour scale (default: k)")
    p.add_argument("--B", type=int, default=rank_service.DEFAULT_RESAMPLES, help="Resamples")
    p.add_argument("--variant", choices=[v.value for v in StatVariantKind], default=StatVariantKind.AVG_KNN.value)
    p.add_argument("--variant-eps", type=float, default=None, help="Radius for eps-count")


def _add_cluster_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--K", type=int, default=2, help="Number of clusters")
    p.add_argument("--normalized", action="store_true", help="Use the normalized Laplacian")


def build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rmdgraph", description="Rank-modulated degree graph toolkit")
    ap.add_argument("--log-level", default=None, help="Overrides RMDGRAPH_LOG_LEVEL")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="Generate a synthetic dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mixture", help="Mixture JSON file or preset (fig1, three-gaussian)")
    src.add_argument("--two-moons", type=parse_floats, metavar="F0,F1,F2", help="Two moons plus blob shares")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("rank", help="Density ranks by half-split resampling")
    p.add_argument("--in", dest="input", required=True)
    _add_rank_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank, l=30)

    p = sub.add_parser("build", help="Build a graph")
    p.add_argument("--in", dest="input", required=True)
    _add_graph_args(p)
    p.add_argument("--ranks", help="Ranks CSV for the rmd method (computed when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("cluster", help="Spectral clustering of a graph")
    p.add_argument("--graph", required=True)
    _add_cluster_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("ssl", help="Gaussian random field label propagation")
    p.add_argument("--graph", required=True)
    p.add_argument("--labels", required=True, help="CSV with index,class")
    p.add_argument("--K", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ssl)

    p = sub.add_parser("select", help="Constrained model selection")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--mode", choices=["lambda", "baseline"], default="lambda")
    p.add_argument("--delta", type=float, default=selection_service.DEFAULT_DELTA)
    p.add_argument("--grid", type=parse_floats, default=list(selection_service.DEFAULT_LAMBDA_GRID))
    p.add_argument("--baseline", choices=["knn", "full-rbf", "eps"], default="knn")
    p.add_argument("--k-grid", type=parse_ints, default=list(selection_service.DEFAULT_K_GRID))
    p.add_argument("--sigma-exponents", type=parse_ints, default=list(selection_service.DEFAULT_SIGMA_EXPONENTS))
    _add_graph_args(p, method_default="rmd")
    _add_cluster_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--partition", help="Also write the chosen partition CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("sweep-delta", help="Optimal cut as the size threshold is relaxed")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--deltas", type=parse_floats, required=True, help="Descending, e.g. 0.30,0.25,0.20")
    p.add_argument("--grid", type=parse_floats, default=list(selection_service.DEFAULT_LAMBDA_GRID))
    p.add_argument("--rel-tol", type=float, default=selection_service.FLAT_REL_TOL)
    p.add_argument("--position-tol", type=float, default=selection_service.FLAT_POSITION_TOL)
    _add_graph_args(p, method_default="rmd")
    _add_cluster_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_delta)

    p = sub.add_parser("sweep-cutline", help="Cut values of axis-aligned hyperplanes")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="input")
    src.add_argument("--mixture", help="Mixture JSON file or preset; redrawn per seed")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--axis", type=int, default=0)
    p.add_argument("--positions", type=parse_floats, required=True, help="e.g. 0:6:0.25")
    p.add_argument("--seeds", type=int, default=20)
    _add_graph_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep_cutline)

    p = sub.add_parser("limit-check", help="Scaled RatioCut against its limit")
    p.add_argument("--mixture", required=True)
    p.add_argument("--cut-axis", type=int, default=0)
    p.add_argument("--cut-at", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--k", type=int, default=None, help="Default ceil(n^0.6 / 2)")
    p.add_argument("--l", type=int, default=None)
    p.add_argument("--B", type=int, default=rank_service.DEFAULT_RESAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_limit_check)

    p = sub.add_parser("eval", help="Error rate of a partition")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True, help="Dataset CSV with a label column")
    p.add_argument("--labels", help="Labelled set; scores only the other points, ids as given")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("trials", help="Seeded trials of an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_trials)

    p = sub.add_parser("run", help="Run the full pipeline of an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("imbalance-sweep", help="Error rates over class ratios, k-NN against RMD")
    p.add_argument("--config", required=True)
    p.add_argument("--ratios", type=parse_floats, required=True)
    p.add_argument("--total", type=int, required=True)
    p.add_argument("--T", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_imbalance_sweep)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_argparser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except (ValidationError, UsageError) as e:
        logger.error("Invalid input: %s", e)
        return EXIT_USAGE
    except RMDGraphError as e:
        logger.error("%s", e)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
