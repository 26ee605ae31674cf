"""Command-line front end: reproducible pooling/selection pipelines.

Every command echoes a one-line JSON summary (including the seed it
used) to stdout, and every artifact it writes embeds the invoking
configuration, so a run can be reproduced from any of its outputs.
Numeric CSV cells are fixed at 6 decimals to make reruns diffable.

Exit codes: 0 success, 1 usage/validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from labelpool import __version__
from labelpool.core import (
    Dataset,
    LabelSpace,
    Pooling,
    _atomic_write_text,
    load_dataset,
    save_dataset,
)
from labelpool.divergence import KINDS

__all__ = ["run", "main", "report_label_histogram", "parse_grid"]

_LOSS_BY_FLAG = {"kl": "mean_kl", "loglik": "multinomial_loglik"}


class CliError(Exception):
    """Usage or validation failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(f"{self.format_usage()}error: {message}")


def _default_jobs() -> int:
    raw = os.environ.get("LABELPOOL_JOBS", "1")
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"LABELPOOL_JOBS must be an integer, got {raw!r}")


def parse_grid(text: str) -> np.ndarray:
    """Grid syntax: 'start:stop:step' (stop inclusive) or 'v1,v2,...'."""
    try:
        if ":" in text:
            start, stop, step = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ValueError("step must be positive")
            values = np.arange(start, stop + step / 2, step)
        else:
            values = np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise CliError(f"bad grid {text!r}: {exc}")
    if values.size == 0:
        raise CliError(f"bad grid {text!r}: empty range")
    return np.round(values, 12)


def _public_config(args: argparse.Namespace) -> dict:
    config = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "config") or key.startswith("_"):
            continue
        if isinstance(value, np.ndarray):
            value = value.tolist()
        config[key] = value
    config["version"] = __version__
    return config


def _write_json(path, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=1, sort_keys=True, default=str) + "\n")


def _echo(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True, default=str))


def _format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6f}"


def _csv_text(columns: list[str], rows, config: dict) -> str:
    lines = [
        "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":"), default=str),
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_format_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def _load_pooling_artifact(path) -> tuple[Pooling, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        return Pooling.from_json(payload), payload
    except KeyError as exc:
        raise CliError(f"{path}: not a pooling artifact (missing {exc})")


def _pooling_artifact(pooling: Pooling, dataset: Dataset, args) -> dict:
    """Pooling JSON enriched with the label space, per-label totals and
    per-item vote counts so downstream commands can run from it alone."""
    payload = pooling.to_json()
    payload["labels"] = list(dataset.label_space.labels)
    payload["label_totals"] = dataset.counts.sum(axis=0).tolist()
    payload["vote_counts"] = dataset.vote_counts.tolist()
    payload["config"] = _public_config(args)
    return payload


def report_label_histogram(dataset: Dataset):
    """Rows (label, total count, fraction) over all annotation votes."""
    totals = dataset.counts.sum(axis=0)
    grand = int(totals.sum())
    return [
        (label, int(totals[y]), totals[y] / grand)
        for y, label in enumerate(dataset.label_space.labels)
    ]


# ---------------------------------------------------------------------------
# Command handlers
# ---------------------------------------------------------------------------


def _cmd_ingest(args) -> None:
    dataset = load_dataset(args.data, format=args.format)
    save_dataset(dataset, args.out)
    m = dataset.vote_counts
    _echo(
        {
            "command": "ingest",
            "n": dataset.n,
            "d": dataset.d,
            "labels": list(dataset.label_space.labels),
            "m_min": int(m.min()),
            "m_max": int(m.max()),
            "has_features": dataset.features is not None,
            "out": str(args.out),
        }
    )


def _cmd_pool_nbp(args) -> None:
    from labelpool.nbp import NbpConfig, build_nbp_pooling, neighborhood_profile

    dataset = load_dataset(args.data)
    config = NbpConfig(
        radius=args.radius,
        measure=args.divergence,
        alpha=args.alpha,
        refine_alpha=args.refine_alpha,
    )
    pooling, stats = build_nbp_pooling(dataset, config)
    _write_json(args.out, _pooling_artifact(pooling, dataset, args))
    if (args.profile_grid is None) != (args.profile_out is None):
        raise CliError("--profile-grid and --profile-out must be given together")
    if args.profile_grid is not None:
        grid = parse_grid(args.profile_grid)
        profile = neighborhood_profile(dataset, grid, config)
        rows = zip(profile["r"], profile["mean_kl"], profile["n_median"], profile["n_max"])
        text = _csv_text(
            ["r", "mean_kl", "n_median", "n_max"],
            [(r, kl, med, int(mx)) for r, kl, med, mx in rows],
            _public_config(args),
        )
        _atomic_write_text(args.profile_out, text)
    _echo(
        {
            "command": "pool",
            "method": "nbp",
            "p": pooling.p,
            "n_median": stats.median,
            "n_max": stats.maximum,
            "out": str(args.out),
        }
    )


def _cmd_pool_cluster(args) -> None:
    from labelpool.clustering import FitConfig, fit_median_of_trials, pooling_from_fit

    dataset = load_dataset(args.data)
    config = FitConfig(p=args.p, max_iter=args.max_iter, tol=args.tol, seed=args.seed)
    fit = fit_median_of_trials(
        dataset, args.model, config, args.trials, loss_alpha=args.loss_alpha, n_jobs=args.jobs
    )
    pooling = pooling_from_fit(fit, dataset, args.refine_alpha)
    payload = _pooling_artifact(pooling, dataset, args)
    payload["fit"] = {
        "kind": fit.kind,
        "p": fit.p,
        "objective": fit.objective,
        "n_iter": fit.n_iter,
        "converged": fit.converged,
        "seed": fit.seed,
    }
    _write_json(args.out, payload)
    if args.model_out is not None:
        _write_json(args.model_out, fit.to_json())
    _echo(
        {
            "command": "pool",
            "method": f"cluster:{args.model}",
            "p": pooling.p,
            "objective": fit.objective,
            "seed": args.seed,
            "out": str(args.out),
        }
    )


def _write_selection(args, report) -> None:
    _atomic_write_text(args.out + ".csv", report.to_csv_text())
    payload = report.to_json_dict()
    payload["config"] = _public_config(args)
    _write_json(args.out + ".json", payload)


def _cmd_select_clusters(args) -> None:
    from labelpool.selection import select_cluster_count

    dataset = load_dataset(args.data)
    if not 1 <= args.p_min <= args.p_max:
        raise CliError("need 1 <= --p-min <= --p-max")
    report = select_cluster_count(
        dataset,
        args.model,
        p_grid=range(args.p_min, args.p_max + 1),
        trials=args.trials,
        loss=_LOSS_BY_FLAG[args.loss],
        b=args.b,
        seed=args.seed,
        loss_alpha=args.loss_alpha,
        refine_alpha=args.refine_alpha,
        n_jobs=args.jobs,
    )
    _write_selection(args, report)
    _echo(
        {
            "command": "select",
            "what": "clusters",
            "model": args.model,
            "chosen_p": report.chosen,
            "seed": args.seed,
            "out_csv": args.out + ".csv",
            "out_json": args.out + ".json",
        }
    )


def _cmd_select_radius(args) -> None:
    from labelpool.selection import select_radius

    dataset = load_dataset(args.data)
    report = select_radius(
        dataset,
        parse_grid(args.grid),
        sampler_kind=args.sampler,
        loss=_LOSS_BY_FLAG[args.loss],
        b=args.b,
        seed=args.seed,
        measure=args.divergence,
        comparison_alpha=args.alpha,
        loss_alpha=args.loss_alpha,
        refine_alpha=args.refine_alpha,
        n_jobs=args.jobs,
    )
    _write_selection(args, report)
    _echo(
        {
            "command": "select",
            "what": "radius",
            "sampler": args.sampler,
            "chosen_r": report.chosen,
            "no_elbow": report.meta["no_elbow"],
            "seed": args.seed,
            "out_csv": args.out + ".csv",
            "out_json": args.out + ".json",
        }
    )


def _sample_m(args, default_m, n: int, source_n: int):
    if args.m is not None:
        return args.m
    if default_m is not None and n == source_n:
        return np.asarray(default_m, dtype=np.int64)
    raise CliError("--m is required when --n differs from the source size")


def _cmd_sample(args) -> None:
    from labelpool.samplers import (
        GenerativeConfig,
        bootstrap_sampler,
        cluster_sampler,
        generate_population_sample,
        nbp_sampler,
    )

    generator = args.generator
    if generator in ("cluster", "nbp"):
        if args.pooling is None:
            raise CliError(f"--pooling is required for --generator {generator}")
        pooling, payload = _load_pooling_artifact(args.pooling)
        n = args.n if args.n is not None else pooling.n
        m = _sample_m(args, payload.get("vote_counts"), n, pooling.n)
        names = payload.get("labels") or [f"L{y}" for y in range(pooling.refined.shape[1])]
        sampler = cluster_sampler if generator == "cluster" else nbp_sampler
        synth = sampler(pooling, n, m, args.seed)
        out_dataset = synth.to_dataset(LabelSpace(tuple(names)))
    elif generator == "bootstrap":
        if args.data is None:
            raise CliError("--data is required for --generator bootstrap")
        dataset = load_dataset(args.data)
        n = args.n if args.n is not None else dataset.n
        m = _sample_m(args, dataset.vote_counts, n, dataset.n)
        synth = bootstrap_sampler(dataset, n, m, args.seed)
        out_dataset = synth.to_dataset(dataset.label_space)
    else:  # population
        if args.data is None:
            raise CliError("--data is required for --generator population")
        dataset = load_dataset(args.data)
        if args.n is not None and args.n != dataset.n:
            raise CliError("population generator draws one item per source item; drop --n")
        m = _sample_m(args, dataset.vote_counts, dataset.n, dataset.n)
        config = GenerativeConfig(
            true_dists=dataset.distributions(args.alpha),
            reliabilities=np.full(args.annotators, args.reliability),
            m=m,
            labels=dataset.label_space.labels,
        )
        out_dataset = generate_population_sample(config, args.seed)
        n = dataset.n
    save_dataset(out_dataset, args.out)
    _echo(
        {
            "command": "sample",
            "generator": generator,
            "n": int(n),
            "seed": args.seed,
            "out": str(args.out),
        }
    )


def _targets_for(dataset: Dataset, pooling_path, alpha: float) -> np.ndarray:
    if pooling_path is not None:
        pooling, _ = _load_pooling_artifact(pooling_path)
        if pooling.n != dataset.n:
            raise CliError("pooling does not match the dataset (item counts differ)")
        return pooling.refined_per_item()
    return dataset.distributions(alpha)


def _cmd_train(args) -> None:
    from labelpool.predict import TrainConfig, train

    dataset = load_dataset(args.data)
    targets = _targets_for(dataset, args.pooling, args.alpha)
    config = TrainConfig(learning_rate=args.lr, epochs=args.epochs, seed=args.seed)
    model = train(
        dataset.features, targets, config, labels=dataset.label_space.labels
    )
    model.save(args.out)
    _echo(
        {
            "command": "train",
            "targets": "pooling" if args.pooling is not None else "empirical",
            "epochs_run": int(model.loss_trace.size - 1),
            "initial_loss": float(model.loss_trace[0]),
            "final_loss": float(model.loss_trace[-1]),
            "seed": args.seed,
            "out": str(args.out),
        }
    )


def _cmd_evaluate(args) -> None:
    from labelpool.predict import SoftmaxModel, evaluate

    dataset = load_dataset(args.data)
    model = SoftmaxModel.load(args.model)
    targets = _targets_for(dataset, args.pooling, args.alpha)
    mean_kl, accuracy = evaluate(model, dataset.features, targets)
    result = {
        "mean_kl": mean_kl,
        "accuracy": accuracy,
        "n": dataset.n,
        "config": _public_config(args),
    }
    if args.out is not None:
        _write_json(args.out, result)
    _echo({"command": "evaluate", "mean_kl": mean_kl, "accuracy": accuracy})


def _cmd_report(args) -> None:
    if args.data is None and args.pooling is None:
        raise CliError("report needs --data or --pooling")
    if args.data is not None:
        dataset = load_dataset(args.data)
        rows = report_label_histogram(dataset)
    else:
        _, payload = _load_pooling_artifact(args.pooling)
        totals = payload.get("label_totals")
        if totals is None:
            raise CliError("pooling artifact lacks label totals; pass --data instead")
        names = payload.get("labels") or [f"L{y}" for y in range(len(totals))]
        grand = float(sum(totals))
        rows = [(name, int(t), t / grand) for name, t in zip(names, totals)]
    text = _csv_text(["label", "total_count", "fraction"], rows, _public_config(args))
    if args.out is not None:
        _atomic_write_text(args.out, text)
        _echo({"command": "report", "rows": len(rows), "out": str(args.out)})
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_common(parser, *, seed=True, jobs=False):
    parser.add_argument("--config", default=None, help="JSON file supplying flag defaults")
    if seed:
        parser.add_argument("--seed", type=int, default=0)
    if jobs:
        parser.add_argument(
            "--jobs", type=int, default=_default_jobs(), help="worker count (env LABELPOOL_JOBS)"
        )


def build_parser() -> _Parser:
    parser = _Parser(prog="labelpool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"labelpool {__version__}")
    sub = parser.add_subparsers(dest="_command", required=True, metavar="command")

    p = sub.add_parser("ingest", help="validate a dataset and write the canonical jsonl form")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("jsonl", "csv"), default=None)
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_ingest)

    pool = sub.add_parser("pool", help="build a pooling").add_subparsers(
        dest="_method", required=True, metavar="method"
    )
    p = pool.add_parser("nbp", help="neighborhood pooling at a fixed radius")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, required=True)
    p.add_argument("--divergence", choices=KINDS, default="kl")
    p.add_argument("--alpha", type=float, default=0.01, help="comparison smoothing")
    p.add_argument("--refine-alpha", type=float, default=0.0)
    p.add_argument("--profile-grid", default=None, help="radius grid, e.g. 0.5:10:0.5")
    p.add_argument("--profile-out", default=None, help="CSV of r,mean_kl,n_median,n_max")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_pool_nbp)

    p = pool.add_parser("cluster", help="model-based pooling (median of seeded trials)")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", choices=("fmm", "gmm", "kmeans", "lda"), required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--loss-alpha", type=float, default=0.01)
    p.add_argument("--refine-alpha", type=float, default=0.0)
    p.add_argument("--model-out", default=None, help="also write the fitted model JSON")
    _add_common(p, jobs=True)
    p.set_defaults(func=_cmd_pool_cluster)

    select = sub.add_parser("select", help="pick a pooling hyperparameter").add_subparsers(
        dest="_what", required=True, metavar="what"
    )
    p = select.add_parser("clusters", help="cluster count by standardized difference")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="prefix; writes <out>.csv and <out>.json")
    p.add_argument("--model", choices=("fmm", "gmm", "kmeans", "lda"), required=True)
    p.add_argument("--p-min", type=int, default=1)
    p.add_argument("--p-max", type=int, default=40)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--b", type=int, default=1000)
    p.add_argument("--loss", choices=tuple(_LOSS_BY_FLAG), default="kl")
    p.add_argument("--loss-alpha", type=float, default=0.01)
    p.add_argument("--refine-alpha", type=float, default=0.01)
    _add_common(p, jobs=True)
    p.set_defaults(func=_cmd_select_clusters)

    p = select.add_parser("radius", help="NBP radius by standardized-difference elbow")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="prefix; writes <out>.csv and <out>.json")
    p.add_argument("--grid", required=True, help="e.g. 0.5:10:0.5")
    p.add_argument("--sampler", choices=("nbp", "bootstrap"), default="nbp")
    p.add_argument("--b", type=int, default=1000)
    p.add_argument("--loss", choices=tuple(_LOSS_BY_FLAG), default="kl")
    p.add_argument("--divergence", choices=KINDS, default="kl")
    p.add_argument("--alpha", type=float, default=0.01, help="comparison smoothing")
    p.add_argument("--loss-alpha", type=float, default=0.01)
    p.add_argument("--refine-alpha", type=float, default=0.01)
    _add_common(p, jobs=True)
    p.set_defaults(func=_cmd_select_radius)

    p = sub.add_parser("sample", help="draw a synthetic dataset")
    p.add_argument("--generator", choices=("cluster", "nbp", "bootstrap", "population"), required=True)
    p.add_argument("--pooling", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=0.0, help="population true-dist smoothing")
    p.add_argument("--reliability", type=float, default=1.0)
    p.add_argument("--annotators", type=int, default=100)
    _add_common(p)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("train", help="fit the soft-label predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--pooling", default=None, help="targets = refined distributions")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.0, help="target smoothing without --pooling")
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a trained predictor")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--pooling", default=None)
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--out", default=None)
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="overall label histogram CSV")
    p.add_argument("--data", default=None)
    p.add_argument("--pooling", default=None)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    _add_common(p, seed=False)
    p.set_defaults(func=_cmd_report)

    return parser


def _walk_parsers(parser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                yield from _walk_parsers(sub)


def _apply_config_file(parser: _Parser, argv: list[str]) -> None:
    path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif token.startswith("--config="):
            path = token.split("=", 1)[1]
    if path is None:
        return
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict):
        raise CliError(f"{path}: config file must hold a JSON object")
    defaults = {k.replace("-", "_"): v for k, v in payload.items()}
    for sub in _walk_parsers(parser):
        sub.set_defaults(**defaults)
        # A value from the config file satisfies a required flag.
        for action in sub._actions:
            if action.dest in defaults:
                action.required = False


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except CliError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
