"""Command-line entry point: train, bench, synth, gradcheck, count."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import statistics
import sys
from pathlib import Path

from .config import (
    ARCH_KINDS,
    LEAVES,
    ConfigError,
    ExperimentConfig,
    build_dataset,
    build_spec,
    build_train,
    leaf_aliases,
    parse_config,
    parse_value,
)
from .data_io import save_cache
from .model import ModelSpec, param_count
from .training import RepeatResult, repeat_runs, summarize
from .verification import run_suite

METRICS_HEADER = ["model", "seed", "epoch", "train_loss", "train_acc", "val_acc", "test_acc"]
SUMMARY_HEADER = ["model", "params", "mean_test_acc", "std_test_acc", "mean_epochs_to_95"]
BENCH_ARCHS = ("gcn", "resgcn", "mpgcn")
SHARED_KEYS = [("dataset", None), ("model", "hidden"), ("train", "epochs"), ("train", "seeds")]


def fmt(x) -> str:
    """Shortest round-trip text for floats, plain text otherwise."""
    return repr(float(x)) if isinstance(x, float) else str(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def metrics_csv(model: str, result: RepeatResult) -> dict[int, str]:
    return {
        run.seed: _csv_text(
            METRICS_HEADER,
            [(model, run.seed, r.epoch, r.train_loss, r.train_acc, r.val_acc, r.test_acc) for r in run.records],
        )
        for run in result.runs
    }


def summary_row(model: str, params: int, result: RepeatResult) -> list:
    e95 = statistics.fmean(r.epochs_to_95pct_val for r in result.runs)
    return [model, params, result.mean, result.std, e95]


def check_shared(configs: list[ExperimentConfig]) -> None:
    base = configs[0]
    for cfg in configs[1:]:
        for section, key in SHARED_KEYS:
            a = getattr(base, section) if key is None else getattr(base, section)[key]
            b = getattr(cfg, section) if key is None else getattr(cfg, section)[key]
            if a != b:
                where = section if key is None else f"{section}.{key}"
                raise ConfigError(f"bench configs disagree on {where}: {base.label} vs {cfg.label}")


def run_models(configs: list[ExperimentConfig], out: ExperimentConfig, echo: ExperimentConfig):
    """Train every config, then write metrics, summary and config echo."""
    ds = build_dataset(configs[0])
    results = []
    for cfg in configs:
        spec = build_spec(cfg, ds.features.shape[1], ds.num_classes)
        logging.info("training %s (%d params) on %s", cfg.label, param_count(spec), ds.name)
        results.append((cfg.label, param_count(spec), repeat_runs(spec, ds, build_train(cfg))))

    metrics_dir = Path(out.output["metrics_dir"])
    summary = Path(out.output["summary"])
    metrics_dir.mkdir(parents=True, exist_ok=True)
    summary.parent.mkdir(parents=True, exist_ok=True)
    for label, _, res in results:
        for seed, text in metrics_csv(label, res).items():
            (metrics_dir / f"{label}_seed{seed}.csv").write_text(text)
    rows = [summary_row(label, params, res) for label, params, res in results]
    summary.write_text(_csv_text(SUMMARY_HEADER, rows))
    extra = [
        (label, statistics.fmean(r.best_val_test_acc for r in res.runs),
         float(statistics.median(r.epochs_to_95pct_val for r in res.runs)))
        for label, _, res in results
    ]
    summary.with_name(summary.stem + ".bestval.csv").write_text(
        _csv_text(["model", "mean_best_val_test_acc", "median_epochs_to_95"], extra))
    summary.with_name(summary.name + ".config.json").write_text(echo.to_json())
    return rows


def print_table(rows) -> None:
    print(f"{'model':<8} {'params':>9} {'test acc (mean ± sample std)':>30} {'epochs to 95% val':>18}")
    for model, params, mean, std, e95 in rows:
        print(f"{model:<8} {params:>9d} {f'{mean:.4f} ± {std:.4f}':>30} {e95:>18.1f}")


def cmd_train(cfg: ExperimentConfig) -> int:
    print_table(run_models([cfg], cfg, cfg))
    return 0


def cmd_bench(cfg: ExperimentConfig, configs: list[ExperimentConfig] | None = None) -> int:
    configs = configs or [cfg.with_arch(a) for a in BENCH_ARCHS]
    check_shared(configs)
    print_table(run_models(configs, cfg, cfg))
    return 0


def cmd_synth(cfg: ExperimentConfig, out: str) -> int:
    if cfg.dataset["kind"] != "sbm":
        raise ConfigError("synth only generates SBM datasets")
    ds = build_dataset(cfg)
    save_cache(ds, out)
    print(f"wrote {out}: {ds.num_nodes} nodes, {ds.adjacency.nnz} stored edges, "
          f"{ds.features.shape[1]} features, {ds.num_classes} classes")
    return 0


def cmd_gradcheck(seed: int) -> int:
    results = run_suite(seed)
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {r.name:<26} max_rel_err={r.max_rel_err:.3e} tol={r.tol:.0e}")
    return 0 if all(r.ok for r in results) else 1


def cmd_count(args) -> int:
    kind = ARCH_KINDS[args.arch]
    extra = {"depth": args.depth} if kind != "multipath" else {
        "paths": tuple(args.paths), "shared_stem": args.shared_stem}
    spec = ModelSpec(kind, args.in_dim, args.hidden, args.classes, bias=not args.no_bias, **extra).validate()
    print(f"params={param_count(spec)} conv_params={param_count(spec, conv_only=True)}")
    return 0


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace("[", "").replace("]", "").split(",") if t.strip()]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config with dataset/model/train/output sections")
    aliases = leaf_aliases()
    bare = {v: k for k, v in aliases.items()}
    for dotted in sorted(LEAVES):
        names = [f"--{dotted}"]
        if dotted in bare:
            names.append(f"--{bare[dotted]}")
        p.add_argument(*names, dest=f"cfg:{dotted}", type=parse_value, metavar="VALUE",
                       help="overrides the config file value")


def _overrides(args) -> dict:
    return {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:") and v is not None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpgcn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _add_config_flags(sub.add_parser("train", help="train one model over every seed"))
    _add_config_flags(sub.add_parser("bench", help="compare gcn, resgcn and mpgcn on one dataset"))
    synth = sub.add_parser("synth", help="write an SBM dataset in the binary cache format")
    _add_config_flags(synth)
    synth.add_argument("--out", required=True)

    gc = sub.add_parser("gradcheck", help="finite-difference check of every tape op and model")
    gc.add_argument("--seed", type=int, default=0)

    count = sub.add_parser("count", help="print the trainable parameter count of a model")
    count.add_argument("--arch", choices=sorted(ARCH_KINDS), required=True)
    count.add_argument("--in-dim", type=int, required=True)
    count.add_argument("--hidden", type=int, required=True)
    count.add_argument("--classes", type=int, required=True)
    count.add_argument("--depth", type=int, default=3)
    count.add_argument("--paths", type=_int_list, default=[1, 2])
    count.add_argument("--shared-stem", type=int, default=0)
    count.add_argument("--no-bias", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "gradcheck":
            return cmd_gradcheck(args.seed)
        if args.command == "count":
            return cmd_count(args)
        cfg = parse_config(args.config, _overrides(args), bench=args.command == "bench")
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        return cmd_synth(cfg, args.out)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"mpgcn {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
