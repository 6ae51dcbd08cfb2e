"""Command-line entry points: run, synth, check-theorem, eval, export-heatmap."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time

import numpy as np

from .analysis import run_counting_trials, run_theorem_trials
from .encoder import make_random_encoder, save_encoder
from .evaluation import read_scores, report_from_records
from .graphon import auto_resolution, estimate_graphon, mixup, save_graphon_csv
from .graphs import load_dataset, save_dataset
from .pipeline import (
    PipelineConfig,
    dump_dictionaries,
    export_subgroup_heatmaps,
    load_config_file,
    run_baca,
)
from .synthbench import default_spec, load_spec, make_benchmark

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--k", type=int, help="number of retrieved keys per query")
    p.add_argument("--beta", type=float, help="calibration weight in the fused score")
    p.add_argument("--lr", type=float, help="gradient descent step size")
    p.add_argument("--iters", type=int, help="training iterations")
    p.add_argument("--queue-size", type=int, dest="queue_size")
    p.add_argument("--bank-size", type=int, dest="bank_size")
    p.add_argument("--num-mixups", type=int, dest="num_mixups")
    p.add_argument("--resolution", type=int, dest="graphon_resolution")
    p.add_argument("--quantile", type=float, dest="partition_quantile")
    p.add_argument("--usvt-c", type=float, dest="usvt_c")
    p.add_argument("--tail-mode", choices=("boundary", "extreme"), dest="tail_mode")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lambda-range", dest="lambda_range", help="lo:hi for the mixup weight")
    p.add_argument("--seed", type=int)


def _build_config(args) -> PipelineConfig:
    kwargs = {}
    if args.config:
        kwargs.update(load_config_file(args.config))
    for f in dataclasses.fields(PipelineConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            kwargs[f.name] = value
    if getattr(args, "lambda_range", None):
        lo, _, hi = args.lambda_range.partition(":")
        kwargs["lambda_lo"] = float(lo)
        kwargs["lambda_hi"] = float(hi)
    return PipelineConfig(**kwargs)


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    result = run_baca(cfg, args.encoder, args.data, score_path=args.out)
    if args.export_graphon:
        export_subgroup_heatmaps(result, args.export_graphon)
    if args.dump_dicts:
        dump_dictionaries(result, args.dump_dicts)
    if result.report is not None:
        print(result.report.to_json() if args.json else result.report.format_table())
    else:
        print(f"scored {len(result.records)} graphs (no labels; metrics skipped)")
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = load_spec(args.spec) if args.spec else default_spec()
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    ds = make_benchmark(spec)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.graphs)} graphs to {args.out}")
    if args.encoder_out:
        sizes = [g.num_nodes for g in ds.graphs]
        d_in = min(int(np.quantile(sizes, 0.5)), 16)
        enc = make_random_encoder(d_in=d_in, d_hidden=16, num_layers=5, seed=spec.seed)
        save_encoder(enc, args.encoder_out)
        print(f"wrote random {enc.num_layers}-layer encoder (d={enc.embedding_dim}) to {args.encoder_out}")
    return EXIT_OK


def _cmd_check_theorem(args) -> int:
    started = time.perf_counter()
    bound_g, bound_h = run_theorem_trials(args.trials, args.max_n, args.seed)
    counting = run_counting_trials(args.trials, args.max_n, args.seed)
    elapsed = time.perf_counter() - started
    rows = [bound_g, bound_h, counting]
    if args.json:
        print(
            json.dumps(
                {
                    "elapsed_s": elapsed,
                    "checks": [dataclasses.asdict(r) | {"pass": r.all_hold} for r in rows],
                }
            )
        )
    else:
        width = max(len(r.name) for r in rows)
        for r in rows:
            status = "PASS" if r.all_hold else "FAIL"
            print(
                f"{r.name.ljust(width)}  {status}  trials={r.trials}  "
                f"violations={r.violations}  worst_slack={r.worst_slack:.3e}"
            )
        print(f"elapsed: {elapsed:.2f}s")
    return EXIT_OK if all(r.all_hold for r in rows) else EXIT_RUNTIME


def _cmd_eval(args) -> int:
    records = read_scores(args.scores)
    report = report_from_records(records)
    print(report.to_json() if args.json else report.format_table())
    return EXIT_OK


def _cmd_export_heatmap(args) -> int:
    ds = load_dataset(args.data)
    resolution = args.resolution or auto_resolution(ds.graphs)
    written = []
    if ds.labels is not None:
        groups = {
            "id": [g for g, l in zip(ds.graphs, ds.labels) if l == 0],
            "ood": [g for g, l in zip(ds.graphs, ds.labels) if l == 1],
        }
        estimates = {}
        for name, graphs in groups.items():
            if not graphs:
                continue
            estimates[name] = estimate_graphon(graphs, resolution, args.usvt_c)
            path = f"{args.out}_{name}.csv"
            save_graphon_csv(estimates[name], path)
            written.append(path)
        if len(estimates) == 2:
            path = f"{args.out}_mix.csv"
            save_graphon_csv(mixup(estimates["id"], estimates["ood"], 0.5), path)
            written.append(path)
    else:
        w = estimate_graphon(ds.graphs, resolution, args.usvt_c)
        path = f"{args.out}.csv"
        save_graphon_csv(w, path)
        written.append(path)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="baca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full test-time calibration over a dataset")
    p_run.add_argument("--encoder", required=True, help="encoder weights JSON")
    p_run.add_argument("--data", required=True, help="line-delimited JSON dataset")
    p_run.add_argument("--out", required=True, help="score CSV output path")
    p_run.add_argument("--export-graphon", help="prefix for subgroup graphon CSVs")
    p_run.add_argument("--dump-dicts", help="path for a dictionary snapshot JSON")
    p_run.add_argument("--json", action="store_true", help="machine-readable report")
    _add_config_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_synth = sub.add_parser("synth", help="generate the synthetic benchmark")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--spec", help="benchmark spec JSON (defaults built in)")
    p_synth.add_argument("--seed", type=int)
    p_synth.add_argument("--encoder-out", dest="encoder_out", help="also write a random encoder")
    p_synth.set_defaults(func=_cmd_synth)

    p_thm = sub.add_parser("check-theorem", help="randomized bound verification")
    p_thm.add_argument("--trials", type=int, default=500)
    p_thm.add_argument("--max-n", type=int, default=12, dest="max_n")
    p_thm.add_argument("--seed", type=int, default=0)
    p_thm.add_argument("--json", action="store_true")
    p_thm.set_defaults(func=_cmd_check_theorem)

    p_eval = sub.add_parser("eval", help="recompute metrics from a score CSV")
    p_eval.add_argument("--scores", required=True)
    p_eval.add_argument("--json", action="store_true")
    p_eval.set_defaults(func=_cmd_eval)

    p_heat = sub.add_parser("export-heatmap", help="estimate and export graphon CSVs")
    p_heat.add_argument("--data", required=True)
    p_heat.add_argument("--out", required=True, help="output path prefix")
    p_heat.add_argument("--resolution", type=int, default=0)
    p_heat.add_argument("--usvt-c", type=float, default=0.2, dest="usvt_c")
    p_heat.set_defaults(func=_cmd_export_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
