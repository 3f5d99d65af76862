"""Command-line interface.

Subcommands::

    vql3d score     --gt ANN --pred PRED [--out REPORT] [--workers N]
    vql3d gen       --out DIR [--seed S] [--config CFG] [--noise-center M] ...
    vql3d stats     --gt ANN [--out STATS]
    vql3d decode    --heads HEADS.npz [--grid nx,ny,nz] [--workspace ...] [--out PRED]
    vql3d selfcheck [--seed S] [--pairs N] [--samples M]
    vql3d fuse-demo [--seed S] [--scale desk] [--variant daf] [--workers N]

Exit codes: 0 success, 1 I/O error (missing or unreadable file), 2 validation
error (bad document, infeasible configuration, failed self-check). JSON
documents are written with sorted keys so identical inputs give identical
bytes regardless of ``--workers``.
"""

from __future__ import annotations

import argparse
import functools
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import anchor_head, data_model, fusion, geom3d, metrics

EXIT_OK = 0
EXIT_IO = 1
EXIT_INVALID = 2

SELFCHECK_TOLERANCE = 0.01


class CliError(Exception):
    def __init__(self, code: int, messages):
        self.code = code
        self.messages = [messages] if isinstance(messages, str) else list(messages)
        super().__init__("; ".join(self.messages))


@dataclass
class RunConfig:
    """Options shared by the subcommands."""

    workers: int = 1
    seed: int = 0
    tap_thresholds: tuple[float, ...] = metrics.TAP_THRESHOLDS
    stap_thresholds: tuple[float, ...] = metrics.STAP_THRESHOLDS
    grid_counts: tuple[int, int, int] | None = None
    workspace: tuple | None = None
    presence_threshold: float = 0.5
    noise: dict = field(default_factory=dict)

    def problems(self) -> list[str]:
        errs = []
        if self.workers < 1:
            errs.append("--workers must be >= 1")
        for name, ths in (("tiou", self.tap_thresholds), ("stiou", self.stap_thresholds)):
            if not ths:
                errs.append(f"empty {name} threshold list")
            bad = [t for t in ths if not 0.0 < t <= 1.0]
            if bad:
                errs.append(f"{name} thresholds must lie in (0, 1], got {bad}")
        if not 0.0 <= self.presence_threshold < 1.0:
            errs.append("--presence-threshold must lie in [0, 1)")
        return errs


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError(EXIT_IO, f"no such file: {path}") from None
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None


def _write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from None


def _validated(fn, *args):
    try:
        return fn(*args)
    except data_model.ValidationError as exc:
        raise CliError(EXIT_INVALID, exc.errors) from None
    except (ValueError, TypeError, AttributeError) as exc:
        raise CliError(EXIT_INVALID, f"malformed input: {exc}") from None


def _exit_code(fn):
    """Turn a command that raises :class:`CliError` into one returning an exit code."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs) -> int:
        try:
            return fn(*args, **kwargs)
        except CliError as exc:
            for msg in exc.messages:
                print(f"vql3d: {msg}", file=sys.stderr)
            return exc.code

    return wrapper


def _check(config: RunConfig) -> None:
    errs = config.problems()
    if errs:
        raise CliError(EXIT_INVALID, errs)


# --------------------------------------------------------------------------
# commands; each returns an exit code and reports problems on stderr
# --------------------------------------------------------------------------


@_exit_code
def cmd_score(gt_path, pred_path, out_path=None, options: RunConfig | None = None) -> int:
    options = options or RunConfig()
    _check(options)
    gt_text = _read_text(gt_path)
    pred_text = _read_text(pred_path)
    anns = _validated(data_model.parse_annotations, gt_text)
    preds = _validated(data_model.parse_predictions, pred_text)
    if not anns:
        raise CliError(EXIT_INVALID, "annotation document holds no sequences")
    try:
        report = metrics.score(preds.tracks, anns, workers=options.workers,
                               tap_thresholds=options.tap_thresholds,
                               stap_thresholds=options.stap_thresholds)
    except metrics.ScoringError as exc:
        raise CliError(EXIT_INVALID, str(exc)) from None
    _write_text(out_path, dumps(report.to_dict()))
    return EXIT_OK


def _synth_config(config_path, options: RunConfig, overrides: dict) -> data_model.SynthConfig:
    base = {}
    if config_path is not None:
        try:
            base = json.loads(_read_text(config_path))
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_INVALID, f"{config_path}: {exc}") from None
        if not isinstance(base, dict):
            raise CliError(EXIT_INVALID, f"{config_path}: expected a JSON object")
    base.update({k: v for k, v in overrides.items() if v is not None})
    knob_names = {"center": "center_jitter", "size": "size_jitter", "angle": "angle_jitter",
                  "shift": "temporal_shift"}
    for knob, value in options.noise.items():
        if value is not None:
            base[knob_names[knob]] = value
    if options.grid_counts is not None:
        base["grid_counts"] = list(options.grid_counts)
    if options.workspace is not None:
        base["workspace"] = [list(options.workspace[0]), list(options.workspace[1])]
    cfg = _validated(data_model.SynthConfig.from_dict, base)
    errs = cfg.problems()
    if errs:
        raise CliError(EXIT_INVALID, errs)
    return cfg


@_exit_code
def cmd_gen(seed: int, config: data_model.SynthConfig, out_dir) -> int:
    errs = config.problems()
    if errs:
        raise CliError(EXIT_INVALID, errs)
    data = _validated(data_model.generate_synthetic, seed, config)
    echo = {"seed": seed, "generator": config.to_dict()}
    out = Path(out_dir)
    _write_text(out / "annotations.jsonl", data_model.dump_annotations(data.annotations, echo))
    _write_text(out / "oracle.jsonl", data_model.dump_predictions(data.oracle, echo))
    _write_text(out / "degraded.jsonl", data_model.dump_predictions(data.degraded, echo))
    if data.heads is not None:
        try:
            anchor_head.save_head_outputs(out / "heads.npz", data.heads, data.grid)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write heads: {exc}") from None
    return EXIT_OK


@_exit_code
def cmd_stats(gt_path, out_path=None, workspace=None) -> int:
    anns = _validated(data_model.parse_annotations, _read_text(gt_path))
    if not anns:
        raise CliError(EXIT_INVALID, "annotation document holds no sequences")
    stats = data_model.compute_stats(anns, workspace or anchor_head.DEFAULT_WORKSPACE)
    _write_text(out_path, dumps(stats.to_dict()))
    return EXIT_OK


@_exit_code
def cmd_decode(head_path, grid_config: RunConfig | None = None, out_path=None) -> int:
    options = grid_config or RunConfig()
    _check(options)
    if not Path(head_path).is_file():
        raise CliError(EXIT_IO, f"no such file: {head_path}")
    try:
        heads, grid = anchor_head.load_head_outputs(head_path)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_INVALID, f"{head_path}: {exc}") from None
    if options.grid_counts is not None or options.workspace is not None or grid is None:
        counts = options.grid_counts or (grid.counts if grid is not None
                                         else anchor_head.DEFAULT_COUNTS)
        ws = options.workspace or ((tuple(grid.lo), tuple(grid.hi)) if grid is not None
                                   else anchor_head.DEFAULT_WORKSPACE)
        grid = _validated(anchor_head.build_grid, ws, *counts)
    tracks = []
    for seq_id in sorted(heads):
        head = heads[seq_id]
        if head.center_offset.shape[1] != len(grid):
            raise CliError(EXIT_INVALID, f"{seq_id}: head has {head.center_offset.shape[1]} "
                                         f"anchors but the grid has {len(grid)}")
        tr = anchor_head.decode_track(grid, head, seq_id, threshold=options.presence_threshold)
        if tr is not None:
            tracks.append(tr)
    echo = {"grid": {"counts": list(grid.counts), "workspace": [list(grid.lo), list(grid.hi)]},
            "presence_threshold": options.presence_threshold,
            "track_rule": "longest", "confidence_rule": "mean"}
    _write_text(out_path, data_model.dump_predictions(tracks, echo))
    return EXIT_OK


def selfcheck_report(seed: int = 0, pairs: int = 200, samples: int = 2_000_000) -> dict:
    if pairs < 1:
        raise CliError(EXIT_INVALID, "--pairs must be >= 1")
    if samples < 1:
        raise CliError(EXIT_INVALID, "--samples must be >= 1")
    deviations = []
    for i, (a, b) in enumerate(geom3d.random_overlapping_pairs(seed, pairs)):
        exact = geom3d.iou3d(a, b)
        mc = geom3d.mc_iou_oracle(a, b, n=samples, seed=seed * 100_003 + i)
        deviations.append(abs(exact - mc))
    worst = max(deviations)
    return {
        "schema": "vql3d.selfcheck/1",
        "seed": seed,
        "pairs": pairs,
        "samples": samples,
        "tolerance": SELFCHECK_TOLERANCE,
        "max_deviation": worst,
        "mean_deviation": sum(deviations) / len(deviations),
        "worst_pair": deviations.index(worst),
        "passed": worst <= SELFCHECK_TOLERANCE,
    }


@_exit_code
def cmd_selfcheck(seed: int = 0, pairs: int = 200, samples: int = 2_000_000,
                  out_path=None) -> int:
    doc = selfcheck_report(seed, pairs, samples)
    _write_text(out_path, dumps(doc))
    return EXIT_OK if doc["passed"] else EXIT_INVALID


@_exit_code
def cmd_fuse_demo(seed: int = 0, scale: str = "desk", variant: str = "daf", workers: int = 1,
                  out_path=None) -> int:
    if workers < 1:
        raise CliError(EXIT_INVALID, "--workers must be >= 1")
    doc = _validated(fusion.fuse_demo, seed, scale, variant, workers)
    _write_text(out_path, dumps(doc))
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _floats(text: str, n: int | None = None) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} values, got {len(vals)}")
    return vals


def _grid(text: str) -> tuple[int, int, int]:
    vals = _floats(text, 3)
    if any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"grid counts must be integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _workspace(text: str):
    v = _floats(text, 6)
    return (v[0:3], v[3:6])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vql3d", description="3D visual query localization toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=False, workers=False, out=True):
        if out:
            sp.add_argument("--out", help="output path ('-' or omitted for stdout)")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        if workers:
            sp.add_argument("--workers", type=int, default=1)

    sp = sub.add_parser("score", help="score predictions against annotations")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--thresholds-t", type=_floats, default=metrics.TAP_THRESHOLDS)
    sp.add_argument("--thresholds-st", type=_floats, default=metrics.STAP_THRESHOLDS)
    common(sp, workers=True)

    sp = sub.add_parser("gen", help="generate a synthetic split")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--config", help="JSON object of generator settings")
    sp.add_argument("--num-sequences", type=int)
    sp.add_argument("--min-frames", type=int)
    sp.add_argument("--max-frames", type=int)
    sp.add_argument("--confidence", choices=("uniform", "constant"))
    sp.add_argument("--emit-head", action="store_true", default=None)
    sp.add_argument("--noise-center", type=float, help="center jitter sigma (m)")
    sp.add_argument("--noise-size", type=float, help="log-size jitter sigma")
    sp.add_argument("--noise-angle", type=float, help="angle jitter sigma (rad)")
    sp.add_argument("--noise-shift", type=int, help="temporal shift (frames)")
    sp.add_argument("--grid", type=_grid)
    sp.add_argument("--workspace", type=_workspace)

    sp = sub.add_parser("stats", help="dataset statistics")
    sp.add_argument("--gt", required=True)
    sp.add_argument("--workspace", type=_workspace)
    common(sp)

    sp = sub.add_parser("decode", help="decode head tensors into predictions")
    sp.add_argument("--heads", required=True, help=".npz archive from 'gen --emit-head'")
    sp.add_argument("--grid", type=_grid)
    sp.add_argument("--workspace", type=_workspace)
    sp.add_argument("--presence-threshold", type=float, default=0.5)
    common(sp)

    sp = sub.add_parser("selfcheck", help="audit iou3d against Monte Carlo")
    sp.add_argument("--pairs", type=int, default=200)
    sp.add_argument("--samples", type=int, default=2_000_000)
    common(sp, seed=True)

    sp = sub.add_parser("fuse-demo", help="run a fusion variant and print digests")
    sp.add_argument("--scale", choices=sorted(fusion.DEMO_SCALES), default="desk")
    sp.add_argument("--variant", choices=fusion.FUSION_VARIANTS, default="daf")
    common(sp, seed=True, workers=True)
    return p


def run(args: argparse.Namespace) -> int:
    if args.command == "score":
        opts = RunConfig(workers=args.workers, tap_thresholds=tuple(args.thresholds_t),
                         stap_thresholds=tuple(args.thresholds_st))
        return cmd_score(args.gt, args.pred, args.out, opts)
    if args.command == "gen":
        opts = RunConfig(seed=args.seed, grid_counts=args.grid, workspace=args.workspace,
                         noise={"center": args.noise_center, "size": args.noise_size,
                                "angle": args.noise_angle, "shift": args.noise_shift})
        overrides = {"num_sequences": args.num_sequences, "min_frames": args.min_frames,
                     "max_frames": args.max_frames, "confidence": args.confidence,
                     "emit_head": args.emit_head}
        return cmd_gen(args.seed, _synth_config(args.config, opts, overrides), args.out)
    if args.command == "stats":
        return cmd_stats(args.gt, args.out, args.workspace)
    if args.command == "decode":
        opts = RunConfig(grid_counts=args.grid, workspace=args.workspace,
                         presence_threshold=args.presence_threshold)
        return cmd_decode(args.heads, opts, args.out)
    if args.command == "selfcheck":
        return cmd_selfcheck(args.seed, args.pairs, args.samples, args.out)
    if args.command == "fuse-demo":
        return cmd_fuse_demo(args.seed, args.scale, args.variant, args.workers, args.out)
    raise CliError(EXIT_INVALID, f"unknown command {args.command!r}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    try:
        return run(args)
    except CliError as exc:
        for msg in exc.messages:
            print(f"vql3d {args.command}: {msg}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
