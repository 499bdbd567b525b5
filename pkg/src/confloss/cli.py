"""Command-line front end.

Subcommands map one-to-one onto the library: confidence maps, occlusion
masks, loss evaluation, metric reports, the reverse-disparity restore, and
the toy training comparison. Flow fields interchange as .flo, scalar maps
as PFM, visualizations and masks as PGM.

Exit codes: 0 success, 1 data error (unreadable or inconsistent inputs),
2 usage error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import fileio
from .confidence import (
    CycleParams,
    confidence_db_flow,
    confidence_db_stereo,
    confidence_oa,
    confidence_oa_stereo,
    occlusion_mask,
    occlusion_mask_stereo,
)
from .fields import BinaryMask, check_same_shape, reverse_disparity_restore
from .losses import MODES, SequenceParams, WeightSpec, sequence_loss
from .metrics import full_report
from .toytrain import SceneSpec, TrainConfig, compare_runs, synth_scene

FLOW, STEREO = "flow", "stereo"

# Per-task hyperparameter defaults: (alpha1, beta1) weight the error-based
# term, (alpha2, beta2) the cycle-consistency term.
TASK_DEFAULTS = {
    FLOW: {"alpha1": 2.0, "beta1": 0.5, "alpha2": 2.0, "beta2": 1.0},
    STEREO: {"alpha1": 2.0, "beta1": 1.0, "alpha2": 1.0, "beta2": 1.0},
}
GAMMA1_DEFAULT = 0.01
GAMMA2_DEFAULT = 0.5
GAMMA_SEQ_DEFAULT = 0.8


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _load_field(path: str, task: str):
    """Read a correspondence field: .flo for flow, PFM for stereo."""
    data = _read_bytes(path)
    try:
        if task == FLOW:
            return fileio.read_flo(data)
        return fileio.read_pfm(data)
    except fileio.FormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _load_mask(path: str) -> BinaryMask:
    try:
        return fileio.read_pgm_mask(_read_bytes(path))
    except fileio.FormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _check_shapes(*named):
    grids = [g for _, g in named]
    try:
        return check_same_shape(*grids)
    except ValueError as exc:
        dims = ", ".join(f"{name}: {g.height}x{g.width}" for name, g in named)
        raise DataError(f"input dimensions disagree ({dims})") from exc


def _resolve_weight_spec(args) -> WeightSpec:
    defaults = TASK_DEFAULTS[args.task]
    return WeightSpec(
        mode=getattr(args, "mode", "plain_l1"),
        alpha1=defaults["alpha1"] if args.alpha1 is None else args.alpha1,
        beta1=defaults["beta1"] if args.beta1 is None else args.beta1,
        alpha2=defaults["alpha2"] if args.alpha2 is None else args.alpha2,
        beta2=defaults["beta2"] if args.beta2 is None else args.beta2,
        cycle=CycleParams(args.gamma1, args.gamma2),
    )


def _add_common_params(p: argparse.ArgumentParser, with_task=True):
    if with_task:
        p.add_argument("--task", choices=(FLOW, STEREO), default=FLOW)
    p.add_argument("--alpha1", type=float, default=None,
                   help="error-term weight scale (default per task)")
    p.add_argument("--beta1", type=float, default=None,
                   help="error-term weight exponent (default per task)")
    p.add_argument("--alpha2", type=float, default=None,
                   help="cycle-term weight scale (default per task)")
    p.add_argument("--beta2", type=float, default=None,
                   help="cycle-term weight exponent (default per task)")
    p.add_argument("--gamma1", type=float, default=GAMMA1_DEFAULT)
    p.add_argument("--gamma2", type=float, default=GAMMA2_DEFAULT)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="confloss",
        description="Confidence-weighted correspondence losses, metrics, and toy training.")
    parser.add_argument("--show-defaults", action="store_true",
                        help="print all hyperparameter defaults and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("confmap", help="write a confidence map (PFM + PGM)")
    p.add_argument("--mode", choices=("db", "oa"), required=True)
    p.add_argument("--pred", help="prediction file (db mode)")
    p.add_argument("--gt", help="ground-truth file (db mode)")
    p.add_argument("--forward", help="forward field (oa mode)")
    p.add_argument("--backward", help="backward field (oa mode)")
    p.add_argument("--out-pfm")
    p.add_argument("--out-pgm")
    _add_common_params(p)

    p = sub.add_parser("occmask", help="write the cycle-consistency mask (PGM)")
    p.add_argument("--forward", required=True)
    p.add_argument("--backward", required=True)
    p.add_argument("--out-pgm", required=True)
    _add_common_params(p)

    p = sub.add_parser("loss", help="evaluate a weighted loss (prints the scalar)")
    p.add_argument("--pred", action="append", required=True,
                   help="prediction file; repeat for a refinement sequence")
    p.add_argument("--gt", required=True)
    p.add_argument("--backward", action="append", default=None,
                   help="backward field per prediction (cycle-based modes)")
    p.add_argument("--mode", choices=MODES, default="plain_l1")
    p.add_argument("--gamma-seq", type=float, default=GAMMA_SEQ_DEFAULT)
    p.add_argument("--out-loss-map", help="per-pixel loss of the last iteration (PFM)")
    p.add_argument("--out-weight-map", help="weight map of the last iteration (PFM)")
    _add_common_params(p)

    p = sub.add_parser("eval", help="write the metric report CSV")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--valid", help="extra validity mask (PGM)")
    p.add_argument("--region", help="matched-region mask (PGM)")
    p.add_argument("--task", choices=(FLOW, STEREO), default=FLOW)
    p.add_argument("--out", help="output CSV path (default stdout)")

    p = sub.add_parser("reverse-disparity",
                       help="flip and negate a flipped-pair disparity estimate")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("toytrain", help="run the loss-mode comparison at toy scale")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--out-dir", required=True)

    return parser


def _show_defaults() -> None:
    print("task defaults (alpha1 beta1 alpha2 beta2):")
    for task, d in TASK_DEFAULTS.items():
        print(f"  {task:6s} {d['alpha1']} {d['beta1']} {d['alpha2']} {d['beta2']}")
    print(f"gamma1 {GAMMA1_DEFAULT}")
    print(f"gamma2 {GAMMA2_DEFAULT}")
    print(f"gamma_seq {GAMMA_SEQ_DEFAULT}")
    print("toytrain: steps 500, learning_rate 0.05, block_size 8, "
          "recompute_confidence_every 1")


def cmd_confmap(args) -> int:
    if not args.out_pfm and not args.out_pgm:
        raise UsageError("confmap: nothing to do, pass --out-pfm and/or --out-pgm")
    spec = _resolve_weight_spec(args)
    if args.mode == "db":
        if not args.pred or not args.gt:
            raise UsageError("confmap --mode db needs --pred and --gt")
        pred, pv = _load_field(args.pred, args.task)
        gt, gv = _load_field(args.gt, args.task)
        _check_shapes((args.pred, pred), (args.gt, gt))
        valid = pv & gv
        if args.task == FLOW:
            conf = confidence_db_flow(pred, gt, valid)
        else:
            conf = confidence_db_stereo(pred, gt, valid)
    else:
        if not args.forward or not args.backward:
            raise UsageError("confmap --mode oa needs --forward and --backward")
        fw, _ = _load_field(args.forward, args.task)
        bw, _ = _load_field(args.backward, args.task)
        _check_shapes((args.forward, fw), (args.backward, bw))
        if args.task == FLOW:
            conf = confidence_oa(fw, bw, spec.cycle)
        else:
            conf = confidence_oa_stereo(fw, bw, spec.cycle)
    if args.out_pfm:
        Path(args.out_pfm).write_bytes(fileio.write_pfm(conf))
    if args.out_pgm:
        Path(args.out_pgm).write_bytes(fileio.write_pgm(conf, value_range=(0.0, 1.0)))
    return 0


def cmd_occmask(args) -> int:
    spec = _resolve_weight_spec(args)
    fw, _ = _load_field(args.forward, args.task)
    bw, _ = _load_field(args.backward, args.task)
    _check_shapes((args.forward, fw), (args.backward, bw))
    if args.task == FLOW:
        mask = occlusion_mask(fw, bw, spec.cycle)
    else:
        mask = occlusion_mask_stereo(fw, bw, spec.cycle)
    Path(args.out_pgm).write_bytes(fileio.write_pgm(mask))
    return 0


def cmd_loss(args) -> int:
    spec = _resolve_weight_spec(args)
    gt, gt_valid = _load_field(args.gt, args.task)
    preds, valid = [], gt_valid
    for path in args.pred:
        pred, pv = _load_field(path, args.task)
        _check_shapes((path, pred), (args.gt, gt))
        preds.append(pred)
        valid = valid & pv
    backwards = None
    if spec.needs_backward:
        if not args.backward or len(args.backward) != len(args.pred):
            raise UsageError(f"mode {spec.mode!r} needs one --backward per --pred")
        backwards = []
        for path in args.backward:
            bw, _ = _load_field(path, args.task)
            _check_shapes((path, bw), (args.gt, gt))
            backwards.append(bw)
    try:
        total, per_iter = sequence_loss(preds, gt, valid, spec,
                                        SequenceParams(args.gamma_seq), backwards)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    print(f"{total:.6f}")
    last = per_iter[-1]
    if args.out_loss_map:
        Path(args.out_loss_map).write_bytes(fileio.write_pfm(last.loss_map))
    if args.out_weight_map:
        Path(args.out_weight_map).write_bytes(fileio.write_pfm(last.weight_map))
    return 0


def cmd_eval(args) -> int:
    pred, pv = _load_field(args.pred, args.task)
    gt, gv = _load_field(args.gt, args.task)
    _check_shapes((args.pred, pred), (args.gt, gt))
    valid = pv & gv
    if args.valid:
        extra = _load_mask(args.valid)
        _check_shapes((args.pred, pred), (args.valid, extra))
        valid = valid & extra
    region = None
    if args.region:
        region = _load_mask(args.region)
        _check_shapes((args.pred, pred), (args.region, region))
    report = full_report(pred, gt, valid, region=region)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fileio.write_metrics_csv(report, fh)
    else:
        fileio.write_metrics_csv(report, sys.stdout)
    return 0


def cmd_reverse_disparity(args) -> int:
    grid, _ = _load_field(args.input, STEREO)
    Path(args.output).write_bytes(fileio.write_pfm(reverse_disparity_restore(grid)))
    return 0


# ---------------------------------------------------------------------------
# toytrain config files: UTF-8 lines of "key = value", "#" comments.

_TOY_KEYS = {
    "height": int, "width": int, "square_size": int,
    "square_motion": "vec2", "background_motion": "vec2",
    "noise_sigma": float, "steps": int, "learning_rate": float,
    "block_size": int, "seeds": "ints", "modes": "names",
    "alpha1": float, "beta1": float, "alpha2": float, "beta2": float,
    "gamma1": float, "gamma2": float,
    "recompute_confidence_every": int, "snapshot_every": int,
}


def parse_toy_config(text: str) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _TOY_KEYS:
            raise DataError(f"config line {lineno}: unknown key {key!r}")
        kind = _TOY_KEYS[key]
        try:
            if kind == "vec2":
                parts = [float(v) for v in value.split(",")]
                if len(parts) != 2:
                    raise ValueError("expected two comma-separated numbers")
                values[key] = (parts[0], parts[1])
            elif kind == "ints":
                values[key] = tuple(int(v) for v in value.split(","))
            elif kind == "names":
                values[key] = tuple(v.strip() for v in value.split(","))
            else:
                values[key] = kind(value)
        except ValueError as exc:
            raise DataError(f"config line {lineno}: bad value for {key!r}: {exc}") from exc
    return values


def cmd_toytrain(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{args.config}: {exc}") from exc
    cfg = parse_toy_config(text)

    try:
        scene_spec = SceneSpec(
            height=cfg.get("height", 64),
            width=cfg.get("width", 64),
            square_size=cfg.get("square_size", 32),
            square_motion=cfg.get("square_motion", (6.0, 0.0)),
            background_motion=cfg.get("background_motion", (0.0, 0.0)),
            occluded_label_noise_sigma=cfg.get("noise_sigma", 3.0),
        )
        modes = cfg.get("modes", ("plain_l1", "db", "oa", "multiplication"))
        defaults = TASK_DEFAULTS[FLOW]
        cycle = CycleParams(cfg.get("gamma1", GAMMA1_DEFAULT),
                            cfg.get("gamma2", GAMMA2_DEFAULT))
        seeds = cfg.get("seeds", (0,))
        configs = [
            TrainConfig(
                steps=cfg.get("steps", 500),
                learning_rate=cfg.get("learning_rate", 0.05),
                loss_spec=WeightSpec(
                    mode=mode,
                    alpha1=cfg.get("alpha1", defaults["alpha1"]),
                    beta1=cfg.get("beta1", defaults["beta1"]),
                    alpha2=cfg.get("alpha2", defaults["alpha2"]),
                    beta2=cfg.get("beta2", defaults["beta2"]),
                    cycle=cycle,
                ),
                seeds=seeds,
                recompute_confidence_every=cfg.get("recompute_confidence_every", 1),
                snapshot_every=cfg.get("snapshot_every", 0),
            )
            for mode in modes
        ]
        scenes = [synth_scene(replace(scene_spec, seed=s)) for s in seeds]
        rows = compare_runs(configs, scenes, block_size=cfg.get("block_size", 8))
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "comparison.csv", "w", newline="") as fh:
        fileio.write_comparison_csv(rows, fh)
    for row in rows:
        for seed, report in zip(seeds, row.per_seed):
            with open(out_dir / f"report_{row.mode}_seed{seed}.csv", "w", newline="") as fh:
                fileio.write_metrics_csv(report.report, fh)
            for step, m_db, m_oa in report.snapshots:
                base = f"{row.mode}_seed{seed}_step{step}"
                (out_dir / f"mdb_{base}.pgm").write_bytes(
                    fileio.write_pgm(m_db, value_range=(0.0, 1.0)))
                (out_dir / f"moa_{base}.pgm").write_bytes(
                    fileio.write_pgm(m_oa, value_range=(0.0, 1.0)))
    print(f"wrote {out_dir / 'comparison.csv'}")
    return 0


_COMMANDS = {
    "confmap": cmd_confmap,
    "occmask": cmd_occmask,
    "loss": cmd_loss,
    "eval": cmd_eval,
    "reverse-disparity": cmd_reverse_disparity,
    "toytrain": cmd_toytrain,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.show_defaults:
        _show_defaults()
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("confloss: error: a subcommand is required", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"confloss: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValueError) as exc:
        print(f"confloss: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"confloss: error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
