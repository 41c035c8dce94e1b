"""Command-line entry point: ``splatuq <subcommand> ...``.

Exit status: 0 on success, 1 on usage or input errors, 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .fisher import DEFAULT_LAMBDA, FisherDiag, laplace_cov
from .nbv import active_capture_loop, generate_candidates, select_next_view
from .presets import PRESETS, get_preset, initial_guess
from .propagation import view_scores
from .renderer import CameraPose, render
from .trainer import DEFAULT_LEARNING_RATES, TrainConfig, TrainingDiverged, train

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_train_flags(p):
    p.add_argument("--steps", type=int, default=200, help="total optimizer steps T")
    p.add_argument("--sigma", type=float, default=1.0, help="pixel noise std of the likelihood")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA, help="Tikhonov regularizer")
    for group, lr in DEFAULT_LEARNING_RATES.items():
        p.add_argument(f"--lr-{group.replace('_', '-')}", dest=f"lr_{group}", type=float, default=lr)
    p.add_argument("--schedule", choices=("round-robin", "random"), default="round-robin")


def _add_candidate_flags(p):
    p.add_argument("--candidates", help="JSON candidate spec file (ring or explicit list)")
    p.add_argument("--ring-n", type=int, default=8)
    p.add_argument("--ring-radius", type=float, default=4.0)
    p.add_argument("--ring-center", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    p.add_argument("--ring-zoom", type=float, default=8.0)
    p.add_argument("--ring-size", type=int, nargs=2, default=(32, 32), metavar=("W", "H"))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splatuq", description="Uncertainty quantification for 2D Gaussian splat scenes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a benchmark scene, a seeded initial guess and posed views")
    p.add_argument("--preset", choices=PRESETS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian pixel noise std added to views")
    p.add_argument("--out", required=True)

    p = sub.add_parser("render", help="render a scene to PPM plus per-object mask PGMs")
    p.add_argument("--scene", required=True)
    p.add_argument("--camera", help="camera JSON file")
    p.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0), metavar=("X", "Y"))
    p.add_argument("--psi", type=float, default=0.0)
    p.add_argument("--zoom", type=float, default=8.0)
    p.add_argument("--size", type=int, nargs=2, default=(32, 32), metavar=("W", "H"))
    p.add_argument("--out", required=True, help="output PPM path")
    p.add_argument("--masks", action="store_true", help="also write <out>.mask<k>.pgm per object")

    p = sub.add_parser("fit", help="fit a scene to posed views, accumulating the Fisher EMA")
    p.add_argument("--config")
    p.add_argument("--scene", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=0)
    _add_train_flags(p)

    p = sub.add_parser("uncertainty", help="variance heatmaps and object scores for posed views")
    p.add_argument("--config")
    p.add_argument("--scene", required=True)
    p.add_argument("--fisher", required=True)
    p.add_argument("--views", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--out", required=True)

    p = sub.add_parser("nbv", help="score candidate poses and pick the next best view")
    p.add_argument("--config")
    p.add_argument("--scene", required=True)
    p.add_argument("--fisher", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--objects", type=int, nargs="+", help="object ids to score (default: all)")
    p.add_argument("--out", required=True)
    _add_candidate_flags(p)

    p = sub.add_parser("active", help="simulated active-capture loop on a preset")
    p.add_argument("--config")
    p.add_argument("--preset", choices=PRESETS, default="two-object")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rounds", type=int, default=4)
    p.add_argument("--policy", choices=("uncertainty", "random"), default="uncertainty")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--objects", type=int, nargs="+")
    p.add_argument("--out", required=True)
    _add_train_flags(p)

    p = sub.add_parser("verify", help="run the oracle suite")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def _apply_config(parser, argv, args):
    """Re-parse with values from ``--config`` as defaults; unknown keys are errors."""
    if not getattr(args, "config", None):
        return args
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"--config: no such file {path}")
    try:
        cfg = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"--config: malformed JSON at line {exc.lineno}: {exc.msg}")
    if not isinstance(cfg, dict):
        raise UsageError("--config: top level must be an object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    allowed = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise UsageError(f"--config: unknown key {unknown[0]!r}")
    sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _require_file(path, flag):
    if not Path(path).is_file():
        raise UsageError(f"{flag}: no such file {path}")


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"--out: cannot create {out}: {exc}")
    return out


def _train_config(args, seed) -> TrainConfig:
    rates = {g: getattr(args, f"lr_{g}") for g in DEFAULT_LEARNING_RATES}
    try:
        return TrainConfig(
            total_steps=args.steps,
            learning_rates=rates,
            sigma=args.sigma,
            lam=args.lam,
            rng_seed=seed,
            view_schedule=args.schedule,
        )
    except ValueError as exc:
        raise UsageError(str(exc))


def _candidate_spec(args):
    if args.candidates is not None:
        if isinstance(args.candidates, dict):
            return args.candidates
        _require_file(args.candidates, "--candidates")
        return json.loads(Path(args.candidates).read_text(encoding="utf-8"))
    w, h = args.ring_size
    return {
        "kind": "ring",
        "center": list(args.ring_center),
        "radius": args.ring_radius,
        "n": args.ring_n,
        "zoom": args.ring_zoom,
        "width": w,
        "height": h,
    }


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_synth(args):
    out = _out_dir(args.out)
    preset = get_preset(args.preset)
    rng = np.random.default_rng([args.seed, 1])
    io.save_scene(preset.scene, out / "gt_scene.json")
    io.save_scene(initial_guess(preset.scene, args.seed), out / "init_scene.json")
    entries = []
    for i, cam in enumerate(preset.training_cameras):
        img = render(preset.scene, cam)[0]
        if args.noise > 0:
            img = img + rng.normal(0.0, args.noise, img.shape)
        name = f"view_{i:03d}.ppm"
        io.write_ppm(out / name, img)
        entries.append((i, cam, name))
    io.save_views(entries, out / "views.json")
    (out / "candidates.json").write_text(io.dumps(preset.candidate_spec), encoding="utf-8")
    print(f"wrote {args.preset} scene and {len(entries)} views to {out}")


def cmd_render(args):
    _require_file(args.scene, "--scene")
    scene = io.load_scene(args.scene)
    if args.camera:
        _require_file(args.camera, "--camera")
        cam = io.camera_from_dict(json.loads(Path(args.camera).read_text(encoding="utf-8")), args.camera)
    else:
        cam = CameraPose(tuple(args.center), args.psi, args.zoom, *args.size)
    image, masks = render(scene, cam)
    io.write_ppm(args.out, image)
    if args.masks:
        for k, m in masks.items():
            io.write_pgm16(f"{args.out}.mask{k}.pgm", m)
    print(f"wrote {args.out}")


def cmd_fit(args):
    _require_file(args.scene, "--scene")
    _require_file(args.views, "--views")
    out = _out_dir(args.out)
    init = io.load_scene(args.scene)
    views = [(cam, img) for _, cam, img in io.load_views(args.views)]
    config = _train_config(args, args.seed)

    def checkpoint(t, scene, fisher):
        io.save_scene(scene, out / f"checkpoint_{t:06d}_scene.json")
        io.save_sidecar(fisher, out / f"checkpoint_{t:06d}_fisher.json")

    scene, fisher, trace = train(init, views, config, checkpoint, args.checkpoint_every)
    io.save_scene(scene, out / "fitted_scene.json")
    io.save_sidecar(fisher, out / "fisher.json")
    io.write_trace(out / "trace.csv", trace)
    print(f"final loss {trace.records[-1].loss:.6g} after {config.total_steps} steps")


def _load_fisher(path) -> FisherDiag:
    obj = io.load_sidecar(path)
    if not isinstance(obj, FisherDiag):
        raise UsageError(f"--fisher: {path} is not a Fisher sidecar")
    return obj


def cmd_uncertainty(args):
    for path, flag in ((args.scene, "--scene"), (args.fisher, "--fisher"), (args.views, "--views")):
        _require_file(path, flag)
    out = _out_dir(args.out)
    scene = io.load_scene(args.scene)
    cov = laplace_cov(_load_fisher(args.fisher), args.lam)
    io.save_sidecar(cov, out / "cov.json")
    rows = []
    for vid, cam, _ in io.load_views(args.views, with_images=False):
        scores, heat = view_scores(scene, cam, cov, view_id=vid)
        io.write_pgm16(out / f"heatmap_view{vid:03d}.pgm", heat)
        rows.extend(scores)
    io.write_scores(out / "scores.csv", rows)
    print(f"wrote {len(rows)} object scores to {out / 'scores.csv'}")


def cmd_nbv(args):
    _require_file(args.scene, "--scene")
    _require_file(args.fisher, "--fisher")
    out = _out_dir(args.out)
    scene = io.load_scene(args.scene)
    cov = laplace_cov(_load_fisher(args.fisher), args.lam)
    candidates = generate_candidates(_candidate_spec(args))
    decision = select_next_view(scene, cov, candidates, args.objects)
    io.write_scores(out / "nbv_scores.csv", decision.table)
    cam = dict(candidates.items())[decision.chosen_id]
    lines = [f"chosen {decision.chosen_id}", "camera " + json.dumps(io.camera_to_dict(cam))]
    lines += [f"aggregate {cid} {v:.17g}" for cid, v in decision.aggregate.items()]
    (out / "decision.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"next best view: candidate {decision.chosen_id}")


def write_active_report(report, out: Path, threshold: float = 30.0):
    cids = sorted(report.rounds[0].aggregate)
    header = ["round", "n_views", "chosen_id", "center_x", "center_y", "psi", "train_loss", "psnr"]
    header += [f"score_{c}" for c in cids]
    rows = []
    for r in report.rounds:
        p = r.chosen_pose
        rows.append(
            [r.round, r.n_views, r.chosen_id, p.center[0], p.center[1], p.psi, r.train_loss, r.psnr]
            + [r.aggregate[c] for c in cids]
        )
    io.write_csv(out / "active_rounds.csv", header, rows)
    reached = report.rounds_to_psnr(threshold)
    summary = [
        f"policy {report.policy}",
        f"seed {report.seed}",
        f"rounds {len(report.rounds)}",
        f"final_psnr {report.rounds[-1].psnr:.17g}",
        f"rounds_to_{threshold:g}dB {reached if reached is not None else 'not reached'}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")


def cmd_active(args):
    out = _out_dir(args.out)
    if args.rounds < 1:
        raise UsageError("--rounds: must be >= 1")
    preset = get_preset(args.preset)
    config = _train_config(args, args.seed)
    report = active_capture_loop(
        preset.scene,
        initial_guess(preset.scene, args.seed),
        preset.training_cameras,
        preset.candidate_spec,
        args.rounds,
        config,
        preset.heldout_cameras,
        policy=args.policy,
        objects=args.objects,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    write_active_report(report, out)
    print((out / "summary.txt").read_text(encoding="utf-8"), end="")


def cmd_verify(args):
    from .verify import run_all

    out = _out_dir(args.out)
    rows = run_all(args.samples, args.seed)
    io.write_csv(out / "verify.csv", ("check", "measured", "tolerance", "passed", "note"),
                 [(c.name, c.measured, c.tolerance, int(c.passed), c.note) for c in rows])
    width = max(len(c.name) for c in rows)
    table = [f"{'PASS' if c.passed else 'FAIL'}  {c.name:<{width}}  {c.measured:<12.4g} tol {c.tolerance:.4g}  {c.note}".rstrip()
             for c in rows]
    (out / "verify.txt").write_text("\n".join(table) + "\n", encoding="utf-8")
    print("\n".join(table))
    return EXIT_OK if all(c.passed for c in rows) else EXIT_NUMERIC


COMMANDS = {
    "synth": cmd_synth,
    "render": cmd_render,
    "fit": cmd_fit,
    "uncertainty": cmd_uncertainty,
    "nbv": cmd_nbv,
    "active": cmd_active,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(parser, argv, args)
        status = COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"splatuq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDiverged, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"splatuq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.FormatError, ValueError, OSError) as exc:
        print(f"splatuq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK if status is None else status


if __name__ == "__main__":
    sys.exit(main())
