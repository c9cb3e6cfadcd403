"""Command-line entry point: ``scorefold <command> [options]``.

Exit status is 0 on success, 2 for usage or input errors and 3 for numerical
failures (diverged training or sampling).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .conditioning import assemble, load_predictions
from .errors import SamplingError, ScoreFoldError, TrainingError
from .geometry import Structure, radius_of_gyration
from .io import emit_csv, load_manifest, parse_pdb_ca, read_csv, read_tensor, write_ca_pdb, write_tensor
from .metrics import gdt_ts, lddt_ca, rmsd
from .net import load_checkpoint, save_checkpoint
from .noise import geometric_schedule, perturb
from .sampler import (
    HIST_BINS,
    SamplerConfig,
    build_reference_histogram,
    decoy_seeds,
    load_histogram,
    sample_decoys,
    save_histogram,
    step_size,
)
from .score import NetScore, OracleScore
from .training import TrainConfig, evaluate_loss, make_net, train

log = logging.getLogger("scorefold")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
METRICS = {"lddt": ("lDDT-Ca", lddt_ca), "gdt": ("GDT-TS", gdt_ts), "rmsd": ("RMSD", rmsd)}


class UsageError(ScoreFoldError):
    pass


# ---------------------------------------------------------------- helpers


def _write_echo(args, path):
    if path is None:
        return
    skip = {"func", "config_echo"}
    lines = [f"version={__version__}"]
    for key in sorted(vars(args)):
        if key not in skip:
            lines.append(f"{key}={getattr(args, key)}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _echo_path(args, default):
    return args.config_echo if args.config_echo is not None else default


def _schedule(args):
    return geometric_schedule(args.sigma_max, args.sigma_min, args.levels)


def _add_schedule_flags(p):
    p.add_argument("--sigma-max", type=float, default=10.0)
    p.add_argument("--sigma-min", type=float, default=0.01)
    p.add_argument("--levels", type=int, default=32)


def _default_jobs():
    raw = os.environ.get("SCOREFOLD_JOBS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"SCOREFOLD_JOBS must be an integer, got {raw!r}")


def _load_dataset(entries, split, mask, pe_width):
    data = []
    for e in entries:
        if e.split != split:
            continue
        s = parse_pdb_ca(e.pdb, e.chain)
        pred = load_predictions(e.predictions) if e.predictions else None
        data.append((s, assemble(s.sequence, pe_width, pred, mask)))
    return data


# ---------------------------------------------------------------- commands


def cmd_schedule(args):
    sched = _schedule(args)
    if not args.lambda0 > 0:
        raise UsageError("--lambda0 must be positive")
    _write_echo(args, args.config_echo)
    print("k\tsigma\tlambda")
    for k, sigma in enumerate(sched):
        print(f"{k + 1}\t{sigma:.6g}\t{step_size(sched, k, args.lambda0):.6g}")
    return EXIT_OK


def cmd_perturb(args):
    if not args.sigma >= 0:
        raise UsageError("--sigma must be non-negative")
    s = parse_pdb_ca(args.pdb, args.chain)
    Y = perturb(s.coords, args.sigma, np.random.default_rng(args.seed))
    write_ca_pdb(s.with_coords(Y), args.out)
    _write_echo(args, _echo_path(args, f"{args.out}.config.txt"))
    dev = float(np.sqrt(((Y - s.coords) ** 2).sum(axis=1).mean()))
    print(f"rmsd_to_input\t{dev:.6g}")
    return EXIT_OK


def cmd_train(args):
    entries = load_manifest(args.manifest)
    train_set = _load_dataset(entries, "train", args.predictions_mask, args.pe_width)
    if not train_set:
        raise UsageError(f"{args.manifest}: no entries in the train split")
    valid_set = _load_dataset(entries, "valid", args.predictions_mask, args.pe_width) or None
    crop = args.crop if args.crop > 0 else None
    config = TrainConfig(epochs=args.epochs, batch=args.batch, lr=args.lr, crop=crop,
                         seed=args.seed, repeats=args.repeats, schedule=_schedule(args))
    net = make_net(args.width, args.blocks, args.seed, args.pe_width)
    eval_crop = min([crop or 10 ** 9] + [len(s) for s, _ in train_set])
    initial = evaluate_loss(net, train_set, config.schedule, args.seed, repeats=args.repeats, crop=eval_crop)
    log.info("initial loss %.4f", initial)
    result = train(net, train_set, config, valid_set,
                   callback=lambda e, n, l: log.info("epoch %d loss %.4f", e, l))
    out = Path(args.out_model)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.net, out, {"best_epoch": result.best_epoch, "seed": args.seed,
                                      "pe_width": args.pe_width, "sigma_max": args.sigma_max,
                                      "sigma_min": args.sigma_min, "levels": args.levels})
    rows = [{"epoch": -1, "train": initial, "valid": ""}]
    for e, loss in enumerate(result.train_losses):
        rows.append({"epoch": e, "train": loss,
                     "valid": result.valid_losses[e] if result.valid_losses else ""})
    loss_csv = args.loss_csv or f"{out}.loss.csv"
    emit_csv(rows, loss_csv, ["epoch", "train", "valid"])
    _write_echo(args, _echo_path(args, f"{out}.config.txt"))
    final = result.train_losses[-1] if result.train_losses else initial
    print(f"initial_loss\t{initial:.6g}\nfinal_loss\t{final:.6g}\nbest_epoch\t{result.best_epoch}")
    return EXIT_OK


def _target(args, native):
    if args.seq:
        return args.seq.strip().upper()
    if args.pdb:
        return parse_pdb_ca(args.pdb, args.chain).sequence
    if native is not None:
        return native.sequence
    raise UsageError("give --seq or --pdb to define the target sequence")


def cmd_sample(args):
    schedule = _schedule(args)
    native = parse_pdb_ca(args.oracle_pdb, args.chain) if args.oracle_pdb else None
    sequence = _target(args, native)
    pe_width = 48
    if args.model:
        net, meta = load_checkpoint(args.model)
        pe_width = int(meta.get("pe_width", pe_width))
        model = NetScore(net, schedule)
    else:
        model = OracleScore(native, schedule)
    if native is not None and len(native) != len(sequence):
        raise UsageError(f"oracle structure has {len(native)} residues, target has {len(sequence)}")
    pred = load_predictions(args.predictions) if args.predictions else None
    bundle = assemble(sequence, pe_width, pred, args.predictions_mask)
    if args.model and bundle.channels != model.net.channels:
        raise UsageError(f"model expects {model.net.channels} channels, bundle has {bundle.channels}")
    reference = load_histogram(args.hirm_ref) if args.hirm_ref else None
    config = SamplerConfig(schedule=schedule, iterations=args.stages_T, lambda0=args.lambda0,
                           decoys=args.decoys, seed=args.seed, hirm_enabled=reference is not None,
                           hirm_reference=reference)
    jobs = args.jobs if args.jobs is not None else _default_jobs()
    results = sample_decoys(model, bundle, config, jobs=jobs)

    out = Path(args.out_dir)
    (out / "trajectory").mkdir(parents=True, exist_ok=True)
    seeds = decoy_seeds(args.seed, args.decoys)
    index, stats = [], []
    for n, (structure, traj) in enumerate(results):
        write_ca_pdb(structure, out / f"decoy_{n:03d}.pdb")
        frames = np.stack([traj.initial] + traj.stage_coords)
        name = f"trajectory/decoy_{n:03d}.sft"
        write_tensor(out / name, frames, {"sequence": sequence, "seed": seeds[n],
                                          "iterations": args.stages_T})
        index.append({"decoy": n, "stage": 0, "iteration": 0, "file": name, "seconds": 0.0})
        for k, sec in enumerate(traj.stage_seconds):
            index.append({"decoy": n, "stage": k + 1, "iteration": args.stages_T,
                          "file": name, "seconds": sec})
    for k in range(len(schedule)):
        rg = [radius_of_gyration(t.stage_coords[k]) for _, t in results]
        stats.append({"stage": k + 1, "sigma": schedule[k], "step_size": step_size(schedule, k, args.lambda0),
                      "mean_radius_of_gyration": float(np.mean(rg)),
                      "mirrored": sum(t.mirrored[k] for _, t in results),
                      "mean_seconds": float(np.mean([t.stage_seconds[k] for _, t in results]))})
    emit_csv(index, out / "index.csv", ["decoy", "stage", "iteration", "file", "seconds"])
    emit_csv(stats, out / "stats.csv", list(stats[0]))
    _write_echo(args, _echo_path(args, out / "config.txt"))
    if native is not None:
        worst = max(rmsd(s, native) for s, _ in results)
        print(f"max_rmsd_to_oracle\t{worst:.6g}")
    print(f"decoys\t{len(results)}\nout_dir\t{out}")
    return EXIT_OK


def cmd_hirm_ref(args):
    entries = [e for e in load_manifest(args.manifest) if args.split == "all" or e.split == args.split]
    structures = [parse_pdb_ca(e.pdb, e.chain) for e in entries]
    if not structures:
        raise UsageError("no structures selected from the manifest")
    hist = build_reference_histogram(structures, bins=args.bins)
    save_histogram(hist, args.out, {"structures": len(structures)})
    _write_echo(args, _echo_path(args, f"{args.out}.config.txt"))
    mode = float(np.rad2deg(hist.centers[int(np.argmax(hist.freqs))]))
    print(f"structures\t{len(structures)}\nangles\t{int(hist.counts.sum())}\nmode_deg\t{mode:.6g}")
    return EXIT_OK


def _metric_list(text):
    names = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in names if m not in METRICS]
    if bad or not names:
        raise UsageError(f"unknown metrics {bad}; choose from {sorted(METRICS)}")
    return names


def cmd_eval(args):
    names = _metric_list(args.metrics)
    native = parse_pdb_ca(args.native, args.chain)
    files = sorted(Path(args.pred_dir).glob("*.pdb"))
    if not files:
        raise UsageError(f"no decoy PDB files in {args.pred_dir}")
    rows = []
    for f in files:
        pred = parse_pdb_ca(f)
        if len(pred) != len(native):
            raise UsageError(f"{f}: {len(pred)} residues, native has {len(native)}")
        rows.append({"decoy": f.stem, **{m: METRICS[m][1](pred, native) for m in names}})
    summary = {}
    for m in names:
        vals = np.array([r[m] for r in rows])
        summary[f"{METRICS[m][0]}-Avg"] = float(vals.mean())
        summary[f"{METRICS[m][0]}-Max"] = float(vals.max())
    table = rows + [{"decoy": "mean", **{m: summary[f"{METRICS[m][0]}-Avg"] for m in names}},
                    {"decoy": "max", **{m: summary[f"{METRICS[m][0]}-Max"] for m in names}}]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_csv(table, out, ["decoy"] + names)
    emit_csv([{"decoys": len(rows), **summary}], out.with_name(out.stem + "_summary.csv"))
    _write_echo(args, _echo_path(args, f"{out}.config.txt"))
    for key, val in summary.items():
        print(f"{key}\t{val:.6g}")
    return EXIT_OK


def cmd_report(args):
    names = _metric_list(args.metrics)
    root = Path(args.trajectory_dir)
    index_path = root / "index.csv"
    if not index_path.exists():
        raise UsageError(f"{root}: no trajectory index found")
    index = read_csv(index_path)
    if not index:
        raise UsageError(f"{index_path}: trajectory index is empty")
    native = parse_pdb_ca(args.native, args.chain)
    frames = {}
    for row in index:
        if row["file"] not in frames:
            path = root / row["file"]
            if not path.exists():
                raise UsageError(f"missing snapshot file {path}")
            frames[row["file"]] = read_tensor(path)[0]
    per_stage, timing = {}, []
    for row in index:
        stage, coords = int(row["stage"]), frames[row["file"]]
        if stage >= len(coords):
            raise UsageError(f"{row['file']} has no snapshot for stage {stage}")
        if coords.shape[1] != len(native):
            raise UsageError(f"{row['file']}: {coords.shape[1]} residues, native has {len(native)}")
        vals = {m: METRICS[m][1](coords[stage], native) for m in names}
        per_stage.setdefault(stage, []).append((vals, float(row["seconds"])))
    L = len(native)
    for f, coords in frames.items():
        secs = [float(r["seconds"]) for r in index if r["file"] == f]
        iters = sum(int(r["iteration"]) for r in index if r["file"] == f)
        timing.append({"file": f, "length": L, "stages": len(coords) - 1, "iterations": iters,
                       "seconds": max(secs), "seconds_per_iteration": max(secs) / iters if iters else 0.0})
    rows = []
    for stage in sorted(per_stage):
        entry = {"stage": stage}
        for m in names:
            entry[m] = float(np.mean([v[m] for v, _ in per_stage[stage]]))
        entry["seconds"] = float(np.mean([s for _, s in per_stage[stage]]))
        entry["decoys"] = len(per_stage[stage])
        rows.append(entry)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    emit_csv(rows, out, ["stage"] + names + ["seconds", "decoys"])
    emit_csv(timing, out.with_name(out.stem + "_timing.csv"), list(timing[0]))
    _write_echo(args, _echo_path(args, f"{out}.config.txt"))
    last = rows[-1]
    print("\t".join(f"{m}={last[m]:.6g}" for m in names))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(prog="scorefold", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config-echo", default=None, help="where to write the key=value run record")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schedule", parents=[common], help="print noise levels and step sizes")
    _add_schedule_flags(p)
    p.add_argument("--lambda0", type=float, default=0.1)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("perturb", parents=[common], help="add Gaussian noise to a Calpha trace")
    p.add_argument("--pdb", required=True)
    p.add_argument("--chain", default=None)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("train", parents=[common], help="fit a score network by denoising score matching")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--crop", type=int, default=32, help="0 disables cropping")
    p.add_argument("--repeats", type=int, default=1, help="draws per structure per epoch")
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--pe-width", type=int, default=48)
    p.add_argument("--predictions-mask", choices=["none", "orientation"], default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-model", required=True)
    p.add_argument("--loss-csv", default=None)
    _add_schedule_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="generate decoys by annealed Langevin dynamics")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model")
    src.add_argument("--oracle-pdb")
    tgt = p.add_mutually_exclusive_group()
    tgt.add_argument("--seq")
    tgt.add_argument("--pdb")
    p.add_argument("--chain", default=None)
    p.add_argument("--predictions", default=None)
    p.add_argument("--predictions-mask", choices=["none", "orientation"], default="none")
    p.add_argument("--decoys", type=int, default=128)
    p.add_argument("--stages-T", type=int, default=64, dest="stages_T")
    p.add_argument("--lambda0", type=float, default=0.1)
    p.add_argument("--hirm-ref", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default $SCOREFOLD_JOBS or 1)")
    p.add_argument("--out-dir", required=True)
    _add_schedule_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("hirm-ref", parents=[common], help="build a reference dihedral histogram")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bins", type=int, default=HIST_BINS)
    p.add_argument("--split", choices=["train", "valid", "test", "all"], default="train")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hirm_ref)

    p = sub.add_parser("eval", parents=[common], help="score decoys against a native structure")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--native", required=True)
    p.add_argument("--chain", default=None)
    p.add_argument("--metrics", default="lddt,gdt,rmsd")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", parents=[common], help="per-stage quality and timing of a sampling run")
    p.add_argument("--trajectory-dir", required=True)
    p.add_argument("--native", required=True)
    p.add_argument("--chain", default=None)
    p.add_argument("--metrics", default="lddt,gdt")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (TrainingError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ScoreFoldError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
