"""Command-line interface.

Subcommands mirror the library's probes over checkpoint/dataset files.
Exit codes: 0 success, 2 configuration error, 3 numeric or convergence
error, 4 I/O error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import HmmConfig, hmm_generate, load_dataset, save_dataset
from .errors import (AntipodalError, CheckpointError, ConfigError,
                     ConvergenceError, DegeneratePlaneError,
                     DegenerateUnitError, IdxFormatError, MissingLatentError,
                     NetgeomError, NotNormalizedError, NumericError,
                     ShapeError, ZeroVarianceError)
from .experiments import derive_seed, run_experiment, write_csv
from .nets import random_network
from .probes import barrier, local_energy, optimized_path, path_scan, plane_scan
from .probes import distance_study
from .symmetry import align, normalize
from .training import (AdvConfig, ReplicaConfig, TrainConfig, adv_init_train,
                       rsgd_train, sgd_train)

_CONFIG_ERRORS = (ConfigError, ShapeError, NotNormalizedError, MissingLatentError)
_NUMERIC_ERRORS = (NumericError, ConvergenceError, AntipodalError,
                   DegenerateUnitError, DegeneratePlaneError, ZeroVarianceError)
_IO_ERRORS = (CheckpointError, IdxFormatError, OSError)


def _add_seed_out(p, out_required=True):
    p.add_argument("--seed", type=int, required=True,
                   help="master seed (required; no implicit default)")
    p.add_argument("--out", required=out_required, help="output path")


def _mode_to_scan(mode):
    return mode.replace("-", "_")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="netgeom",
        description="Canonicalize small neural networks and probe the "
                    "geometry of their zero-error landscape.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("hmm-gen", help="generate a hidden-manifold dataset")
    p.add_argument("--teacher-dim", type=int, required=True)
    p.add_argument("--student-dim", type=int, required=True)
    p.add_argument("--patterns", type=int, required=True)
    p.add_argument("--test-patterns", type=int, default=1000)
    _add_seed_out(p)

    p = sub.add_parser("train", help="train one solution on a dataset directory")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--algo", choices=("sgd", "rsgd", "adv"), default="sgd")
    p.add_argument("--hidden", type=int, nargs="*", default=[],
                   help="hidden layer widths (empty for a perceptron)")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--committee", action="store_true",
                   help="freeze the output weights to 1")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--lr0", type=float, default=1.0)
    p.add_argument("--momentum", type=float, default=0.0)
    p.add_argument("--nesterov", action="store_true")
    p.add_argument("--schedule", choices=("cosine", "constant"), default="constant")
    p.add_argument("--replicas", type=int, default=5, help="rsgd replica count")
    p.add_argument("--gamma0", type=float, default=0.002)
    p.add_argument("--gamma1", type=float, default=0.002)
    p.add_argument("--replication", type=int, default=0, help="adv dataset copies")
    p.add_argument("--zero-pixel-fraction", type=float, default=0.0)
    _add_seed_out(p)

    p = sub.add_parser("normalize", help="project a checkpoint onto the sphere product")
    p.add_argument("--net", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("align", help="align a checkpoint to a reference")
    p.add_argument("--ref", required=True)
    p.add_argument("--net", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--normalize-first", action="store_true",
                   help="normalize both continuous networks before aligning")

    p = sub.add_parser("scan-path", help="train-error scan along a path")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", required=True,
                   choices=("linear", "linear-aligned", "geodesic-aligned", "hamming"))
    p.add_argument("--points", type=int, default=25)
    _add_seed_out(p)

    p = sub.add_parser("scan-plane", help="train-error grid through three checkpoints")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--c", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--resolution", type=int, default=15)
    p.add_argument("--margin", type=float, default=0.2)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--binary", action="store_true",
                   help="span the latent weights and binarize each grid point")
    p.add_argument("--out", required=True)

    p = sub.add_parser("local-energy", help="flatness profile of a checkpoint")
    p.add_argument("--net", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--amplitudes", type=float, nargs="*", default=None)
    p.add_argument("--samples", type=int, default=None)
    _add_seed_out(p)

    p = sub.add_parser("distances", help="pairwise distances between solution groups")
    p.add_argument("--group", action="append", required=True,
                   metavar="NAME=CKPT,CKPT,...",
                   help="repeatable; a named list of checkpoints")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("optimize-midpoint",
                       help="single-bend optimized path between two solutions")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--binary", action="store_true")
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr0", type=float, default=0.02)
    p.add_argument("--points", type=int, default=25)
    _add_seed_out(p)

    p = sub.add_parser("run", help="run a full experiment config")
    p.add_argument("config", help="JSON experiment configuration")
    p.add_argument("--out", default=None, help="override the output directory")
    return parser


def _cmd_hmm_gen(args):
    cfg = HmmConfig(args.teacher_dim, args.student_dim, args.patterns,
                    args.test_patterns, args.seed)
    train, test = hmm_generate(cfg)
    out = Path(args.out)
    save_dataset(train, out / "train")
    save_dataset(test, out / "test")
    print(f"wrote {out}/train and {out}/test "
          f"(D={cfg.D}, N={cfg.N}, P={cfg.P}, P_test={cfg.P_test})")


def _cmd_train(args):
    data = load_dataset(Path(args.data) / "train"
                        if (Path(args.data) / "train").exists() else args.data)
    sizes = [data.num_features] + list(args.hidden) + [1]
    template = random_network(sizes, activation="sign" if args.binary else "relu",
                              binary=args.binary, committee=args.committee,
                              seed=derive_seed(args.seed, "init"))
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      lr0=args.lr0, momentum=args.momentum,
                      nesterov=args.nesterov, schedule=args.schedule,
                      loss="binary_cross_entropy", seed=derive_seed(args.seed, "train"))
    if args.algo == "sgd":
        net, trace = sgd_train(template, data, cfg)
    elif args.algo == "rsgd":
        rep = ReplicaConfig(args.replicas, args.gamma0, args.gamma1)
        net, trace = rsgd_train(template, data, cfg, rep)
    else:
        adv = AdvConfig(args.replication, args.zero_pixel_fraction,
                        pretrain=cfg, finetune=cfg)
        net, trace = adv_init_train(template, data, adv,
                                    derive_seed(args.seed, "poison"))
    save_checkpoint(net, args.out, metadata={"algorithm": args.algo},
                    seed_lineage={"seed": args.seed})
    print(f"final train error {trace.train_error[-1]:.4f}; wrote {args.out}")


def _cmd_normalize(args):
    net = normalize(load_checkpoint(args.net))
    save_checkpoint(net, args.out)
    print(f"wrote {args.out}")


def _cmd_align(args):
    ref = load_checkpoint(args.ref)
    net = load_checkpoint(args.net)
    if args.normalize_first and not ref.is_binary:
        ref, net = normalize(ref), normalize(net)
    aligned, plan = align(ref, net)
    save_checkpoint(aligned, args.out)
    moved = sum(int(np.sum(p != np.arange(p.size))) for p in plan.permutations)
    print(f"wrote {args.out} ({moved} units relabelled)")


def _cmd_scan_path(args):
    a = load_checkpoint(args.a)
    b = load_checkpoint(args.b)
    data = load_dataset(args.data)
    scan = path_scan(a, b, data, _mode_to_scan(args.mode), args.points, args.seed)
    rows = [(f"{scan.endpoint_a}-{scan.endpoint_b}", scan.mode, x, e)
            for x, e in zip(scan.fractions, scan.train_errors)]
    write_csv(args.out, ("pair_id", "mode", "x", "train_error"), rows)
    print(f"barrier {barrier(scan):.4f}; wrote {args.out}")


def _cmd_scan_plane(args):
    nets = [load_checkpoint(p) for p in (args.a, args.b, args.c)]
    data = load_dataset(args.data)
    grid = plane_scan(*nets, data, resolution=args.resolution,
                      margin=args.margin, normalized=args.normalized,
                      binarized=args.binary)
    rows = [(i, j, grid.u_axis[i], grid.v_axis[j], grid.errors[i, j])
            for i in range(grid.u_axis.size) for j in range(grid.v_axis.size)]
    write_csv(args.out, ("i", "j", "u", "v", "train_error"), rows)
    print(f"wrote {args.out}")


def _cmd_local_energy(args):
    net = load_checkpoint(args.net)
    data = load_dataset(args.data)
    prof = local_energy(net, data, amplitudes=args.amplitudes,
                        samples=args.samples, seed=args.seed)
    rows = [("cli", amp, m, s, prof.samples)
            for amp, m, s in zip(prof.amplitudes, prof.mean_delta, prof.std_delta)]
    write_csv(args.out, ("algorithm", "amplitude", "mean_dE", "std_dE", "samples"),
              rows)
    print(f"wrote {args.out}")


def _cmd_distances(args):
    groups = {}
    for item in args.group:
        if "=" not in item:
            raise ConfigError(f"--group expects NAME=CKPT,..., got {item!r}")
        name, paths = item.split("=", 1)
        groups[name] = [load_checkpoint(p) for p in paths.split(",")]
    rows = [(r.group_a, r.group_b, r.raw_mean, r.raw_std,
             r.aligned_mean, r.aligned_std)
            for r in distance_study(groups, args.binary)]
    write_csv(args.out, ("group_a", "group_b", "raw_mean", "raw_std",
                         "aligned_mean", "aligned_std"), rows)
    print(f"wrote {args.out}")


def _cmd_optimize_midpoint(args):
    a = load_checkpoint(args.a)
    b = load_checkpoint(args.b)
    data = load_dataset(args.data)
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      lr0=args.lr0, momentum=0.0 if args.binary else 0.9,
                      nesterov=not args.binary, schedule="cosine",
                      loss="binary_cross_entropy" if a.num_outputs == 1
                      else "cross_entropy",
                      seed=derive_seed(args.seed, "midpoint"))
    mode = "binary" if args.binary else "continuous"
    scan_am, scan_mb, bar = optimized_path(a, b, data, cfg, mode, args.seed,
                                           points=args.points)
    rows = []
    for leg, scan in (("a-mid", scan_am), ("mid-b", scan_mb)):
        rows.extend((leg, scan.mode, x, e)
                    for x, e in zip(scan.fractions, scan.train_errors))
    write_csv(args.out, ("pair_id", "mode", "x", "train_error"), rows)
    print(f"optimized barrier {bar:.4f}; wrote {args.out}")


def _cmd_run(args):
    out = run_experiment(args.config, out_dir=args.out)
    print(f"experiment complete: {out}")


_COMMANDS = {
    "hmm-gen": _cmd_hmm_gen,
    "train": _cmd_train,
    "normalize": _cmd_normalize,
    "align": _cmd_align,
    "scan-path": _cmd_scan_path,
    "scan-plane": _cmd_scan_plane,
    "local-energy": _cmd_local_energy,
    "distances": _cmd_distances,
    "optimize-midpoint": _cmd_optimize_midpoint,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        _COMMANDS[args.command](args)
    except _CONFIG_ERRORS as err:
        print(f"netgeom: config error: {err}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as err:
        print(f"netgeom: numeric error: {err}", file=sys.stderr)
        return 3
    except _IO_ERRORS as err:
        print(f"netgeom: i/o error: {err}", file=sys.stderr)
        return 4
    except NetgeomError as err:
        print(f"netgeom: error: {err}", file=sys.stderr)
        return 2
    return 0


def entry():
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
