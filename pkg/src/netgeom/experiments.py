"""Experiment orchestration: config validation, pipelines, CSV emission.

Configs are JSON with a strict schema (unknown keys are rejected, the
master seed is mandatory). Every run writes checkpoints for the trained
solutions, one CSV per figure-like output, and a ``manifest.json`` with
all resolved parameters; nothing written depends on wall-clock state, so a
fixed config reproduces every output byte for byte.

CSV schemas:
  path scans    (pair_id, mode, x, train_error[, loss])
  local energy  (algorithm, amplitude, mean_dE, std_dE, samples)
  planes        (i, j, u, v, train_error)
  distances     (group_a, group_b, raw_mean, raw_std, aligned_mean, aligned_std)
  barriers      (pair_family, mode, mean_barrier, std_barrier, num_paths)
"""

import hashlib
import json
from pathlib import Path

import numpy as np

from . import kernels
from .checkpoint import save_checkpoint
from .data import HmmConfig, hmm_generate, parity_labels, read_idx, standardize
from .errors import ConfigError
from .nets import Dataset, Network, random_network, train_error
from .probes import (barrier, distance_study, local_energy, path_scan,
                     plane_scan)
from .symmetry import align
from .training import (AdvConfig, ReplicaConfig, TrainConfig, adv_init_train,
                       rsgd_train, sgd_train)

EXPERIMENT_KINDS = ("hmm_sweep", "mnist_parity", "flatness", "paths",
                    "plane", "distances")
ALGORITHMS = ("sgd", "rsgd", "adv")


def derive_seed(master: int, *tags) -> int:
    """Stable 63-bit stream seed for a tagged sub-task of a run."""
    text = f"{master}|" + "|".join(str(t) for t in tags)
    digest = hashlib.blake2b(text.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# config schema
# ---------------------------------------------------------------------------

def _require_keys(section, allowed, required, where):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    missing = set(required) - set(section)
    if missing:
        raise ConfigError(f"missing key(s) {sorted(missing)} in {where}")


_TRAIN_KEYS = ("epochs", "batch_size", "lr0", "momentum", "nesterov",
               "schedule", "loss")


def _train_config(section, where, default_loss, seed) -> TrainConfig:
    _require_keys(section, _TRAIN_KEYS, ("epochs", "batch_size", "lr0"), where)
    return TrainConfig(
        epochs=int(section["epochs"]),
        batch_size=int(section["batch_size"]),
        lr0=float(section["lr0"]),
        momentum=float(section.get("momentum", 0.0)),
        nesterov=bool(section.get("nesterov", False)),
        schedule=str(section.get("schedule", "constant")),
        loss=str(section.get("loss", default_loss)),
        seed=seed,
    )


def validate_config(config: dict) -> dict:
    """Schema-check a raw config dict; returns it with defaults resolved."""
    _require_keys(config, ("experiment", "seed", "output_dir", "data", "model",
                           "train", "solutions_per_algorithm", "probes"),
                  ("experiment", "seed", "data", "model", "train"), "config")
    kind = config["experiment"]
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    if not isinstance(config["seed"], int):
        raise ConfigError("seed must be an integer (no implicit default)")

    data = config["data"]
    _require_keys(data, ("kind", "teacher_dim", "patterns", "test_patterns",
                         "student_dims", "images", "labels", "test_images",
                         "test_labels", "subset"),
                  ("kind",), "config.data")
    if data["kind"] == "hmm":
        _require_keys(data, ("kind", "teacher_dim", "patterns", "test_patterns",
                             "student_dims"),
                      ("kind", "teacher_dim", "patterns", "test_patterns",
                       "student_dims"), "config.data")
        if not isinstance(data["student_dims"], list) or not data["student_dims"]:
            raise ConfigError("config.data.student_dims must be a non-empty list")
    elif data["kind"] == "idx_parity":
        _require_keys(data, ("kind", "images", "labels", "test_images",
                             "test_labels", "subset"),
                      ("kind", "images", "labels"), "config.data")
    else:
        raise ConfigError(f"unknown data kind {data['kind']!r}")

    model = config["model"]
    _require_keys(model, ("hidden", "activation", "binary", "committee",
                          "outputs"),
                  ("hidden", "activation", "binary"), "config.model")
    if model["activation"] not in ("relu", "sign"):
        raise ConfigError("model.activation must be relu or sign")

    train = config["train"]
    _require_keys(train, ALGORITHMS, (), "config.train")
    if not train:
        raise ConfigError("config.train must name at least one algorithm")
    for algo, section in train.items():
        where = f"config.train.{algo}"
        if algo == "sgd":
            _require_keys(section, _TRAIN_KEYS, ("epochs", "batch_size", "lr0"), where)
        elif algo == "rsgd":
            _require_keys(section, ("base", "num_replicas", "gamma0", "gamma1"),
                          ("base", "num_replicas", "gamma0", "gamma1"), where)
            _require_keys(section["base"], _TRAIN_KEYS,
                          ("epochs", "batch_size", "lr0"), where + ".base")
        elif algo == "adv":
            _require_keys(section, ("replication", "zero_pixel_fraction",
                                    "pretrain", "finetune"),
                          ("replication", "zero_pixel_fraction", "pretrain",
                           "finetune"), where)
            for stage in ("pretrain", "finetune"):
                _require_keys(section[stage], _TRAIN_KEYS,
                              ("epochs", "batch_size", "lr0"), f"{where}.{stage}")

    probes = config.get("probes", {})
    _require_keys(probes, ("amplitudes", "samples", "points",
                           "path_realizations", "pairs_per_family",
                           "resolution", "margin", "plane_group",
                           "plane_aligned", "modes"),
                  (), "config.probes")
    resolved = dict(config)
    resolved["solutions_per_algorithm"] = int(config.get("solutions_per_algorithm", 3))
    resolved["probes"] = dict(probes)
    return resolved


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _build_dataset(data_cfg, student_dim, master_seed):
    if data_cfg["kind"] == "hmm":
        cfg = HmmConfig(D=int(data_cfg["teacher_dim"]), N=int(student_dim),
                        P=int(data_cfg["patterns"]),
                        P_test=int(data_cfg["test_patterns"]),
                        seed=derive_seed(master_seed, "hmm", student_dim))
        return hmm_generate(cfg)
    images = read_idx(data_cfg["images"])
    labels = read_idx(data_cfg["labels"])
    x = standardize(images.reshape(images.shape[0], -1))
    y = parity_labels(labels)
    subset = int(data_cfg.get("subset", x.shape[0]))
    train = Dataset(x[:subset], y[:subset], 2)
    if "test_images" in data_cfg:
        ti = read_idx(data_cfg["test_images"])
        tl = read_idx(data_cfg["test_labels"])
        test = Dataset(standardize(ti.reshape(ti.shape[0], -1)),
                       parity_labels(tl), 2)
    else:
        test = Dataset(x[subset:], y[subset:], 2) if subset < x.shape[0] else None
    return train, test


def _template(model_cfg, input_dim, seed) -> Network:
    sizes = [int(input_dim)] + [int(h) for h in model_cfg["hidden"]] \
        + [int(model_cfg.get("outputs", 1))]
    return random_network(sizes,
                          activation=model_cfg["activation"],
                          binary=bool(model_cfg["binary"]),
                          committee=bool(model_cfg.get("committee", False)),
                          seed=seed)


def train_solution_set(config, data, test, student_dim, master_seed):
    """Train ``solutions_per_algorithm`` solutions for every configured
    algorithm; returns ({algo: [Network]}, summary rows)."""
    model_cfg = config["model"]
    default_loss = ("binary_cross_entropy"
                    if int(model_cfg.get("outputs", 1)) == 1 else "cross_entropy")
    count = config["solutions_per_algorithm"]
    groups, rows = {}, []
    for algo, section in config["train"].items():
        nets = []
        for k in range(count):
            seed = derive_seed(master_seed, "train", algo, student_dim, k)
            template = _template(model_cfg, data.num_features,
                                 derive_seed(master_seed, "init", algo, student_dim, k))
            if algo == "sgd":
                cfg = _train_config(section, "train.sgd", default_loss, seed)
                net, trace = sgd_train(template, data, cfg, test_data=test)
            elif algo == "rsgd":
                cfg = _train_config(section["base"], "train.rsgd.base",
                                    default_loss, seed)
                rep = ReplicaConfig(int(section["num_replicas"]),
                                    float(section["gamma0"]),
                                    float(section["gamma1"]))
                net, trace = rsgd_train(template, data, cfg, rep, test_data=test)
            else:
                adv = AdvConfig(
                    replication=int(section["replication"]),
                    zero_pixel_fraction=float(section["zero_pixel_fraction"]),
                    pretrain=_train_config(section["pretrain"],
                                           "train.adv.pretrain", default_loss,
                                           derive_seed(seed, "pre")),
                    finetune=_train_config(section["finetune"],
                                           "train.adv.finetune", default_loss,
                                           derive_seed(seed, "fine")))
                net, trace = adv_init_train(template, data, adv,
                                            derive_seed(seed, "poison"),
                                            test_data=test)
            nets.append(net)
            rows.append((algo, student_dim, k,
                         train_error(net, data),
                         float(trace.test_error[-1]) if len(trace) else float("nan")))
        groups[algo] = nets
    return groups, rows


def _pairs_for_family(groups, ga, gb, cap):
    if ga == gb:
        members = groups[ga]
        pairs = [((ga, i), (gb, j)) for i in range(len(members))
                 for j in range(i + 1, len(members))]
    else:
        pairs = [((ga, i), (gb, j)) for i in range(len(groups[ga]))
                 for j in range(len(groups[gb]))]
    return pairs[:cap]


def barrier_study(groups, data, binary, master_seed, points=25,
                  realizations=5, pairs_per_family=5, modes=None):
    """Scan paths for every pair family; returns (scan rows, barrier rows).

    Binary networks get raw and aligned random Hamming paths (each averaged
    over ``realizations`` flip orders); continuous networks get the
    requested modes (default linear, linear_aligned, geodesic_aligned).
    """
    names = list(groups)
    scan_rows, barrier_rows = [], []
    if binary:
        mode_list = ["raw", "aligned"]
    else:
        mode_list = list(modes or ("linear", "linear_aligned", "geodesic_aligned"))
    for ia, ga in enumerate(names):
        for gb in names[ia:]:
            family = f"{ga}-{gb}"
            pairs = _pairs_for_family(groups, ga, gb, pairs_per_family)
            for mode in mode_list:
                barriers = []
                for (ga_, i), (gb_, j) in pairs:
                    a = groups[ga_][i]
                    b = groups[gb_][j]
                    pair_id = f"{ga_}{i}-{gb_}{j}"
                    if binary:
                        target = b if mode == "raw" else align(a, b)[0]
                        for r in range(realizations):
                            scan = path_scan(a, target, data, "hamming", points,
                                             derive_seed(master_seed, "path",
                                                         family, i, j, mode, r))
                            barriers.append(barrier(scan))
                            scan_rows.extend(
                                (f"{pair_id}/{mode}/r{r}", scan.mode, x, e)
                                for x, e in zip(scan.fractions, scan.train_errors))
                    else:
                        scan = path_scan(a, b, data, mode, points,
                                         derive_seed(master_seed, "path",
                                                     family, i, j, mode))
                        barriers.append(barrier(scan))
                        scan_rows.extend(
                            (pair_id, scan.mode, x, e)
                            for x, e in zip(scan.fractions, scan.train_errors))
                arr = np.array(barriers)
                barrier_rows.append((family, mode, float(arr.mean()),
                                     float(arr.std()), arr.size))
    return scan_rows, barrier_rows


def local_energy_rows(groups, data, mode, amplitudes, samples, master_seed):
    rows = []
    for algo, nets in groups.items():
        for k, net in enumerate(nets):
            prof = local_energy(net, data, amplitudes=amplitudes,
                                samples=samples, mode=mode,
                                seed=derive_seed(master_seed, "locen", algo, k))
            rows.extend((algo, amp, m, s, prof.samples)
                        for amp, m, s in zip(prof.amplitudes, prof.mean_delta,
                                             prof.std_delta))
    return rows


def _distance_rows(groups, binary):
    return [(r.group_a, r.group_b, r.raw_mean, r.raw_std,
             r.aligned_mean, r.aligned_std)
            for r in distance_study(groups, binary)]


def _save_group_checkpoints(groups, out, tag, run_seed):
    for algo, nets in groups.items():
        for k, net in enumerate(nets):
            save_checkpoint(net, out / "checkpoints" / f"{tag}{algo}_{k}.ckpt",
                            metadata={"algorithm": algo, "index": k},
                            seed_lineage={"master_seed": run_seed})


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

_SOLUTION_HEADER = ("algorithm", "student_dim", "index", "train_error", "test_error")
_BARRIER_HEADER = ("pair_family", "mode", "mean_barrier", "std_barrier", "num_paths")
_LOCEN_HEADER = ("algorithm", "amplitude", "mean_dE", "std_dE", "samples")
_SCAN_HEADER = ("pair_id", "mode", "x", "train_error")
_DIST_HEADER = ("group_a", "group_b", "raw_mean", "raw_std",
                "aligned_mean", "aligned_std")


def _probe_params(config, binary):
    p = config["probes"]
    return {
        "amplitudes": p.get("amplitudes"),
        "samples": p.get("samples"),
        "points": int(p.get("points", 25)),
        "realizations": int(p.get("path_realizations", 5)),
        "pairs_per_family": int(p.get("pairs_per_family", 5)),
        "mode": "binary" if binary else "continuous",
    }


def _run_single_dim(config, out, student_dim, tag=""):
    seed = config["seed"]
    data, test = _build_dataset(config["data"], student_dim, seed)
    if student_dim is None:
        student_dim = data.num_features
    groups, rows = train_solution_set(config, data, test, student_dim, seed)
    prefix = f"{tag}_" if tag else ""
    _save_group_checkpoints(groups, out, prefix, seed)
    write_csv(out / (f"solutions_{tag}.csv" if tag else "solutions.csv"),
              _SOLUTION_HEADER, rows)
    return data, test, groups


def _run_flatness(config, out):
    dim = _single_dim(config)
    data, _, groups = _run_single_dim(config, out, dim)
    p = _probe_params(config, config["model"]["binary"])
    rows = local_energy_rows(groups, data, p["mode"], p["amplitudes"],
                             p["samples"], config["seed"])
    write_csv(out / "local_energy.csv", _LOCEN_HEADER, rows)


def _run_paths(config, out):
    dim = _single_dim(config)
    data, _, groups = _run_single_dim(config, out, dim)
    binary = bool(config["model"]["binary"])
    p = _probe_params(config, binary)
    scans, barriers = barrier_study(groups, data, binary, config["seed"],
                                    points=p["points"],
                                    realizations=p["realizations"],
                                    pairs_per_family=p["pairs_per_family"],
                                    modes=config["probes"].get("modes"))
    write_csv(out / "path_scans.csv", _SCAN_HEADER, scans)
    write_csv(out / "barriers.csv", _BARRIER_HEADER, barriers)


def _run_distances(config, out):
    dim = _single_dim(config)
    data, _, groups = _run_single_dim(config, out, dim)
    write_csv(out / "distances.csv", _DIST_HEADER,
              _distance_rows(groups, bool(config["model"]["binary"])))


def _run_plane(config, out):
    dim = _single_dim(config)
    data, _, groups = _run_single_dim(config, out, dim)
    binary = bool(config["model"]["binary"])
    p = config["probes"]
    group = p.get("plane_group") or next(iter(groups))
    nets = groups[group][:3]
    if len(nets) < 3:
        raise ConfigError("plane experiments need at least 3 solutions")
    if p.get("plane_aligned", False):
        nets = [nets[0]] + [align(nets[0], n)[0] for n in nets[1:]]
    grid = plane_scan(nets[0], nets[1], nets[2], data,
                      resolution=int(p.get("resolution", 15)),
                      margin=float(p.get("margin", 0.2)),
                      binarized=binary, normalized=not binary)
    rows = [(i, j, grid.u_axis[i], grid.v_axis[j], grid.errors[i, j])
            for i in range(grid.u_axis.size) for j in range(grid.v_axis.size)]
    write_csv(out / "plane.csv", ("i", "j", "u", "v", "train_error"), rows)


def _run_sweep(config, out):
    binary = bool(config["model"]["binary"])
    p = _probe_params(config, binary)
    families_by_n = {}
    for dim in config["data"]["student_dims"]:
        tag = f"N{dim}"
        data, _, groups = _run_single_dim(config, out, dim, tag=tag)
        rows = local_energy_rows(groups, data, p["mode"], p["amplitudes"],
                                 p["samples"], derive_seed(config["seed"], tag))
        write_csv(out / f"local_energy_{tag}.csv", _LOCEN_HEADER, rows)
        write_csv(out / f"distances_{tag}.csv", _DIST_HEADER,
                  _distance_rows(groups, binary))
        _, barriers = barrier_study(groups, data, binary,
                                    derive_seed(config["seed"], "paths", tag),
                                    points=p["points"],
                                    realizations=p["realizations"],
                                    pairs_per_family=p["pairs_per_family"],
                                    modes=config["probes"].get("modes"))
        for family, mode, mean, std, num in barriers:
            families_by_n.setdefault(family, []).append((dim, mode, mean, std, num))
    for family, rows in families_by_n.items():
        write_csv(out / f"barriers_{family}.csv",
                  ("student_dim", "mode", "mean_barrier", "std_barrier",
                   "num_paths"), rows)


def _run_mnist_parity(config, out):
    dim = None        # data files fix the input dimension
    data, test, groups = _run_single_dim(config, out, dim)
    binary = bool(config["model"]["binary"])
    p = _probe_params(config, binary)
    rows = local_energy_rows(groups, data, p["mode"], p["amplitudes"],
                             p["samples"], config["seed"])
    write_csv(out / "local_energy.csv", _LOCEN_HEADER, rows)
    scans, barriers = barrier_study(groups, data, binary, config["seed"],
                                    points=p["points"],
                                    realizations=p["realizations"],
                                    pairs_per_family=p["pairs_per_family"])
    write_csv(out / "path_scans.csv", _SCAN_HEADER, scans)
    write_csv(out / "barriers.csv", _BARRIER_HEADER, barriers)
    write_csv(out / "distances.csv", _DIST_HEADER, _distance_rows(groups, binary))


def _single_dim(config):
    data = config["data"]
    if data["kind"] == "hmm":
        dims = data["student_dims"]
        if len(dims) != 1:
            raise ConfigError("this experiment kind needs exactly one student_dim")
        return int(dims[0])
    return None


_RUNNERS = {
    "flatness": _run_flatness,
    "paths": _run_paths,
    "distances": _run_distances,
    "plane": _run_plane,
    "hmm_sweep": _run_sweep,
    "mnist_parity": _run_mnist_parity,
}


def run_experiment(config, out_dir=None) -> Path:
    """Validate the config, run the pipeline, return the artifact directory."""
    if isinstance(config, (str, Path)):
        config = json.loads(Path(config).read_text())
    config = validate_config(config)
    out = Path(out_dir) if out_dir is not None else config.get("output_dir")
    if out is None:
        raise ConfigError("no output directory (set output_dir or pass --out)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _RUNNERS[config["experiment"]](config, out)
    manifest = {"config": config, "backend": kernels.BACKEND,
                "package": "netgeom 0.1.0"}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True,
                                                  indent=2) + "\n")
    return out
