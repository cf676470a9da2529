import json
import subprocess
import sys

import numpy as np
import pytest

import netgeom as ng
from netgeom.checkpoint import read_manifest
from netgeom.cli import main
from netgeom.data import save_dataset
from netgeom.errors import (ChecksumError, ConfigError, PayloadLengthError,
                            SchemaVersionError, ShapeError)
from netgeom.experiments import run_experiment, validate_config, write_csv


# --- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip_continuous(tmp_path):
    net = ng.random_network([5, 8, 8, 3], seed=1)
    path = ng.save_checkpoint(net, tmp_path / "net.ckpt",
                              metadata={"algorithm": "sgd"})
    back = ng.load_checkpoint(path)
    assert back.layers == net.layers
    for w1, w2 in zip(net.weights, back.weights):
        assert np.array_equal(w1, w2)


def test_checkpoint_round_trip_binary_latent(tmp_path):
    net = ng.random_network([6, 7, 1], activation="sign", binary=True,
                            committee=True, seed=2)
    back = ng.load_checkpoint(ng.save_checkpoint(net, tmp_path / "b.ckpt"))
    for g1, g2 in zip(net.latent, back.latent):
        assert np.array_equal(g1, g2)
    for w1, w2 in zip(net.weights, back.weights):
        assert np.array_equal(w1, w2)
    assert back.layers[-1].frozen


def test_checkpoint_round_trip_with_bias(tmp_path):
    net = ng.random_network([4, 6, 2], has_bias=True, seed=3)
    back = ng.load_checkpoint(ng.save_checkpoint(net, tmp_path / "c.ckpt"))
    for b1, b2 in zip(net.biases, back.biases):
        assert np.array_equal(b1, b2)


def test_checkpoint_truncated_payload(tmp_path):
    net = ng.random_network([4, 5, 2], seed=4)
    path = ng.save_checkpoint(net, tmp_path / "t.ckpt")
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(PayloadLengthError):
        ng.load_checkpoint(path)


def test_checkpoint_corrupted_payload(tmp_path):
    net = ng.random_network([4, 5, 2], seed=5)
    path = ng.save_checkpoint(net, tmp_path / "x.ckpt")
    raw = bytearray(path.read_bytes())
    raw[-3] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        ng.load_checkpoint(path)


def test_checkpoint_schema_version_mismatch(tmp_path):
    net = ng.random_network([3, 4, 2], seed=6)
    path = ng.save_checkpoint(net, tmp_path / "v.ckpt")
    raw = path.read_bytes()
    mlen = int.from_bytes(raw[4:8], "little")
    manifest = json.loads(raw[8:8 + mlen])
    manifest["schema_version"] = 99
    blob = json.dumps(manifest, sort_keys=True).encode()
    path.write_bytes(raw[:4] + len(blob).to_bytes(4, "little") + blob
                     + raw[8 + mlen:])
    with pytest.raises(SchemaVersionError):
        ng.load_checkpoint(path)


def test_checkpoint_manifest_architecture_mismatch(tmp_path):
    net = ng.random_network([3, 4, 2], seed=7)
    path = ng.save_checkpoint(net, tmp_path / "m.ckpt")
    raw = path.read_bytes()
    mlen = int.from_bytes(raw[4:8], "little")
    manifest = json.loads(raw[8:8 + mlen])
    manifest["layers"][0]["fan_out"] = 9
    blob = json.dumps(manifest, sort_keys=True).encode()
    path.write_bytes(raw[:4] + len(blob).to_bytes(4, "little") + blob
                     + raw[8 + mlen:])
    with pytest.raises(PayloadLengthError):
        ng.load_checkpoint(path)


def test_checkpoint_rejects_float64(tmp_path):
    net = ng.random_network([3, 4, 2], seed=8, dtype=np.float64)
    with pytest.raises(ShapeError):
        ng.save_checkpoint(net, tmp_path / "d.ckpt")


def test_checkpoint_manifest_fields(tmp_path):
    net = ng.random_network([3, 4, 2], seed=9)
    path = ng.save_checkpoint(net, tmp_path / "f.ckpt",
                              metadata={"algorithm": "rsgd"},
                              seed_lineage={"master_seed": 7})
    manifest = read_manifest(path)
    assert manifest["schema_version"] == 1
    assert manifest["training"] == {"algorithm": "rsgd"}
    assert manifest["seed_lineage"] == {"master_seed": 7}


# --- config validation -------------------------------------------------------------

def tiny_config(tmp_path, experiment="flatness"):
    return {
        "experiment": experiment,
        "seed": 12345,
        "output_dir": str(tmp_path / "run"),
        "data": {"kind": "hmm", "teacher_dim": 20, "patterns": 60,
                 "test_patterns": 40, "student_dims": [40]},
        "model": {"hidden": [], "activation": "sign", "binary": True},
        "train": {
            "sgd": {"epochs": 30, "batch_size": 20, "lr0": 1.0,
                    "schedule": "cosine", "loss": "binary_cross_entropy"},
        },
        "solutions_per_algorithm": 2,
        "probes": {"amplitudes": [0.0, 0.02], "samples": 4, "points": 7,
                   "path_realizations": 2, "pairs_per_family": 2},
    }


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tiny_config(tmp_path)
    cfg["unexpected"] = 1
    with pytest.raises(ConfigError):
        validate_config(cfg)
    cfg = tiny_config(tmp_path)
    cfg["probes"]["wrong"] = 2
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_config_requires_seed(tmp_path):
    cfg = tiny_config(tmp_path)
    del cfg["seed"]
    with pytest.raises(ConfigError):
        validate_config(cfg)
    cfg = tiny_config(tmp_path)
    cfg["seed"] = "not-an-int"
    with pytest.raises(ConfigError):
        validate_config(cfg)


def test_config_rejects_unknown_experiment(tmp_path):
    cfg = tiny_config(tmp_path)
    cfg["experiment"] = "mystery"
    with pytest.raises(ConfigError):
        validate_config(cfg)


# --- run_experiment ------------------------------------------------------------------

def test_flatness_experiment_outputs(tmp_path):
    out = run_experiment(tiny_config(tmp_path))
    locen = (out / "local_energy.csv").read_text().splitlines()
    assert locen[0] == "algorithm,amplitude,mean_dE,std_dE,samples"
    assert len(locen) == 1 + 2 * 2     # 2 solutions x 2 amplitudes
    assert (out / "solutions.csv").exists()
    assert (out / "manifest.json").exists()
    assert list((out / "checkpoints").glob("*.ckpt"))


def test_experiment_determinism_byte_identical(tmp_path):
    cfg = tiny_config(tmp_path, experiment="paths")
    out1 = run_experiment(cfg, out_dir=tmp_path / "r1")
    out2 = run_experiment(cfg, out_dir=tmp_path / "r2")
    for name in ("path_scans.csv", "barriers.csv", "solutions.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_paths_experiment_schema(tmp_path):
    out = run_experiment(tiny_config(tmp_path, experiment="paths"))
    scans = (out / "path_scans.csv").read_text().splitlines()
    assert scans[0] == "pair_id,mode,x,train_error"
    barriers = (out / "barriers.csv").read_text().splitlines()
    assert barriers[0] == "pair_family,mode,mean_barrier,std_barrier,num_paths"
    assert any(line.startswith("sgd-sgd,raw") for line in barriers[1:])
    assert any(line.startswith("sgd-sgd,aligned") for line in barriers[1:])


def test_distances_experiment_schema(tmp_path):
    out = run_experiment(tiny_config(tmp_path, experiment="distances"))
    rows = (out / "distances.csv").read_text().splitlines()
    assert rows[0] == "group_a,group_b,raw_mean,raw_std,aligned_mean,aligned_std"
    assert len(rows) == 2              # single group -> one row


def test_csv_floats_round_trip(tmp_path):
    path = write_csv(tmp_path / "x.csv", ("a", "b"), [(0.1 + 0.2, 1)])
    line = path.read_text().splitlines()[1]
    assert float(line.split(",")[0]) == 0.1 + 0.2


# --- CLI -------------------------------------------------------------------------------

def test_cli_hmm_gen_and_train_and_scan(tmp_path):
    data_dir = tmp_path / "data"
    rc = main(["hmm-gen", "--teacher-dim", "20", "--student-dim", "60",
               "--patterns", "80", "--test-patterns", "20",
               "--seed", "3", "--out", str(data_dir)])
    assert rc == 0
    assert (data_dir / "train" / "inputs.npy").exists()

    cks = []
    for i in range(2):
        ck = tmp_path / f"sol{i}.ckpt"
        rc = main(["train", "--data", str(data_dir), "--algo", "sgd",
                   "--binary", "--epochs", "40", "--batch-size", "20",
                   "--lr0", "1.0", "--schedule", "cosine",
                   "--seed", str(10 + i), "--out", str(ck)])
        assert rc == 0
        cks.append(ck)

    csv = tmp_path / "scan.csv"
    rc = main(["scan-path", "--a", str(cks[0]), "--b", str(cks[1]),
               "--data", str(data_dir / "train"), "--mode", "hamming",
               "--points", "9", "--seed", "5", "--out", str(csv)])
    assert rc == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "pair_id,mode,x,train_error"
    assert len(lines) == 10


def test_cli_normalize_align_roundtrip(tmp_path):
    a = ng.random_network([6, 8, 2], seed=11)
    b = ng.random_network([6, 8, 2], seed=12)
    pa, pb = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    ng.save_checkpoint(a, pa)
    ng.save_checkpoint(b, pb)
    na = tmp_path / "a_norm.ckpt"
    assert main(["normalize", "--net", str(pa), "--out", str(na)]) == 0
    nb = tmp_path / "b_norm.ckpt"
    assert main(["normalize", "--net", str(pb), "--out", str(nb)]) == 0
    al = tmp_path / "b_al.ckpt"
    assert main(["align", "--ref", str(na), "--net", str(nb),
                 "--out", str(al)]) == 0
    aligned = ng.load_checkpoint(al)
    ref = ng.load_checkpoint(na)
    assert ng.geodesic_distance(ref, aligned) <= ng.geodesic_distance(
        ref, ng.load_checkpoint(nb)) + 1e-9


def test_cli_local_energy_and_distances(tmp_path):
    data_dir = tmp_path / "d"
    train, _ = ng.hmm_generate(ng.HmmConfig(D=15, N=40, P=60, P_test=10, seed=4))
    save_dataset(train, data_dir)
    nets = [ng.random_network([40, 1], activation="sign", binary=True, seed=s)
            for s in (1, 2, 3, 4)]
    paths = []
    for i, n in enumerate(nets):
        p = tmp_path / f"n{i}.ckpt"
        ng.save_checkpoint(n, p)
        paths.append(str(p))
    out = tmp_path / "le.csv"
    rc = main(["local-energy", "--net", paths[0], "--data", str(data_dir),
               "--amplitudes", "0.0", "0.02", "--samples", "3",
               "--seed", "1", "--out", str(out)])
    assert rc == 0
    assert out.read_text().splitlines()[0] == "algorithm,amplitude,mean_dE,std_dE,samples"

    dout = tmp_path / "dist.csv"
    rc = main(["distances", "--group", f"g1={paths[0]},{paths[1]}",
               "--group", f"g2={paths[2]},{paths[3]}", "--binary",
               "--out", str(dout)])
    assert rc == 0
    assert len(dout.read_text().splitlines()) == 4   # header + 3 group pairs


def test_cli_exit_codes(tmp_path):
    # config error: unknown mode string rejected by argparse -> 2
    assert main(["scan-path", "--a", "x", "--b", "y", "--data", "z",
                 "--mode", "bogus", "--seed", "1", "--out", "o"]) == 2
    # i/o error: missing checkpoint -> 4
    assert main(["normalize", "--net", str(tmp_path / "missing.ckpt"),
                 "--out", str(tmp_path / "o.ckpt")]) == 4
    # numeric error: normalize on a zero-norm unit -> 3
    w0 = np.zeros((3, 4), np.float32)
    w1 = np.ones((2, 3), np.float32)
    bad = ng.make_network([w0, w1])
    p = tmp_path / "bad.ckpt"
    ng.save_checkpoint(bad, p)
    assert main(["normalize", "--net", str(p),
                 "--out", str(tmp_path / "out.ckpt")]) == 3


def test_cli_run_subcommand(tmp_path):
    cfg = tiny_config(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    rc = main(["run", str(cfg_path), "--out", str(tmp_path / "runout")])
    assert rc == 0
    assert (tmp_path / "runout" / "local_energy.csv").exists()


def test_cli_entry_point_subprocess(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "netgeom.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for sub in ("hmm-gen", "train", "normalize", "align", "scan-path",
                "scan-plane", "local-energy", "distances",
                "optimize-midpoint", "run"):
        assert sub in proc.stdout


def test_mnist_parity_pipeline_on_synthetic_idx(tmp_path):
    # synthetic digit images whose parity is encoded in one corner pixel
    rng = np.random.default_rng(0)
    digits = rng.integers(0, 10, 120)
    imgs = rng.integers(0, 255, (120, 7, 7)).astype(np.uint8)
    imgs[:, 0, 0] = np.where(digits % 2 == 0, 250, 3)
    ng.write_idx(tmp_path / "imgs.idx.gz", imgs)
    ng.write_idx(tmp_path / "labels.idx", digits.astype(np.uint8))
    cfg = {
        "experiment": "mnist_parity",
        "seed": 99,
        "data": {"kind": "idx_parity", "images": str(tmp_path / "imgs.idx.gz"),
                 "labels": str(tmp_path / "labels.idx"), "subset": 100},
        "model": {"hidden": [9], "activation": "sign", "binary": True},
        "train": {"sgd": {"epochs": 60, "batch_size": 20, "lr0": 2.0,
                          "schedule": "cosine", "loss": "binary_cross_entropy"}},
        "solutions_per_algorithm": 2,
        "probes": {"amplitudes": [0.0, 0.02], "samples": 3, "points": 7,
                   "path_realizations": 2, "pairs_per_family": 1},
    }
    out = run_experiment(cfg, out_dir=tmp_path / "run")
    produced = {p.name for p in out.iterdir()}
    assert {"barriers.csv", "distances.csv", "local_energy.csv",
            "path_scans.csv", "solutions.csv", "manifest.json"} <= produced
    rows = (out / "solutions.csv").read_text().splitlines()[1:]
    assert all(float(r.split(",")[3]) < 0.01 for r in rows)


def test_cli_scan_plane(tmp_path):
    data_dir = tmp_path / "d"
    train, _ = ng.hmm_generate(ng.HmmConfig(D=15, N=40, P=60, P_test=10, seed=6))
    save_dataset(train, data_dir)
    paths = []
    for i in range(3):
        net = ng.random_network([40, 1], activation="sign", binary=True,
                                seed=20 + i)
        p = tmp_path / f"p{i}.ckpt"
        ng.save_checkpoint(net, p)
        paths.append(str(p))
    out = tmp_path / "plane.csv"
    rc = main(["scan-plane", "--a", paths[0], "--b", paths[1], "--c", paths[2],
               "--data", str(data_dir), "--binary", "--resolution", "5",
               "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "i,j,u,v,train_error"
    assert len(lines) == 1 + 25


def test_cli_optimize_midpoint(tmp_path):
    data_dir = tmp_path / "d"
    train, _ = ng.hmm_generate(ng.HmmConfig(D=75, N=301, P=225, P_test=50,
                                            seed=2))
    save_dataset(train, data_dir)
    from netgeom.training import TrainConfig, sgd_train
    cks = []
    for init_seed, train_seed in ((60, 0), (61, 1)):
        net = ng.random_network([301, 1], activation="sign", binary=True,
                                seed=init_seed)
        sol, _ = sgd_train(net, train, TrainConfig(
            epochs=100, batch_size=25, lr0=1.0, schedule="cosine",
            loss="binary_cross_entropy", seed=train_seed))
        p = tmp_path / f"s{init_seed}.ckpt"
        ng.save_checkpoint(sol, p)
        cks.append(str(p))
    out = tmp_path / "opt.csv"
    rc = main(["optimize-midpoint", "--a", cks[0], "--b", cks[1],
               "--data", str(data_dir), "--binary", "--epochs", "100",
               "--batch-size", "25", "--lr0", "1.0", "--points", "9",
               "--seed", "9", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "pair_id,mode,x,train_error"
    assert len(lines) == 1 + 18          # two 9-point half-path scans


def test_plane_experiment_outputs(tmp_path):
    cfg = tiny_config(tmp_path, experiment="plane")
    cfg["solutions_per_algorithm"] = 3
    cfg["probes"] = {"resolution": 5, "margin": 0.1, "plane_group": "sgd",
                     "plane_aligned": True}
    out = run_experiment(cfg)
    lines = (out / "plane.csv").read_text().splitlines()
    assert lines[0] == "i,j,u,v,train_error"
    assert len(lines) == 1 + 25


def test_hmm_sweep_experiment_outputs(tmp_path):
    cfg = tiny_config(tmp_path, experiment="hmm_sweep")
    cfg["data"]["student_dims"] = [40, 80]
    out = run_experiment(cfg)
    for dim in (40, 80):
        assert (out / f"local_energy_N{dim}.csv").exists()
        assert (out / f"distances_N{dim}.csv").exists()
        assert (out / f"solutions_N{dim}.csv").exists()
    barrier_files = sorted(p.name for p in out.glob("barriers_*.csv"))
    assert barrier_files == ["barriers_sgd-sgd.csv"]
    lines = (out / "barriers_sgd-sgd.csv").read_text().splitlines()
    assert lines[0] == "student_dim,mode,mean_barrier,std_barrier,num_paths"
    assert len(lines) == 1 + 4      # 2 dims x {raw, aligned}


def test_cli_optimize_midpoint_continuous_defaults():
    from netgeom.cli import build_parser
    args = build_parser().parse_args(
        ["optimize-midpoint", "--a", "a", "--b", "b", "--data", "d",
         "--seed", "1", "--out", "o"])
    assert args.epochs == 300
    assert args.batch_size == 128
    assert args.lr0 == 0.02
    assert not args.binary           # continuous path uses Nesterov momentum
