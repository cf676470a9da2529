"""Landscape measurements around and between solutions.

Everything here evaluates the train-error ("energy") landscape: flatness
profiles under random perturbations, error scans along paths between two
solutions, optimized single-bend paths through a retrained midpoint,
error grids on the plane spanned by three solutions, and distance tables
between groups of solutions before/after symmetry removal.
"""

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, ConvergenceError, DegeneratePlaneError, ShapeError
from .geometry import (hamming_distance, hamming_state, midpoint,
                       network_geodesic, random_hamming_path)
from .nets import Dataset, Network, flatten_params, forward, train_error, unflatten_params
from .symmetry import align, apply_plan, normalize
from .training import TrainConfig, _loss_and_delta, sgd_train

PATH_MODES = ("linear", "linear_aligned", "geodesic_aligned", "hamming")

CONTINUOUS_AMPLITUDES = tuple(np.round(np.linspace(0.0, 0.5, 11), 10))
BINARY_AMPLITUDES = tuple(np.round(np.linspace(0.0, 0.05, 11), 10))
DEFAULT_SAMPLES = {"continuous": 100, "binary": 10}


def net_id(net: Network) -> str:
    """Short content hash identifying a parameter configuration."""
    h = hashlib.blake2b(digest_size=6)
    for w in net.weights:
        h.update(np.ascontiguousarray(w).tobytes())
    for b in net.biases:
        if b is not None:
            h.update(np.ascontiguousarray(b).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class LocalEnergyProfile:
    """Mean/std of the train-error increase per perturbation amplitude."""

    mode: str
    amplitudes: np.ndarray
    mean_delta: np.ndarray
    std_delta: np.ndarray
    samples: int
    base_error: float


def _perturb_continuous(net, sigma, rng):
    ws = []
    for spec, w in zip(net.layers, net.weights):
        if spec.frozen:
            ws.append(w)
        else:
            z = rng.standard_normal(w.shape)
            ws.append((w.astype(np.float64) * (1.0 + sigma * z)).astype(w.dtype))
    return Network(net.layers, tuple(ws), net.biases, net.latent)


def _flip_random_fraction(net, eps, rng):
    sizes = [w.size if not s.frozen else 0 for s, w in zip(net.layers, net.weights)]
    total = sum(sizes)
    count = int(np.floor(eps * total))
    if count == 0:
        return net
    picks = np.sort(rng.choice(total, size=count, replace=False))
    ws = [w.copy() for w in net.weights]
    gs = [None if g is None else g.copy() for g in net.latent]
    offset = 0
    for idx, size in enumerate(sizes):
        here = picks[(picks >= offset) & (picks < offset + size)] - offset
        if here.size:
            flat = ws[idx].reshape(-1)
            flat[here] = -flat[here]
            if gs[idx] is not None:
                gs[idx].reshape(-1)[here] = flat[here]
        offset += size
    return Network(net.layers, tuple(ws), net.biases, tuple(gs))


def local_energy(net: Network, data: Dataset, amplitudes=None, samples=None,
                 mode=None, seed: int = 0) -> LocalEnergyProfile:
    """Flatness profile of a configuration.

    Continuous mode perturbs w -> w + sigma * z ⊙ w with z standard normal
    per coordinate; binary mode flips a uniformly random fraction eps of
    the (trainable) weights. The unperturbed error is subtracted, so the
    zero amplitude contributes exactly 0.
    """
    if mode is None:
        mode = "binary" if net.is_binary else "continuous"
    if mode not in ("continuous", "binary"):
        raise ConfigError(f"unknown local-energy mode {mode!r}")
    if mode == "continuous" and net.is_binary:
        raise ConfigError("continuous mode requires a continuous network")
    if mode == "binary" and not net.is_binary:
        raise ConfigError("binary mode requires a binary network")
    if amplitudes is None:
        amplitudes = CONTINUOUS_AMPLITUDES if mode == "continuous" else BINARY_AMPLITUDES
    amplitudes = np.asarray(amplitudes, dtype=np.float64)
    if samples is None:
        samples = DEFAULT_SAMPLES[mode]
    if samples < 1:
        raise ConfigError("samples must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    base = train_error(net, data)
    means = np.zeros_like(amplitudes)
    stds = np.zeros_like(amplitudes)
    for k, amp in enumerate(amplitudes):
        if amp == 0.0:
            continue
        deltas = np.empty(samples)
        for s in range(samples):
            if mode == "continuous":
                perturbed = _perturb_continuous(net, amp, rng)
            else:
                perturbed = _flip_random_fraction(net, amp, rng)
            deltas[s] = train_error(perturbed, data) - base
        means[k] = deltas.mean()
        stds[k] = deltas.std()
    return LocalEnergyProfile(mode, amplitudes, means, stds, int(samples), base)


@dataclass(frozen=True)
class PathScan:
    """Train error sampled along one path between two configurations."""

    mode: str
    fractions: np.ndarray
    train_errors: np.ndarray
    losses: Optional[np.ndarray]
    endpoint_a: str
    endpoint_b: str


def _lerp_network(a: Network, b: Network, x: float) -> Network:
    ws = tuple(((1.0 - x) * wa.astype(np.float64) + x * wb.astype(np.float64)).astype(wa.dtype)
               for wa, wb in zip(a.weights, b.weights))
    bs = tuple(None if ba is None else
               ((1.0 - x) * ba.astype(np.float64) + x * bb.astype(np.float64)).astype(ba.dtype)
               for ba, bb in zip(a.biases, b.biases))
    return Network(a.layers, ws, bs, a.latent)


def _mean_loss(net: Network, data: Dataset) -> float:
    kind = "binary_cross_entropy" if net.num_outputs == 1 else "cross_entropy"
    return _loss_and_delta(forward(net, data.inputs), data.labels, kind)[0]


def path_scan(a: Network, b: Network, data: Dataset, mode: str,
              points: int = 25, seed: int = 0, record_loss: bool = False) -> PathScan:
    """Scan the train error at ``points`` equispaced fractions (endpoints
    included) along a path between two networks.

    linear: straight line between the raw parameters. linear_aligned: the
    alignment permutation is computed on normalized copies, applied to the
    raw second network, then a straight line. geodesic_aligned: normalize,
    align, then the product-manifold geodesic. hamming: a seeded random
    shortest flip path (binary networks).
    """
    if mode not in PATH_MODES:
        raise ConfigError(f"unknown path mode {mode!r}")
    if a.layers != b.layers:
        raise ShapeError("endpoints must share an architecture")
    if points < 2:
        raise ConfigError("points must be >= 2")
    binary = a.is_binary
    if mode == "hamming" and not binary:
        raise ConfigError("hamming paths require binary networks")
    if mode != "hamming" and binary:
        raise ConfigError(f"{mode} paths require continuous networks")
    fractions = np.linspace(0.0, 1.0, points)

    if mode == "linear":
        nets = [_lerp_network(a, b, x) for x in fractions]
    elif mode == "linear_aligned":
        _, plan = align(normalize(a), normalize(b))
        b2 = apply_plan(b, plan)
        nets = [_lerp_network(a, b2, x) for x in fractions]
    elif mode == "geodesic_aligned":
        an = normalize(a)
        b_al, _ = align(an, normalize(b))
        nets = [network_geodesic(an, b_al, x) for x in fractions]
    else:
        path = random_hamming_path(a, b, seed)
        nets = [hamming_state(a, path, int(round(x * path.length))) for x in fractions]

    errors = np.array([train_error(n, data) for n in nets])
    losses = np.array([_mean_loss(n, data) for n in nets]) if record_loss else None
    return PathScan(mode, fractions, errors, losses, net_id(a), net_id(b))


def barrier(scan: PathScan) -> float:
    """The highest train error sampled along the path."""
    if scan.train_errors.size == 0:
        raise ShapeError("cannot take the barrier of an empty scan")
    return float(scan.train_errors.max())


def optimized_path(a: Network, b: Network, data: Dataset, cfg: TrainConfig,
                   mode: str, seed: int = 0, points: int = 25,
                   test_data: Optional[Dataset] = None):
    """Single-bend path: midpoint, retrained to (near-)zero error, joined
    to each endpoint by a fresh scan (geodesic for continuous networks,
    random Hamming for binary ones, with the midpoint re-aligned to each
    endpoint). Returns (scan A->M, scan M->B, barrier over their union)."""
    if mode not in ("continuous", "binary"):
        raise ConfigError(f"unknown optimized-path mode {mode!r}")
    for name, net in (("a", a), ("b", b)):
        err = train_error(net, data)
        if err >= 0.01:
            raise ConfigError(f"endpoint {name} is not a solution (train error {err:.4f})")

    if mode == "continuous":
        from .geometry import geodesic_distance
        an = normalize(a)
        b_al, _ = align(an, normalize(b))
        if geodesic_distance(an, b_al) < 1e-9:
            flat = path_scan(a, a, data, "geodesic_aligned", points)
            return flat, flat, barrier(flat)
        m0 = network_geodesic(an, b_al, 0.5)
    else:
        if hamming_distance(a, b) == 0:
            flat = path_scan(a, a, data, "hamming", points, seed)
            return flat, flat, barrier(flat)
        m0 = midpoint(a, b, "binary", seed)

    m, _ = sgd_train(m0, data, cfg)
    err = train_error(m, data)
    if err >= 0.01:
        raise ConvergenceError(
            f"optimized midpoint stuck at train error {err:.4f}", achieved_error=err)

    if mode == "continuous":
        scan_am = path_scan(a, m, data, "geodesic_aligned", points)
        scan_mb = path_scan(m, b, data, "geodesic_aligned", points)
    else:
        m_to_a, _ = align(a, m)
        scan_am = path_scan(a, m_to_a, data, "hamming", points, seed + 1)
        m_to_b, _ = align(b, m)
        scan_mb = path_scan(m_to_b, b, data, "hamming", points, seed + 2)
    return scan_am, scan_mb, max(barrier(scan_am), barrier(scan_mb))


@dataclass(frozen=True)
class PlaneGrid:
    """Orthonormal section through three anchor configurations plus the
    train errors on a grid spanning their triangle."""

    basis_u: np.ndarray
    basis_v: np.ndarray
    anchor_coords: np.ndarray   # (3, 2) in-plane coordinates
    u_axis: np.ndarray
    v_axis: np.ndarray
    errors: np.ndarray          # (len(u_axis), len(v_axis))
    normalized: bool
    binarized: bool


def plane_scan(w1: Network, w2: Network, w3: Network, data: Dataset,
               resolution: int = 21, margin: float = 0.2,
               normalized: bool = False, binarized: bool = False) -> PlaneGrid:
    """Error grid on the plane through three configurations.

    The basis comes from Gram-Schmidt on (w2-w1, w3-w1). In binarized mode
    the anchors' latent weights span the plane and every grid point is
    binarized before evaluation; in normalized mode every grid network is
    re-projected onto the sphere product before evaluation.
    """
    if not (w1.layers == w2.layers == w3.layers):
        raise ShapeError("plane anchors must share an architecture")
    if binarized and normalized:
        raise ConfigError("binarized and normalized modes are mutually exclusive")
    if binarized and not w1.is_binary:
        raise ConfigError("binarized mode needs networks with latent weights")
    if normalized and w1.is_binary:
        raise ConfigError("normalized mode applies to continuous networks")
    if resolution < 2:
        raise ConfigError("resolution must be >= 2")

    v1, v2, v3 = (flatten_params(n, use_latent=binarized) for n in (w1, w2, w3))
    d12 = np.linalg.norm(v2 - v1)
    if d12 == 0:
        raise DegeneratePlaneError("first two anchors coincide")
    u = (v2 - v1) / d12
    w = v3 - v1
    proj = float(w @ u)
    orth = w - proj * u
    northo = np.linalg.norm(orth)
    # threshold sits above float32 parameter quantization noise
    if northo <= 1e-5 * max(1.0, np.linalg.norm(w)):
        raise DegeneratePlaneError("anchors are collinear")
    v = orth / northo
    coords = np.array([[0.0, 0.0], [d12, 0.0], [proj, northo]])

    ulo, uhi = coords[:, 0].min(), coords[:, 0].max()
    vlo, vhi = coords[:, 1].min(), coords[:, 1].max()
    upad = margin * (uhi - ulo)
    vpad = margin * (vhi - vlo)
    u_axis = np.linspace(ulo - upad, uhi + upad, resolution)
    v_axis = np.linspace(vlo - vpad, vhi + vpad, resolution)

    errors = np.zeros((resolution, resolution))
    for i, cu in enumerate(u_axis):
        for j, cv in enumerate(v_axis):
            vec = v1 + cu * u + cv * v
            net = unflatten_params(w1, vec)
            if normalized:
                net = normalize(net)
            errors[i, j] = train_error(net, data)
    return PlaneGrid(u, v, coords, u_axis, v_axis, errors, normalized, binarized)


@dataclass(frozen=True)
class DistanceRow:
    group_a: str
    group_b: str
    raw_mean: float
    raw_std: float
    aligned_mean: float
    aligned_std: float
    num_pairs: int


def distance_study(groups, binary: bool):
    """Mean ± std pairwise distance for every group pair, raw and after
    symmetry removal.

    Binary: raw = plain Hamming distance, aligned = Hamming after align.
    Continuous: distances are geodesic, so "raw" normalizes both networks
    (which never moves a configuration in function space) but skips the
    alignment; "aligned" normalizes and aligns.
    """
    names = list(groups)
    for name in names:
        if len(groups[name]) < 2:
            raise ConfigError(f"group {name!r} needs at least 2 solutions")
    if binary:
        prepared = {k: list(vs) for k, vs in groups.items()}
    else:
        prepared = {k: [normalize(n) for n in vs] for k, vs in groups.items()}

    def dist_pair(x, y):
        if binary:
            raw = float(hamming_distance(x, y))
            y_al, _ = align(x, y)
            return raw, float(hamming_distance(x, y_al))
        from .geometry import geodesic_distance
        raw = geodesic_distance(x, y)
        y_al, _ = align(x, y)
        return raw, geodesic_distance(x, y_al)

    rows = []
    for ia, ga in enumerate(names):
        for gb in names[ia:]:
            if ga == gb:
                members = prepared[ga]
                pairs = [(members[i], members[j])
                         for i in range(len(members))
                         for j in range(i + 1, len(members))]
            else:
                pairs = [(x, y) for x in prepared[ga] for y in prepared[gb]]
            raws, aligneds = [], []
            for x, y in pairs:
                r, al = dist_pair(x, y)
                raws.append(r)
                aligneds.append(al)
            raws = np.array(raws)
            aligneds = np.array(aligneds)
            rows.append(DistanceRow(ga, gb,
                                    float(raws.mean()), float(raws.std()),
                                    float(aligneds.mean()), float(aligneds.std()),
                                    len(pairs)))
    return rows
