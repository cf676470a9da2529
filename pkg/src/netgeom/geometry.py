"""Metric structure on canonicalized networks.

Continuous networks live on a product of spheres (one per hidden unit,
plus the whole last layer); paths and distances combine independent
per-sphere great-circle geodesics evaluated at a common fraction. Binary
networks use the Hamming metric, where a shortest path is any ordering of
the differing-weight flips.

Numerical guards: dot products are clamped to [-1, 1] before arccos,
angles below ANGLE_EPS are treated as zero, angles within ANTIPODAL_EPS of
pi are rejected (the geodesic is not unique), and the interpolation
parameter's x -> 0 limit is hard-coded.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AntipodalError, ShapeError
from .nets import Network
from .symmetry import is_normalized

ANGLE_EPS = 1e-7
ANTIPODAL_EPS = 1e-6
_X_EPS = 1e-9


def _check_norm(name, vec, n):
    actual = float(np.linalg.norm(vec))
    if abs(actual - n) > 1e-5 * max(1.0, n):
        raise ShapeError(f"{name} has norm {actual:.8g}, expected {n:.8g}")


def sphere_angle(u, v, n=1.0) -> float:
    """Angle between two vectors on the radius-n sphere."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    _check_norm("u", u, n)
    _check_norm("v", v, n)
    c = np.clip(np.dot(u, v) / (n * n), -1.0, 1.0)
    return float(np.arccos(c))


def _interp_t(phi, x):
    # t(x) = (1 - cos(phi) + sin(phi)/tan(phi x))^-1, with the x -> 0 limit
    # pinned to 0; well-defined on (0, 1] for phi < pi.
    if x < _X_EPS:
        return 0.0
    return 1.0 / (1.0 - np.cos(phi) + np.sin(phi) / np.tan(phi * x))


def sphere_geodesic_point(u, v, n, x):
    """Point at fraction x along the great-circle arc from u to v."""
    if not 0.0 <= x <= 1.0:
        raise ShapeError(f"fraction x={x} outside [0, 1]")
    u = np.asarray(u)
    v = np.asarray(v)
    phi = sphere_angle(u, v, n)
    if phi > np.pi - ANTIPODAL_EPS:
        raise AntipodalError("endpoints are antipodal; geodesic is not unique")
    if x == 0.0 or phi < ANGLE_EPS:
        return u.copy()
    if x == 1.0:
        return v.copy()
    t = _interp_t(phi, x)
    p = u.astype(np.float64) + t * (v.astype(np.float64) - u.astype(np.float64))
    p *= n / np.linalg.norm(p)
    return p.astype(u.dtype)


@dataclass(frozen=True)
class GeodesicSpec:
    """Angles and radii of every sphere separating two networks: one entry
    per hidden unit (radius 1) plus the last layer (radius sqrt(H_L))."""

    hidden_angles: tuple        # per hidden layer, array of per-unit angles
    last_angle: float
    last_radius: float

    @property
    def squared_distance(self):
        total = sum(float(np.sum(a ** 2)) for a in self.hidden_angles)
        return total + (self.last_radius * self.last_angle) ** 2


def _require_geodesic_pair(a: Network, b: Network):
    if a.layers != b.layers:
        raise ShapeError("networks must share an architecture")
    if a.is_binary or b.is_binary:
        raise ShapeError("geodesics apply to continuous networks; use Hamming paths")
    if not (is_normalized(a) and is_normalized(b)):
        raise ShapeError("geodesics require normalized (and aligned) endpoints")


def geodesic_spec(a: Network, b: Network) -> GeodesicSpec:
    # Angles use the endpoints' actual norms rather than the nominal radii;
    # float32 storage puts rows at 1 ± 1e-7, and dividing by the nominal
    # radius would floor every angle near sqrt(2e-7) instead of 0.
    _require_geodesic_pair(a, b)
    hidden = []
    for wa, wb in zip(a.weights[:-1], b.weights[:-1]):
        wa64 = wa.astype(np.float64)
        wb64 = wb.astype(np.float64)
        dots = np.einsum("ij,ij->i", wa64, wb64)
        dots /= np.linalg.norm(wa64, axis=1) * np.linalg.norm(wb64, axis=1)
        angles = np.arccos(np.clip(dots, -1.0, 1.0))
        angles[np.all(wa == wb, axis=1)] = 0.0   # identical spheres: exactly 0
        hidden.append(angles)
    r = float(np.sqrt(a.layers[-1].fan_out))
    wa = a.weights[-1].astype(np.float64).ravel()
    wb = b.weights[-1].astype(np.float64).ravel()
    if np.array_equal(wa, wb):
        last = 0.0
    else:
        cos = np.dot(wa, wb) / (np.linalg.norm(wa) * np.linalg.norm(wb))
        last = float(np.arccos(np.clip(cos, -1.0, 1.0)))
    return GeodesicSpec(tuple(hidden), last, r)


def geodesic_distance(a: Network, b: Network) -> float:
    """Product-manifold distance sqrt(sum over spheres of (n * angle)^2)."""
    return float(np.sqrt(geodesic_spec(a, b).squared_distance))


def _slerp_rows(wa, wb, x, where):
    """Rowwise spherical interpolation of unit rows; raises naming the
    offending unit on antipodal rows."""
    wa64 = wa.astype(np.float64)
    wb64 = wb.astype(np.float64)
    dots = np.einsum("ij,ij->i", wa64, wb64)
    dots /= np.linalg.norm(wa64, axis=1) * np.linalg.norm(wb64, axis=1)
    phi = np.arccos(np.clip(dots, -1.0, 1.0))
    bad = np.flatnonzero(phi > np.pi - ANTIPODAL_EPS)
    if bad.size:
        raise AntipodalError(f"{where} unit {int(bad[0])} endpoints are antipodal")
    out = wa64.copy()
    move = phi >= ANGLE_EPS
    if np.any(move):
        t = np.zeros_like(phi)
        t[move] = 1.0 / (1.0 - np.cos(phi[move]) + np.sin(phi[move]) / np.tan(phi[move] * x))
        p = wa64[move] + t[move, None] * (wb64[move] - wa64[move])
        p /= np.linalg.norm(p, axis=1)[:, None]
        out[move] = p
    return out.astype(wa.dtype)


def network_geodesic(a: Network, b: Network, x: float) -> Network:
    """Interpolate every sphere at the common fraction x; x in {0, 1}
    returns the endpoints themselves."""
    _require_geodesic_pair(a, b)
    if not 0.0 <= x <= 1.0:
        raise ShapeError(f"fraction x={x} outside [0, 1]")
    if x == 0.0:
        return a
    if x == 1.0:
        return b
    ws = []
    for idx in range(a.num_layers - 1):
        ws.append(_slerp_rows(a.weights[idx], b.weights[idx], x, f"layer {idx}"))
    r = float(np.sqrt(a.layers[-1].fan_out))
    shape = a.weights[-1].shape
    last = sphere_geodesic_point(a.weights[-1].astype(np.float64).ravel(),
                                 b.weights[-1].astype(np.float64).ravel(), r, x)
    ws.append(last.reshape(shape).astype(a.dtype))
    bs = []
    for ba, bb in zip(a.biases, b.biases):
        if ba is None:
            bs.append(None)
        else:
            bs.append(((1.0 - x) * ba.astype(np.float64)
                       + x * bb.astype(np.float64)).astype(ba.dtype))
    return Network(a.layers, tuple(ws), tuple(bs), a.latent)


def hamming_distance(a: Network, b: Network) -> int:
    """Exact count of weights whose signs differ."""
    if a.layers != b.layers:
        raise ShapeError("networks must share an architecture")
    if not (a.is_binary and b.is_binary):
        raise ShapeError("Hamming distance applies to binary networks")
    return sum(int(np.sum(wa != wb)) for wa, wb in zip(a.weights, b.weights))


@dataclass(frozen=True)
class HammingPath:
    """Ordered flip schedule (layer, row, col) covering exactly the weights
    that differ between the endpoints; length equals the Hamming distance."""

    flips: np.ndarray           # (d, 3) int64
    seed: int

    @property
    def length(self):
        return int(self.flips.shape[0])


def random_hamming_path(a: Network, b: Network, seed: int) -> HammingPath:
    """A uniformly random shortest path: the differing weights in a seeded
    random flip order."""
    d = hamming_distance(a, b)   # also validates the pair
    entries = []
    for idx, (wa, wb) in enumerate(zip(a.weights, b.weights)):
        rows, cols = np.nonzero(wa != wb)
        if rows.size:
            entries.append(np.column_stack(
                [np.full(rows.size, idx, dtype=np.int64), rows, cols]))
    flips = (np.concatenate(entries) if entries
             else np.zeros((0, 3), dtype=np.int64))
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    flips = flips[rng.permutation(d)]
    return HammingPath(flips.astype(np.int64), int(seed))


def hamming_state(a: Network, path: HammingPath, count: int) -> Network:
    """The network reached after applying the first ``count`` flips to a."""
    if not 0 <= count <= path.length:
        raise ShapeError(f"count {count} outside [0, {path.length}]")
    if count == 0:
        return a
    ws = [w.copy() for w in a.weights]
    gs = [None if g is None else g.copy() for g in a.latent]
    for layer, row, col in path.flips[:count]:
        ws[layer][row, col] = -ws[layer][row, col]
        if gs[layer] is not None:
            gs[layer][row, col] = ws[layer][row, col]
    return Network(a.layers, tuple(ws), a.biases, tuple(gs))


def midpoint(a: Network, b: Network, mode: str, seed: int = 0) -> Network:
    """Equidistant configuration between two networks.

    Continuous mode is the geodesic point at x = 0.5 (endpoints must be
    normalized and aligned); binary mode flips a uniformly random half
    (ceil(d/2)) of the differing weights of a.
    """
    if mode == "continuous":
        return network_geodesic(a, b, 0.5)
    if mode == "binary":
        path = random_hamming_path(a, b, seed)
        return hamming_state(a, path, (path.length + 1) // 2)
    raise ShapeError(f"unknown midpoint mode {mode!r}")
