"""Symmetry removal: unit-norm rescaling and hidden-unit alignment.

``normalize`` projects a continuous relu network onto the product of unit
spheres (one per hidden unit, last layer on a single sphere of radius
sqrt(H_L)) without changing the classifier it implements. ``align``
permutes (and for binary nets sign-flips) one network's hidden units to
maximize cosine similarity with a reference, layer by layer from the
bottom; the matching itself is an exact minimum-cost assignment.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateUnitError, NotNormalizedError, ShapeError
from .nets import Network


@dataclass(frozen=True)
class UnitNorms:
    """Euclidean norms of incoming weight rows, per hidden layer, plus the
    Frobenius norm of the last layer."""

    hidden: tuple
    last_layer: float


@dataclass(frozen=True)
class PermutationPlan:
    """Per-hidden-layer permutation and ±1 sign vector.

    ``permutations[l][k]`` is the source unit of the aligned network's unit
    ``k``; signs are all +1 for continuous networks.
    """

    permutations: tuple
    signs: tuple

    def __post_init__(self):
        object.__setattr__(self, "permutations",
                           tuple(np.asarray(p, dtype=np.int64) for p in self.permutations))
        object.__setattr__(self, "signs",
                           tuple(np.asarray(s, dtype=np.int64) for s in self.signs))
        for p in self.permutations:
            if not np.array_equal(np.sort(p), np.arange(p.size)):
                raise ShapeError("each layer permutation must be a bijection")

    @property
    def is_identity(self):
        return all(np.array_equal(p, np.arange(p.size)) for p in self.permutations) \
            and all(np.all(s == 1) for s in self.signs)

    def inverse(self):
        perms, signs = [], []
        for p, s in zip(self.permutations, self.signs):
            inv = np.argsort(p)
            perms.append(inv)
            signs.append(s[inv])
        return PermutationPlan(tuple(perms), tuple(signs))


def unit_norms(net: Network) -> UnitNorms:
    hidden = tuple(np.linalg.norm(w.astype(np.float64), axis=1)
                   for w in net.weights[:-1])
    last = float(np.linalg.norm(net.weights[-1].astype(np.float64)))
    return UnitNorms(hidden, last)


def normalize(net: Network) -> Network:
    """Rescale every hidden unit to norm 1 and the last layer to sqrt(H_L).

    Valid for continuous relu networks only; relies on relu positive
    homogeneity, so the classifier (and its loss) is unchanged.
    """
    if net.is_binary:
        raise ShapeError("normalize applies to continuous networks only")
    for spec in net.layers[:-1]:
        if spec.activation != "relu":
            raise ShapeError("normalize requires relu hidden activations")
    dtype = net.dtype
    ws = [w.astype(np.float64) for w in net.weights]
    bs = [None if b is None else b.astype(np.float64) for b in net.biases]
    for idx in range(len(ws) - 1):
        norms = np.linalg.norm(ws[idx], axis=1)
        bad = np.flatnonzero(norms == 0)
        if bad.size:
            raise DegenerateUnitError(
                f"layer {idx} unit {int(bad[0])} has zero incoming norm")
        ws[idx] /= norms[:, None]
        if bs[idx] is not None:
            bs[idx] /= norms
        ws[idx + 1] *= norms[None, :]
    h_last = net.layers[-1].fan_out
    f = np.linalg.norm(ws[-1])
    if f == 0:
        raise DegenerateUnitError("last layer has zero norm")
    scale = np.sqrt(h_last) / f
    ws[-1] *= scale
    if bs[-1] is not None:
        bs[-1] *= scale
    return Network(net.layers,
                   tuple(w.astype(dtype) for w in ws),
                   tuple(None if b is None else b.astype(dtype) for b in bs),
                   net.latent)


def is_normalized(net: Network, tol=1e-4) -> bool:
    norms = unit_norms(net)
    for h in norms.hidden:
        if np.any(np.abs(h - 1.0) > tol):
            return False
    target = np.sqrt(net.layers[-1].fan_out)
    return abs(norms.last_layer - target) <= tol * max(1.0, target)


def _kuhn_completion(tight, rows, avail):
    """Perfect matching of ``rows`` into available columns of the boolean
    adjacency ``tight``, or None. Kuhn's augmenting-path algorithm."""
    n = tight.shape[1]
    col_owner = np.full(n, -1, dtype=np.int64)

    def try_row(r, banned):
        for c in np.flatnonzero(tight[r] & avail & ~banned):
            banned[c] = True
            if col_owner[c] == -1 or try_row(col_owner[c], banned):
                col_owner[c] = r
                return True
        return False

    for r in rows:
        if not try_row(r, np.zeros(n, dtype=bool)):
            return None
    out = {}
    for c in np.flatnonzero(col_owner >= 0):
        out[int(col_owner[c])] = int(c)
    return out


def _lex_refine(cost, perm, u, v):
    """Rewrite ``perm`` as the lexicographically smallest optimal
    permutation. Optimal assignments are exactly the perfect matchings on
    zero-reduced-cost edges, so ties are resolved by feasibility checks on
    that subgraph; tie-free instances take the O(n^2) fast path."""
    n = perm.size
    tol = 1e-9 * max(1.0, float(np.abs(cost).max()))
    tight = (cost - u[:, None] - v[None, :]) <= tol
    tight[np.arange(n), perm] = True
    avail = np.ones(n, dtype=bool)
    cur = perm.copy()
    out = np.empty(n, dtype=np.int64)
    for k in range(n):
        cand = np.flatnonzero(tight[k] & avail)
        choice = int(cur[k])
        if cand.size and cand[0] != choice:
            for c in cand[cand < choice]:
                rest = _kuhn_completion(tight, range(k + 1, n),
                                        avail & (np.arange(n) != c))
                if rest is not None:
                    choice = int(c)
                    for r, col in rest.items():
                        cur[r] = col
                    break
        out[k] = choice
        avail[choice] = False
    return out


def solve_assignment(cost) -> np.ndarray:
    """Permutation pi minimizing sum_k cost[k, pi(k)], exactly.

    Deterministic tie-breaking: among all optimal permutations, the
    lexicographically smallest is returned.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ShapeError(f"cost matrix must be square, got {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ShapeError("cost matrix must be finite")
    perm, u, v = kernels.lsap(cost)
    return _lex_refine(cost, np.asarray(perm), np.asarray(u), np.asarray(v))


def _permuted_arrays(net, plan):
    ws = [w.copy() for w in net.weights]
    bs = [None if b is None else b.copy() for b in net.biases]
    gs = [None if g is None else g.copy() for g in net.latent]
    for idx, (p, s) in enumerate(zip(plan.permutations, plan.signs)):
        if p.size != net.layers[idx].fan_out:
            raise ShapeError(f"plan layer {idx} size {p.size} != width")
        sf = s.astype(ws[idx].dtype)
        ws[idx] = ws[idx][p] * sf[:, None]
        if bs[idx] is not None:
            bs[idx] = bs[idx][p] * sf
        if gs[idx] is not None:
            gs[idx] = gs[idx][p] * sf[:, None]
        ws[idx + 1] = ws[idx + 1][:, p] * sf[None, :]
        if gs[idx + 1] is not None:
            gs[idx + 1] = gs[idx + 1][:, p] * sf[None, :]
    return ws, bs, gs


def apply_plan(net: Network, plan: PermutationPlan) -> Network:
    """Relabel (and sign-flip) hidden units according to a plan; the
    implemented function is unchanged."""
    if len(plan.permutations) != net.num_layers - 1:
        raise ShapeError("plan must cover every hidden layer")
    ws, bs, gs = _permuted_arrays(net, plan)
    return Network(net.layers, tuple(ws), tuple(bs), tuple(gs))


def align(net_a: Network, net_b: Network):
    """Match net_b's hidden units to net_a's, bottom-up.

    Continuous networks must be normalized first (checked); the cost of
    matching unit j to unit k is the negated dot product of their incoming
    weight rows (absolute value for binary layers whose outgoing layer is
    free, in which case matched units are sign-flipped to make the overlap
    positive). Biases are never part of the cost but move with their units.
    Returns the aligned copy of net_b and the plan that produced it.
    """
    if net_a.layers != net_b.layers:
        raise ShapeError("align requires identical architectures")
    if not net_a.is_binary:
        if not (is_normalized(net_a) and is_normalized(net_b)):
            raise NotNormalizedError("continuous networks must be normalized before align")
    ws = [w.copy() for w in net_b.weights]
    bs = [None if b is None else b.copy() for b in net_b.biases]
    gs = [None if g is None else g.copy() for g in net_b.latent]
    perms, signs = [], []
    for idx in range(net_b.num_layers - 1):
        spec = net_b.layers[idx]
        a_rows = net_a.weights[idx].astype(np.float64)
        b_rows = ws[idx].astype(np.float64)
        dots = a_rows @ b_rows.T
        flips_allowed = spec.weights_binary and not net_b.layers[idx + 1].frozen
        cost = -np.abs(dots) if flips_allowed else -dots
        p = solve_assignment(cost)
        matched = dots[np.arange(p.size), p]
        if flips_allowed:
            s = np.where(matched < 0, -1, 1).astype(np.int64)
        else:
            s = np.ones(p.size, dtype=np.int64)
        sf = s.astype(ws[idx].dtype)
        ws[idx] = ws[idx][p] * sf[:, None]
        if bs[idx] is not None:
            bs[idx] = bs[idx][p] * sf
        if gs[idx] is not None:
            gs[idx] = gs[idx][p] * sf[:, None]
        ws[idx + 1] = ws[idx + 1][:, p] * sf[None, :]
        if gs[idx + 1] is not None:
            gs[idx + 1] = gs[idx + 1][:, p] * sf[None, :]
        perms.append(p)
        signs.append(s)
    aligned = Network(net_b.layers, tuple(ws), tuple(bs), tuple(gs))
    return aligned, PermutationPlan(tuple(perms), tuple(signs))
