"""Covariate-dependent tree-CDF transforms.

A fitted :class:`CondTree` holds a dyadic partition of ``(0, 1]^d`` and, at
each internal node, a classifier giving the probability that an outcome in the
node falls in the left child. Those probabilities, shrunk towards the volume
ratio of the children, define a piecewise-constant conditional density and an
invertible piecewise-linear map that pushes that density to the uniform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from . import classifier as clf
from .classifier import ClassifierKind, ClassifierParams, FitOptions
from .exceptions import OutOfDomainError
from .partition import DyadicTree, Rect, SplitSpec, check_unit_cube, volume


# ---------------------------------------------------------------------------
# node-level maps
# ---------------------------------------------------------------------------

def shrink_rate_for(vol: float, c0: float, gamma: float) -> float:
    """Scale-dependent learning rate; decreases with depth when ``gamma > 0``.

    Computed as ``c0 * (1 - log2(vol)) ** -gamma`` so that the rate is defined
    for every node volume in ``(0, 1]``.
    """
    if not 0.0 < vol <= 1.0 + 1e-12:
        raise ValueError(f"node volume must lie in (0, 1], got {vol}")
    return float(c0 * (1.0 - np.log2(min(vol, 1.0))) ** (-gamma))


@dataclass
class NodeModel:
    split: SplitSpec
    classifier: ClassifierParams
    shrink_rate: float
    base_ratio: float


def split_prob(model: NodeModel, x) -> np.ndarray:
    """Shrunk left-child probability ``c * p(x) + (1 - c) * base_ratio``."""
    p = clf.predict_prob(model.classifier, x)
    return model.shrink_rate * p + (1.0 - model.shrink_rate) * model.base_ratio


def _forward_axis(yj, a, b, s, p, left):
    width = b - a
    out_left = a + (yj - a) * p * width / (s - a)
    out_right = b - (b - yj) * (1.0 - p) * width / (b - s)
    # keep the image inside the half-open box despite rounding
    return np.clip(np.where(left, out_left, out_right), np.nextafter(a, b), b)


def _inverse_axis(uj, a, b, s, p):
    z = (uj - a) / (b - a)
    left = z <= p
    with np.errstate(divide="ignore", invalid="ignore"):
        out_left = a + (s - a) * z / p
        out_right = s + (b - s) * (z - p) / (1.0 - p)
    out = np.where(left, np.clip(out_left, np.nextafter(a, b), s), np.clip(out_right, s, b))
    return out, left


def _points_in(rect: Rect, y) -> np.ndarray:
    y = np.atleast_2d(np.asarray(y, dtype=float))
    inside = np.all((y > rect.lower) & (y <= rect.upper), axis=1)
    if not inside.all():
        raise OutOfDomainError("point outside the node box")
    return y


def node_forward(rect: Rect, spec: SplitSpec, prob_left, y) -> np.ndarray:
    """Affine-per-child map of the node box onto itself along ``spec.axis``."""
    single = np.ndim(y) == 1
    y = _points_in(rect, y).copy()
    j = spec.axis
    a, b, s = rect.lower[j], rect.upper[j], spec.cut
    y[:, j] = _forward_axis(y[:, j], a, b, s, np.asarray(prob_left, dtype=float), y[:, j] <= s)
    return y[0] if single else y


def node_inverse(rect: Rect, spec: SplitSpec, prob_left, u) -> np.ndarray:
    single = np.ndim(u) == 1
    u = _points_in(rect, u).copy()
    j = spec.axis
    a, b, s = rect.lower[j], rect.upper[j], spec.cut
    u[:, j], _ = _inverse_axis(u[:, j], a, b, s, np.asarray(prob_left, dtype=float))
    return u[0] if single else u


# ---------------------------------------------------------------------------
# fitted tree
# ---------------------------------------------------------------------------

class CondTree:
    """A dyadic tree with one classifier per internal node."""

    def __init__(self, tree: DyadicTree, q: int):
        self.tree = tree
        self.q = q
        n = tree.n_nodes
        self.classifiers: list[ClassifierParams | None] = [None] * n
        self.shrink = np.ones(n)
        self.base_ratio = np.full(n, np.nan)

    @property
    def d(self) -> int:
        return self.tree.d

    @classmethod
    def root_only(cls, d: int, q: int) -> "CondTree":
        return cls(DyadicTree(d), q)

    def set_model(self, node: int, params: ClassifierParams, shrink: float = 1.0):
        t = self.tree
        j = t.axis[node]
        a, b = t.lower[node, j], t.upper[node, j]
        self.classifiers[node] = params
        self.shrink[node] = shrink
        self.base_ratio[node] = (t.cut[node] - a) / (b - a)

    def node_model(self, node: int) -> NodeModel:
        t = self.tree
        return NodeModel(SplitSpec(int(t.axis[node]), float(t.cut[node])),
                         self.classifiers[node], float(self.shrink[node]),
                         float(self.base_ratio[node]))

    def apply_shrinkage(self, c0: float, gamma: float) -> None:
        vols = self.tree.volumes()
        for k in self.tree.internal_nodes():
            self.shrink[k] = shrink_rate_for(vols[k], c0, gamma)

    # -- vectorized evaluation ------------------------------------------------

    def _check(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, self.q)
        if Y.ndim == 1:
            Y = Y.reshape(-1, self.d)
        if X.shape[0] != Y.shape[0]:
            if X.shape[0] == 1:
                X = np.repeat(X, Y.shape[0], axis=0)
            else:
                raise ValueError("X and Y have different numbers of rows")
        check_unit_cube(Y)
        return X, Y

    def _probs(self, X, rows, nodes):
        """Shrunk left probabilities for ``rows`` sitting at internal ``nodes``."""
        p = np.empty(rows.shape[0])
        if rows.shape[0] == 0:
            return p
        order = np.argsort(nodes, kind="stable")
        sorted_nodes = nodes[order]
        uniq, starts = np.unique(sorted_nodes, return_index=True)
        ends = np.append(starts[1:], sorted_nodes.shape[0])
        for k, lo, hi in zip(uniq, starts, ends):
            sel = order[lo:hi]
            pk = clf.predict_prob(self.classifiers[k], X[rows[sel]])
            c = self.shrink[k]
            p[sel] = c * pk + (1.0 - c) * self.base_ratio[k]
        return p

    def _path_probs(self, X, paths):
        t = self.tree
        n, width = paths.shape
        probs = np.full((n, max(width - 1, 0)), np.nan)
        for level in range(width - 1):
            rows = np.flatnonzero(paths[:, level + 1] >= 0)
            probs[rows, level] = self._probs(X, rows, paths[rows, level])
        return probs

    def forward_with_log_density(self, X, Y, need_forward=True):
        """Image of ``Y`` under the tree-CDF and the tree log-density at ``Y``."""
        X, Y = self._check(X, Y)
        t = self.tree
        n = Y.shape[0]
        out = Y.copy() if need_forward else None
        logdens = np.zeros(n)
        if t.n_nodes == 1:
            return out, logdens
        paths = t.route(Y)
        probs = self._path_probs(X, paths)
        for level in range(paths.shape[1] - 2, -1, -1):
            rows = np.flatnonzero(paths[:, level + 1] >= 0)
            node = paths[rows, level]
            left = paths[rows, level + 1] == t.left[node]
            p = probs[rows, level]
            ratio = self.base_ratio[node]
            logdens[rows] += np.where(left, np.log(p) - np.log(ratio),
                                      np.log1p(-p) - np.log1p(-ratio))
            if need_forward:
                j = t.axis[node]
                out[rows, j] = _forward_axis(out[rows, j], t.lower[node, j], t.upper[node, j],
                                             t.cut[node], p, left)
        return out, logdens

    def forward(self, X, Y) -> np.ndarray:
        return self.forward_with_log_density(X, Y)[0]

    def log_density(self, X, Y) -> np.ndarray:
        return self.forward_with_log_density(X, Y, need_forward=False)[1]

    def inverse(self, X, U) -> np.ndarray:
        X, U = self._check(X, U)
        out = U.copy()
        t = self.tree
        n = out.shape[0]
        node = np.zeros(n, dtype=np.int64)
        for _ in range(t.max_depth):
            rows = np.flatnonzero(t.left[node] >= 0)
            if rows.shape[0] == 0:
                break
            cur = node[rows]
            p = self._probs(X, rows, cur)
            j = t.axis[cur]
            out[rows, j], go_left = _inverse_axis(out[rows, j], t.lower[cur, j], t.upper[cur, j],
                                                  t.cut[cur], p)
            node[rows] = np.where(go_left, t.left[cur], t.right[cur])
        return out

    def sample_leaves(self, X, rng) -> np.ndarray:
        """Draw from the tree density directly: pick a leaf, then a uniform point in it.

        Independent of :meth:`inverse`; used to check the forward map.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        t = self.tree
        n = X.shape[0]
        node = np.zeros(n, dtype=np.int64)
        for _ in range(t.max_depth):
            rows = np.flatnonzero(t.left[node] >= 0)
            if rows.shape[0] == 0:
                break
            cur = node[rows]
            p = self._probs(X, rows, cur)
            go_left = rng.random(rows.shape[0]) < p
            node[rows] = np.where(go_left, t.left[cur], t.right[cur])
        lo, hi = t.lower[node], t.upper[node]
        # 1 - U lies in (0, 1], matching the half-open boxes
        return lo + (1.0 - rng.random((n, t.d))) * (hi - lo)


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeConfig:
    kind: ClassifierKind = field(default_factory=ClassifierKind)
    max_depth: int = 6
    min_samples: int = 10
    n_grid: int = 20
    eta: float = 0.1
    eta_scaled: bool = False
    screen_top: int = 0
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        object.__setattr__(self, "kind", ClassifierKind.parse(self.kind))
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.n_grid < 1:
            raise ValueError("n_grid must be >= 1")
        if self.eta < 0:
            raise ValueError("eta must be >= 0")


def candidate_cuts(a: float, b: float, n_grid: int) -> np.ndarray:
    """Equally spaced interior grid points of ``(a, b]``."""
    return a + (b - a) * np.arange(1, n_grid + 1) / (n_grid + 1)


def imbalance_penalty(a: float, b: float, cut: float, eta: float) -> float:
    return -eta * abs(cut - 0.5 * (a + b))


def split_objective(rect: Rect, spec: SplitSpec, params: ClassifierParams, X, Y, eta: float,
                    eta_scaled: bool = False) -> float:
    """Binary log-likelihood of the split plus its volume term and imbalance penalty."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    left = Y[:, spec.axis] <= spec.cut
    if left.all() or not left.any():
        return -np.inf
    return _split_terms(rect, spec, params, X, left, eta, eta_scaled)


def _split_terms(rect, spec, params, X, left, eta, eta_scaled=False):
    j = spec.axis
    a, b, s = rect.lower[j], rect.upper[j], spec.cut
    n_l = int(left.sum())
    n_r = left.shape[0] - n_l
    ratio = (s - a) / (b - a)
    volume_term = -n_l * np.log(ratio) - n_r * np.log1p(-ratio)
    pen = imbalance_penalty(a, b, s, eta)
    if eta_scaled:
        pen *= left.shape[0]
    return clf.cross_entropy(params, X, left) + volume_term + pen


@njit(cache=True, parallel=True, error_model="numpy")
def _score_level(X, Y, starts, ends, lower, upper, n_grid, eta, eta_scaled, kind, sizes, l2,
                 w0s, max_iter, tol, memory, screen_top):
    n, q = X.shape
    d = Y.shape[1]
    m = starts.shape[0]
    n_cand = n_grid * d
    n_par = w0s.shape[1]
    means = np.zeros((m, q))
    scales = np.ones((m, q))
    Xs = np.empty((n, q))
    for i in range(m):
        mu, sc = clf.standardize_stats(X[starts[i]:ends[i]])
        means[i] = mu
        scales[i] = sc
        for r in range(starts[i], ends[i]):
            for c in range(q):
                Xs[r, c] = (X[r, c] - mu[c]) / sc[c]

    # volume term and constant-classifier objective for every candidate
    base = np.full((m, n_cand), -np.inf)
    const_obj = np.full((m, n_cand), -np.inf)
    for inst in prange(m * n_cand):
        i = inst // n_cand
        c = inst % n_cand
        j = c // n_grid
        a = lower[i, j]
        b = upper[i, j]
        s = a + (b - a) * (c % n_grid + 1) / (n_grid + 1)
        n_l = 0
        for r in range(starts[i], ends[i]):
            if Y[r, j] <= s:
                n_l += 1
        n_a = ends[i] - starts[i]
        n_r = n_a - n_l
        if n_l == 0 or n_r == 0:
            continue
        ratio = (s - a) / (b - a)
        pen = -eta * abs(s - 0.5 * (a + b))
        if eta_scaled:
            pen *= n_a
        vol = -n_l * np.log(ratio) - n_r * np.log1p(-ratio)
        base[i, c] = vol + pen
        p = min(max(n_l / n_a, clf.P_MIN), 1.0 - clf.P_MIN)
        const_obj[i, c] = vol + pen + n_l * np.log(p) + n_r * np.log1p(-p)

    selected = np.zeros((m, n_cand), dtype=np.bool_)
    for i in range(m):
        if screen_top > 0:
            order = np.argsort(-const_obj[i], kind="mergesort")
            for r in range(min(screen_top, n_cand)):
                if np.isfinite(const_obj[i, order[r]]):
                    selected[i, order[r]] = True
        else:
            for c in range(n_cand):
                selected[i, c] = np.isfinite(base[i, c])

    objective = np.full((m, n_cand), -np.inf)
    weights = np.zeros((m, n_cand, n_par))
    for inst in prange(m * n_cand):
        i = inst // n_cand
        c = inst % n_cand
        if not selected[i, c]:
            continue
        j = c // n_grid
        a = lower[i, j]
        b = upper[i, j]
        s = a + (b - a) * (c % n_grid + 1) / (n_grid + 1)
        lo = starts[i]
        hi = ends[i]
        t = np.empty(hi - lo)
        for r in range(lo, hi):
            t[r - lo] = 1.0 if Y[r, j] <= s else 0.0
        xs = Xs[lo:hi]
        w = clf.fit_nb(kind, xs, t, sizes, l2, w0s[i], max_iter, tol, memory)
        p = clf.clipped_probs(clf.scores_nb(kind, w, xs, sizes))
        objective[i, c] = clf.binary_loglik(p, t) + base[i, c]
        weights[i, c] = w
    return objective, weights, means, scales


def score_candidates(rect: Rect, X, Y, config: TreeConfig, seed=0):
    """Objective, cut and fitted classifier of every candidate split of one node.

    Returns ``(objectives, specs, params)``; empty-child candidates score ``-inf``
    and get ``None`` params.
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=float)
    Y = np.ascontiguousarray(np.atleast_2d(Y), dtype=float)
    res = _fit_nodes(X, Y, [np.arange(Y.shape[0])], rect.lower[None], rect.upper[None],
                     config, [np.random.default_rng(seed)])
    objective, weights, means, scales = res
    specs, params = [], []
    for c in range(objective.shape[1]):
        j, k = divmod(c, config.n_grid)
        a, b = rect.lower[j], rect.upper[j]
        specs.append(SplitSpec(j, a + (b - a) * (k + 1) / (config.n_grid + 1)))
        if np.isfinite(objective[0, c]):
            params.append(ClassifierParams(config.kind, weights[0, c].copy(), means[0].copy(),
                                           scales[0].copy(), config.fit.l2_for(config.kind)))
        else:
            params.append(None)
    return objective[0], specs, params


def _fit_nodes(X, Y, index_sets, lower, upper, config: TreeConfig, rngs):
    q = X.shape[1]
    order = np.concatenate(index_sets) if index_sets else np.zeros(0, dtype=np.int64)
    sizes_list = [len(ix) for ix in index_sets]
    ends = np.cumsum(sizes_list).astype(np.int64)
    starts = (ends - np.asarray(sizes_list, dtype=np.int64)).astype(np.int64)
    kind = config.kind
    w0s = np.stack([clf.glorot_init(kind, q, rng) for rng in rngs]) if rngs else \
        np.zeros((0, kind.n_params(q)))
    return _score_level(np.ascontiguousarray(X[order]), np.ascontiguousarray(Y[order]),
                        starts, ends, np.ascontiguousarray(lower), np.ascontiguousarray(upper),
                        config.n_grid, config.eta, config.eta_scaled, kind.code,
                        kind.layer_sizes(q), config.fit.l2_for(kind), w0s,
                        config.fit.max_iter, config.fit.tol_for(kind), config.fit.memory,
                        config.screen_top)


def fit_tree(X, Y, config: TreeConfig, seed=0) -> CondTree:
    """Grow one tree level by level, choosing each split by its best classifier fit.

    ``seed`` may be an int or a sequence of ints; the MLP initialization of node
    ``k`` is drawn from ``default_rng([*seed, k])``.
    """
    X = np.ascontiguousarray(np.asarray(X, dtype=float))
    Y = np.ascontiguousarray(np.asarray(Y, dtype=float))
    if X.ndim == 1:
        X = X[:, None]
    n, d = Y.shape
    if n == 0:
        raise ValueError("cannot fit a tree to an empty dataset")
    if X.shape[0] != n:
        raise ValueError("X and Y have different numbers of rows")
    check_unit_cube(Y)
    q = X.shape[1]
    seed_seq = list(np.atleast_1d(seed).astype(int))
    tree = DyadicTree(d)
    cond = CondTree(tree, q)
    frontier = [(0, np.arange(n))]
    models = {}
    for depth in range(config.max_depth):
        expandable = [(k, ix) for k, ix in frontier if ix.shape[0] >= config.min_samples]
        if not expandable:
            break
        nodes = [k for k, _ in expandable]
        index_sets = [ix for _, ix in expandable]
        rngs = [np.random.default_rng(seed_seq + [k]) for k in nodes]
        objective, weights, means, scales = _fit_nodes(
            X, Y, index_sets, tree.lower[nodes], tree.upper[nodes], config, rngs)
        next_frontier = []
        for i, (k, ix) in enumerate(expandable):
            if not np.isfinite(objective[i]).any():
                continue
            c = int(np.argmax(objective[i]))
            j, g = divmod(c, config.n_grid)
            a, b = tree.lower[k, j], tree.upper[k, j]
            cut = a + (b - a) * (g + 1) / (config.n_grid + 1)
            left_id, right_id = tree.split(k, SplitSpec(j, cut))
            models[k] = ClassifierParams(kind=config.kind, weights=weights[i, c].copy(),
                                         mean=means[i].copy(), scale=scales[i].copy(),
                                         l2=config.fit.l2_for(config.kind))
            go_left = Y[ix, j] <= cut
            next_frontier.append((left_id, ix[go_left]))
            next_frontier.append((right_id, ix[~go_left]))
        frontier = next_frontier
    cond = CondTree(tree, q)
    for k, params in models.items():
        cond.set_model(k, params)
    return cond


def node_decomposition(cond: CondTree, X, Y, eta: float = 0.0) -> float:
    """Sum over internal nodes of the split log-likelihood and volume term.

    With unit shrinkage this equals the summed tree log-density of the data.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    t = cond.tree
    paths = t.route(Y)
    total = 0.0
    for k in t.internal_nodes():
        rows = np.flatnonzero(paths[:, t.depth[k]] == k)
        if rows.shape[0] == 0:
            continue
        spec = SplitSpec(int(t.axis[k]), float(t.cut[k]))
        left = Y[rows, spec.axis] <= spec.cut
        total += _split_terms(t.rect(k), spec, cond.classifiers[k], X[rows], left, eta)
    return total
