"""Mixtures of flows fitted to rotated copies of the outcomes.

Each member flow sees the standardized outcomes turned by one Givens
rotation. Mixture weights are constant within k-means bins of the covariates
and proportional to each member's training likelihood inside the bin.
"""
from __future__ import annotations

import itertools
import zlib
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from . import serialize
from .data import Dataset, fit_normalizer
from .exceptions import ConfigError
from .flow import Flow, TrainConfig, train_flow


@dataclass
class RotationSet:
    matrices: np.ndarray          # (J, d, d)
    pairs: list                   # axis pair per matrix, None for the identity
    angles: np.ndarray

    def __len__(self):
        return self.matrices.shape[0]

    def is_identity(self, j) -> bool:
        return self.pairs[j] is None


def givens(d, i, k, angle) -> np.ndarray:
    R = np.eye(d)
    c, s = np.cos(angle), np.sin(angle)
    R[i, i] = c
    R[k, k] = c
    R[i, k] = s
    R[k, i] = -s
    return R


def make_rotations(d: int, J: int, axis_pairs=None) -> RotationSet:
    """Identity first, then ``J - 1`` equally spaced angles in ``(0, pi/2)`` per axis pair."""
    if J < 1:
        raise ConfigError("number of rotations must be >= 1")
    if J > 1 and d < 2:
        raise ConfigError("rotations need at least two outcome dimensions")
    if axis_pairs is None:
        axis_pairs = list(itertools.combinations(range(d), 2)) if d >= 2 else []
    pairs = []
    for p in axis_pairs:
        i, k = (int(v) for v in p)
        if i == k or not (0 <= i < d and 0 <= k < d):
            raise ConfigError(f"invalid axis pair {tuple(p)} for d={d}")
        pairs.append((min(i, k), max(i, k)))
    mats, labels, angles = [np.eye(d)], [None], [0.0]
    for i, k in pairs:
        for j in range(1, J):
            a = j * (np.pi / 2) / J
            mats.append(givens(d, i, k, a))
            labels.append((i, k))
            angles.append(a)
    return RotationSet(np.stack(mats), labels, np.asarray(angles))


@dataclass
class CovariatePartition:
    centroids: np.ndarray   # in z-scored covariate units

    @property
    def k(self):
        return self.centroids.shape[0]

    def assign(self, Xz) -> np.ndarray:
        Xz = np.atleast_2d(np.asarray(Xz, dtype=float))
        d2 = ((Xz[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
        return np.argmin(d2, axis=1)


def kmeans_partition(Xz, k: int, seed=0, max_iter=100) -> CovariatePartition:
    """Lloyd's algorithm started from ``k`` distinct data points chosen by k-means++ seeding."""
    Xz = np.atleast_2d(np.asarray(Xz, dtype=float))
    n = Xz.shape[0]
    if k < 1:
        raise ConfigError("number of covariate bins must be >= 1")
    if k > n:
        raise ConfigError(f"cannot form {k} bins from {n} points")
    uniq = np.unique(Xz, axis=0)
    if uniq.shape[0] < k:
        raise ConfigError(f"only {uniq.shape[0]} distinct covariate rows for {k} bins")
    rng = np.random.default_rng(seed)
    # D^2 sampling over distinct rows; already chosen rows have weight 0
    picks = [int(rng.integers(uniq.shape[0]))]
    d2 = ((uniq - uniq[picks[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        j = int(rng.choice(uniq.shape[0], p=d2 / d2.sum()))
        picks.append(j)
        d2 = np.minimum(d2, ((uniq - uniq[j]) ** 2).sum(axis=1))
    C = uniq[picks].copy()
    part = CovariatePartition(C)
    labels = part.assign(Xz)
    for _ in range(max_iter):
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = Xz[members].mean(axis=0)
        new = part.assign(Xz)
        if np.array_equal(new, labels):
            break
        labels = new
    return part


def bin_weights(loglik, bins, k) -> np.ndarray:
    """Softmax over members of the per-bin summed log-likelihoods ``loglik`` (n, J)."""
    J = loglik.shape[1]
    W = np.full((k, J), 1.0 / J)
    for b in range(k):
        rows = bins == b
        if not rows.any():
            continue
        L = loglik[rows].sum(axis=0)
        w = np.exp(L - logsumexp(L))
        W[b] = w / w.sum()
    return W


def member_seed(seed: int, j: int) -> int:
    if j == 0:
        return int(seed)
    ss = np.random.SeedSequence([int(seed), zlib.crc32(b"rotation"), j])
    return int(ss.generate_state(1)[0])


class RotationEnsemble:
    def __init__(self, rotations: RotationSet, flows, partition: CovariatePartition, weights,
                 x_mean, x_scale):
        self.rotations = rotations
        self.flows = list(flows)
        self.partition = partition
        self.weights = np.asarray(weights, dtype=float)
        self.x_mean = np.asarray(x_mean, dtype=float)
        self.x_scale = np.asarray(x_scale, dtype=float)

    @property
    def d(self):
        return self.flows[0].d

    @property
    def q(self):
        return self.flows[0].q

    def bins(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.partition.assign((X - self.x_mean) / self.x_scale)

    def member_log_densities(self, X, Y) -> np.ndarray:
        """``(n, J)`` member log-densities in data units."""
        return np.column_stack([f.log_density(X, Y) for f in self.flows])

    def log_density(self, X, Y) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[0] == 1 and Y.shape[0] > 1:
            X = np.repeat(X, Y.shape[0], axis=0)
        if len(self.flows) == 1:
            # single member: log(1) + f is f exactly
            return self.flows[0].log_density(X, Y)
        L = self.member_log_densities(X, Y)
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights[self.bins(X)])
        return logsumexp(L + logw, axis=1)

    def sample(self, X, rng) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rng = np.random.default_rng(rng)
        if len(self.flows) == 1:
            return self.flows[0].sample(X, rng)
        W = self.weights[self.bins(X)]
        cum = np.cumsum(W, axis=1)
        pick = np.minimum((rng.random(X.shape[0])[:, None] >= cum).sum(axis=1), len(self.flows) - 1)
        out = np.empty((X.shape[0], self.d))
        for j, f in enumerate(self.flows):
            rows = np.flatnonzero(pick == j)
            if rows.size:
                out[rows] = f.sample(X[rows], rng)
        return out

    # -- persistence -----------------------------------------------------------

    def to_dict(self):
        R = self.rotations
        return {
            "rotations": {"matrices": serialize.hexlist(R.matrices.reshape(len(R), -1)),
                          "pairs": [None if p is None else list(p) for p in R.pairs],
                          "angles": serialize.hexlist(R.angles)},
            "centroids": serialize.hexlist(self.partition.centroids),
            "weights": serialize.hexlist(self.weights),
            "x_mean": serialize.hexlist(self.x_mean),
            "x_scale": serialize.hexlist(self.x_scale),
            "flows": [f.to_dict() for f in self.flows],
        }

    @classmethod
    def from_dict(cls, doc):
        flows = [Flow.from_dict(f) for f in doc["flows"]]
        d = flows[0].d
        r = doc["rotations"]
        mats = serialize.unhex(r["matrices"]).reshape(-1, d, d)
        rot = RotationSet(mats, [None if p is None else tuple(p) for p in r["pairs"]],
                          serialize.unhex(r["angles"]))
        C = serialize.unhex(doc["centroids"])
        W = serialize.unhex(doc["weights"])
        if len(flows) != len(rot) or W.shape != (C.shape[0], len(flows)):
            raise ValueError("ensemble tables disagree in size")
        return cls(rot, flows, CovariatePartition(C), W, serialize.unhex(doc["x_mean"]),
                   serialize.unhex(doc["x_scale"]))

    def save(self, path):
        serialize.dump({"model": "ensemble", "ensemble": self.to_dict()}, path)

    @classmethod
    def load(cls, path):
        doc = serialize.load(path)
        return serialize.guarded(lambda d: cls.from_dict(d["ensemble"]), doc, path)


def fit_member(train: Dataset, validation: Dataset, config: TrainConfig, rotation, seed,
               margin=0.01) -> Flow:
    """Normalize (z-score, rotate, min-max) and train one flow; returns it in data units."""
    nz = fit_normalizer(train.Y, margin, standardize=True, X=train.X, rotation=rotation)
    T = Dataset(nz.transform_x(train.X), nz.apply(train.Y, clamp=False))
    V = Dataset(nz.transform_x(validation.X), nz.apply(validation.Y))
    flow = train_flow(T, V, replace(config, seed=seed))
    flow.normalizer = nz
    return flow


def fit_rotation_ensemble(train: Dataset, validation: Dataset, config: TrainConfig | None = None,
                          rotations: RotationSet | None = None, n_bins=8, margin=0.01,
                          n_jobs=1) -> RotationEnsemble:
    config = config or TrainConfig()
    rotations = rotations or make_rotations(train.d, 1)
    jobs = [(None if rotations.is_identity(j) else rotations.matrices[j],
             member_seed(config.seed, j)) for j in range(len(rotations))]
    if n_jobs == 1 or len(jobs) == 1:
        flows = [fit_member(train, validation, config, R, s, margin) for R, s in jobs]
    else:
        from joblib import Parallel, delayed
        flows = Parallel(n_jobs=n_jobs)(
            delayed(fit_member)(train, validation, config, R, s, margin) for R, s in jobs)
    x_mean = train.X.mean(axis=0)
    x_scale = train.X.std(axis=0)
    x_scale = np.where(x_scale > 0, x_scale, 1.0)
    Xz = (train.X - x_mean) / x_scale
    k = min(n_bins, np.unique(Xz, axis=0).shape[0])
    part = kmeans_partition(Xz, k, seed=np.random.SeedSequence(
        [int(config.seed), zlib.crc32(b"kmeans")]).generate_state(1)[0])
    if len(flows) == 1:
        W = np.ones((part.k, 1))
    else:
        L = np.column_stack([f.log_density(train.X, train.Y) for f in flows])
        W = bin_weights(L, part.assign(Xz), part.k)
    return RotationEnsemble(rotations, flows, part, W, x_mean, x_scale)


def load_model(path):
    """Load a saved :class:`Flow` or :class:`RotationEnsemble`."""
    doc = serialize.load(path)

    def decode(d):
        kind = d["model"]
        if kind == "flow":
            return Flow.from_dict(d["flow"])
        if kind == "ensemble":
            return RotationEnsemble.from_dict(d["ensemble"])
        raise ValueError(f"unknown model type {kind!r}")
    return serialize.guarded(decode, doc, path)
