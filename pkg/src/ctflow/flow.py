"""Training and evaluation of a flow made of conditional tree-CDF transforms."""
from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from . import serialize
from .classifier import ClassifierKind, ClassifierParams, FitOptions
from .data import Dataset, NormalizationSpec
from .exceptions import ConfigError, DataError
from .partition import DyadicTree, check_unit_cube
from .treecdf import CondTree, TreeConfig, fit_tree

log = logging.getLogger(__name__)


def stream(seed: int, name: str) -> list[int]:
    """Seed sequence for the named random sub-stream of a run."""
    return [int(seed), zlib.crc32(name.encode())]


@dataclass(frozen=True)
class PhaseSpec:
    kind: ClassifierKind = field(default_factory=ClassifierKind)
    max_depth: int = 6
    max_trees: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "kind", ClassifierKind.parse(self.kind))
        if self.max_depth < 1:
            raise ConfigError(f"phase depth must be >= 1, got {self.max_depth}")
        if self.max_trees < 0:
            raise ConfigError("phase max_trees must be >= 0")

    @classmethod
    def parse(cls, obj) -> "PhaseSpec":
        if isinstance(obj, PhaseSpec):
            return obj
        try:
            if isinstance(obj, dict):
                return cls(**obj)
            # "kind:depth[:max_trees]"
            parts = str(obj).split(":")
            if not 1 <= len(parts) <= 3:
                raise ConfigError(f"cannot parse phase '{obj}'")
            return cls(parts[0], *(int(p) for p in parts[1:]))
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError(f"cannot parse phase {obj!r}: {e}") from None

    def to_dict(self):
        return {"kind": str(self.kind), "max_depth": self.max_depth, "max_trees": self.max_trees}


DEFAULT_PHASES = (PhaseSpec("logistic", 6, 1000), PhaseSpec("mlp(4,4)", 4, 1000))


@dataclass(frozen=True)
class TrainConfig:
    c0: float = 0.05
    gamma: float = 0.5
    eta: float = 0.1
    phases: tuple = DEFAULT_PHASES
    min_samples: int = 10
    n_grid: int = 20
    window: int = 10
    max_trees: int = 2000
    validation_fraction: float = 0.1
    seed: int = 0
    eta_scaled: bool = False
    screen_top: int = 0
    fit: FitOptions = field(default_factory=FitOptions)

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(PhaseSpec.parse(p) for p in self.phases))
        if isinstance(self.fit, dict):
            object.__setattr__(self, "fit", FitOptions(**self.fit))
        if not 0.0 < self.c0 < 1.0:
            raise ConfigError(f"c0 must lie in (0, 1), got {self.c0}")
        if self.gamma < 0:
            raise ConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if self.max_trees < 0 or self.min_samples < 1 or self.n_grid < 1:
            raise ConfigError("max_trees >= 0, min_samples >= 1 and n_grid >= 1 required")
        if self.screen_top < 0:
            raise ConfigError("screen_top must be >= 0")

    def tree_config(self, phase: PhaseSpec) -> TreeConfig:
        return TreeConfig(kind=phase.kind, max_depth=phase.max_depth,
                          min_samples=self.min_samples, n_grid=self.n_grid, eta=self.eta,
                          eta_scaled=self.eta_scaled, screen_top=self.screen_top, fit=self.fit)

    def to_dict(self):
        out = asdict(self)
        out["phases"] = [p.to_dict() for p in self.phases]
        return out

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Flow:
    """Composition of tree-CDFs; densities live on ``(0, 1]^d`` unless a normalizer is set."""

    def __init__(self, trees, d, q, phase_bounds=(), trace=(), normalizer=None, config=None):
        self.trees = list(trees)
        self.d, self.q = int(d), int(q)
        for t in self.trees:
            if t.d != self.d or t.q != self.q:
                raise ValueError("all trees must share d and q")
        self.phase_bounds = [int(b) for b in phase_bounds]
        self.trace = [float(v) for v in trace]
        self.normalizer: NormalizationSpec | None = normalizer
        self.config = config

    @property
    def n_trees(self):
        return len(self.trees)

    def _xy(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, self.q)
        if Y.ndim == 1:
            Y = Y.reshape(-1, self.d)
        if X.shape[0] == 1 and Y.shape[0] > 1:
            X = np.repeat(X, Y.shape[0], axis=0)
        if X.shape[0] != Y.shape[0]:
            raise ValueError("X and Y have different numbers of rows")
        return X, Y

    # -- unit-cube level --------------------------------------------------------

    def forward(self, X, Y, n_trees=None):
        """Residual after the first ``n_trees`` transforms (all by default)."""
        X, Y = self._xy(X, Y)
        check_unit_cube(Y)
        for t in self.trees[:n_trees]:
            Y = t.forward(X, Y)
        return Y

    def log_density_unit(self, X, Y):
        X, Y = self._xy(X, Y)
        check_unit_cube(Y)
        total = np.zeros(Y.shape[0])
        last = self.n_trees - 1
        for k, t in enumerate(self.trees):
            Y, lg = t.forward_with_log_density(X, Y, need_forward=k < last)
            total += lg
        return total

    def inverse(self, X, U):
        X, U = self._xy(X, U)
        for t in reversed(self.trees):
            U = t.inverse(X, U)
        return U

    def sample_unit(self, X, rng):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rng = np.random.default_rng(rng)
        U = 1.0 - rng.random((X.shape[0], self.d))
        return self.inverse(X, U)

    # -- data units ------------------------------------------------------------

    def log_density(self, X, Y):
        """Log-density in data units (unit-cube density if there is no normalizer)."""
        if self.normalizer is None:
            return self.log_density_unit(X, Y)
        nz = self.normalizer
        X, Y = self._xy(X, Y)
        return self.log_density_unit(nz.transform_x(X), nz.apply(Y)) + nz.log_volume_correction

    def sample(self, X, rng):
        if self.normalizer is None:
            return self.sample_unit(X, rng)
        nz = self.normalizer
        return nz.invert(self.sample_unit(nz.transform_x(np.atleast_2d(X)), rng))

    # -- persistence -----------------------------------------------------------

    def to_dict(self):
        return {
            "d": self.d, "q": self.q,
            "phase_bounds": self.phase_bounds,
            "trace": serialize.hexlist(self.trace) if self.trace else [],
            "normalizer": None if self.normalizer is None else self.normalizer.to_dict(),
            "config": None if self.config is None else self.config.to_dict(),
            "trees": [tree_to_dict(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc):
        trees = [tree_from_dict(t, doc["d"], doc["q"]) for t in doc["trees"]]
        nz = doc.get("normalizer")
        cfg = doc.get("config")
        return cls(trees, doc["d"], doc["q"], doc["phase_bounds"],
                   serialize.unhex(doc["trace"]).tolist() if doc["trace"] else [],
                   None if nz is None else NormalizationSpec.from_dict(nz),
                   None if cfg is None else TrainConfig.from_dict(cfg))

    def save(self, path):
        serialize.dump({"model": "flow", "flow": self.to_dict()}, path)

    @classmethod
    def load(cls, path):
        doc = serialize.load(path)
        return serialize.guarded(lambda d: cls.from_dict(d["flow"]), doc, path)


def tree_to_dict(cond: CondTree) -> dict:
    t = cond.tree
    clfs = []
    for p in cond.classifiers:
        if p is None:
            clfs.append(None)
        else:
            clfs.append({"kind": str(p.kind), "weights": serialize.hexlist(p.weights),
                         "mean": serialize.hexlist(p.mean), "scale": serialize.hexlist(p.scale),
                         "l2": float(p.l2).hex()})
    return {
        "lower": serialize.hexlist(t.lower), "upper": serialize.hexlist(t.upper),
        "left": t.left.tolist(), "right": t.right.tolist(), "parent": t.parent.tolist(),
        "depth": t.depth.tolist(), "axis": t.axis.tolist(), "cut": serialize.hexlist(t.cut),
        "shrink": serialize.hexlist(cond.shrink), "base_ratio": serialize.hexlist(cond.base_ratio),
        "classifiers": clfs,
    }


def tree_from_dict(doc, d, q) -> CondTree:
    t = DyadicTree(d)
    t.lower = serialize.unhex(doc["lower"]).reshape(-1, d)
    t.upper = serialize.unhex(doc["upper"]).reshape(-1, d)
    for name in ("left", "right", "parent", "depth", "axis"):
        setattr(t, name, np.asarray(doc[name], dtype=np.int64))
    t.cut = serialize.unhex(doc["cut"])
    n = t.lower.shape[0]
    if any(getattr(t, a).shape[0] != n for a in ("left", "right", "parent", "depth", "axis", "cut")):
        raise ValueError("inconsistent node table lengths")
    cond = CondTree(t, q)
    cond.shrink = serialize.unhex(doc["shrink"])
    cond.base_ratio = serialize.unhex(doc["base_ratio"])
    for k, c in enumerate(doc["classifiers"]):
        if c is not None:
            cond.classifiers[k] = ClassifierParams(
                ClassifierKind.parse(c["kind"]), serialize.unhex(c["weights"]),
                serialize.unhex(c["mean"]), serialize.unhex(c["scale"]), float.fromhex(c["l2"]))
    for k in t.internal_nodes():
        if cond.classifiers[k] is None:
            raise ValueError(f"internal node {k} has no classifier")
    return cond


def train_flow(train: Dataset, validation: Dataset, config: TrainConfig | None = None,
               callback=None) -> Flow:
    """Fit trees one after another on the current residuals.

    Each phase stops once the validation log-likelihood has not grown over the
    last ``window`` trees of that phase. ``callback(k, tree, ll)`` is called
    after every tree.
    """
    config = config or TrainConfig()
    if train.n == 0:
        raise DataError("empty training set")
    if validation.n == 0:
        raise DataError("empty validation set")
    Xt, Yt = train.X, train.Y
    Xv, Yv = validation.X, validation.Y
    if Yt.shape[1] != Yv.shape[1] or Xt.shape[1] != Xv.shape[1]:
        raise DataError("training and validation sets have different shapes")
    check_unit_cube(Yt)
    check_unit_cube(Yv)
    d, q = Yt.shape[1], Xt.shape[1]
    res_t, res_v = Yt.copy(), Yv.copy()
    trees, trace, bounds = [], [0.0], []
    init = stream(config.seed, "classifier-init")
    for phase in config.phases:
        tcfg = config.tree_config(phase)
        j = 0
        while j < phase.max_trees and len(trees) < config.max_trees:
            k = len(trees)
            tree = fit_tree(Xt, res_t, tcfg, seed=init + [k])
            tree.apply_shrinkage(config.c0, config.gamma)
            res_v, lv = tree.forward_with_log_density(Xv, res_v)
            res_t = tree.forward(Xt, res_t)
            trees.append(tree)
            trace.append(trace[-1] + float(np.sum(lv)))
            j += 1
            if callback is not None:
                callback(k, tree, trace[-1])
            if j >= config.window and trace[-1] - trace[-1 - config.window] <= 0.0:
                break
        bounds.append(len(trees))
        log.info("phase %s finished after %d trees, validation LL %.4f",
                 phase.kind, len(trees), trace[-1])
    return Flow(trees, d, q, bounds, trace, config=config)
