"""Datasets, unit-cube normalization, simulation tasks and their true densities."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .exceptions import ConfigError, DataError

TASKS = ("squares", "half_gaussian", "gaussian_stick", "elastic_ring")
HALF_GAUSSIAN_SD = 2.0
REFERENCE_X = (-0.75, -0.25, 0.25, 0.75)


@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    x_names: list = field(default_factory=list)
    y_names: list = field(default_factory=list)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if Y.ndim == 1:
            Y = Y[:, None]
        if X.shape[0] != Y.shape[0]:
            raise DataError(f"{X.shape[0]} covariate rows but {Y.shape[0]} outcome rows")
        if Y.shape[0] < 1:
            raise DataError("dataset is empty")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("dataset contains NaN or Inf")
        self.X, self.Y = X, Y
        if not self.x_names:
            self.x_names = [f"x{j + 1}" for j in range(X.shape[1])]
        if not self.y_names:
            self.y_names = [f"y{j + 1}" for j in range(Y.shape[1])]

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def q(self):
        return self.X.shape[1]

    @property
    def d(self):
        return self.Y.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], list(self.x_names), list(self.y_names))


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def load_table(path, x_cols, y_cols, delimiter=",") -> Dataset:
    """Read a delimited text file with a header row into a :class:`Dataset`."""
    x_cols, y_cols = list(x_cols), list(y_cols)
    wanted = x_cols + y_cols
    if len(set(y_cols)) != len(y_cols) or len(set(x_cols)) != len(x_cols):
        raise ConfigError("a column is listed twice")
    if set(x_cols) & set(y_cols):
        raise ConfigError(f"columns used as both covariate and outcome: {sorted(set(x_cols) & set(y_cols))}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"{path}: unknown column(s) {missing}; header has {header}")
        pos = [header.index(c) for c in wanted]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            vals = []
            for c, k in zip(wanted, pos):
                cell = row[k].strip() if k < len(row) else ""
                if cell == "":
                    raise DataError(f"{path}: missing value at line {lineno}, column '{c}'")
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: cannot parse '{cell}' at line {lineno}, "
                                    f"column '{c}'") from None
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    q = len(x_cols)
    return Dataset(arr[:, :q].reshape(len(rows), q), arr[:, q:], x_cols, y_cols)


def write_table(path, header, columns) -> None:
    """Write equal-length columns as CSV using shortest round-trip float repr."""
    columns = [np.asarray(c).ravel() for c in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(v)) for v in row])


def save_dataset(path, ds: Dataset) -> None:
    write_table(path, ds.x_names + ds.y_names, list(ds.X.T) + list(ds.Y.T))


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass
class NormalizationSpec:
    """Outcome map into ``(0, 1]``: z-score, optional rotation, then min-max.

    ``z = (y - center) / spread`` (0 and 1 when the z-score is skipped), then
    ``z <- (z - pivot) @ rotation + pivot`` if a rotation is set, then
    ``u = (z - lo) / width``. Covariates get their own z-score.
    """
    center: np.ndarray
    spread: np.ndarray
    lo: np.ndarray
    width: np.ndarray
    margin: float = 0.0
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    rotation: np.ndarray | None = None
    pivot: np.ndarray | None = None
    n_clamped: int = 0

    @property
    def d(self):
        return self.lo.shape[0]

    @property
    def scale(self):
        """Per-dimension derivative ``du/dy``."""
        return 1.0 / (self.spread * self.width)

    @property
    def log_volume_correction(self) -> float:
        """Add to a unit-cube log-density to get the log-density in data units."""
        return float(np.sum(-np.log(self.spread) - np.log(self.width)))

    def transform_x(self, X):
        X = np.asarray(X, dtype=float)
        if self.x_mean is None:
            return X
        return (X - self.x_mean) / self.x_scale

    def standardize(self, Y):
        Z = (np.asarray(Y, dtype=float) - self.center) / self.spread
        if self.rotation is not None:
            Z = (Z - self.pivot) @ self.rotation + self.pivot
        return Z

    def apply(self, Y, clamp=True):
        U = (self.standardize(Y) - self.lo) / self.width
        if clamp:
            bad = ~((U > 0.0) & (U <= 1.0))
            if bad.any():
                k = int(np.count_nonzero(np.any(bad, axis=1)))
                self.n_clamped += k
                warnings.warn(f"{k} outcome rows outside the training range were clamped",
                              stacklevel=2)
                U = np.clip(U, _FLOOR, 1.0)
        return U

    def invert(self, U):
        Z = np.asarray(U, dtype=float) * self.width + self.lo
        if self.rotation is not None:
            Z = (Z - self.pivot) @ self.rotation.T + self.pivot
        return Z * self.spread + self.center

    def to_dict(self):
        from .serialize import hexlist
        return {"center": hexlist(self.center), "spread": hexlist(self.spread),
                "lo": hexlist(self.lo), "width": hexlist(self.width),
                "margin": float(self.margin).hex(),
                "x_mean": None if self.x_mean is None else hexlist(self.x_mean),
                "x_scale": None if self.x_scale is None else hexlist(self.x_scale),
                "rotation": None if self.rotation is None else hexlist(self.rotation),
                "pivot": None if self.pivot is None else hexlist(self.pivot)}

    @classmethod
    def from_dict(cls, d):
        from .serialize import unhex

        def opt(key):
            return None if d.get(key) is None else unhex(d[key])
        rot = opt("rotation")
        return cls(unhex(d["center"]), unhex(d["spread"]), unhex(d["lo"]), unhex(d["width"]),
                   float.fromhex(d["margin"]), opt("x_mean"), opt("x_scale"),
                   None if rot is None else rot.reshape(len(d["lo"]), -1), opt("pivot"))


_FLOOR = 1e-12


def _zscore_stats(A):
    mean = A.mean(axis=0)
    sd = A.std(axis=0)
    if np.any(sd <= 0):
        raise DataError(f"constant column(s) {np.flatnonzero(sd <= 0).tolist()}")
    return mean, sd


def fit_normalizer(Y, margin=0.01, standardize=False, X=None, rotation=None) -> NormalizationSpec:
    """Fit the outcome map on training outcomes.

    The min-max step sends ``[min - margin*range, max + margin*range]`` onto
    ``[0, 1]``. ``margin=0`` is only allowed for outcomes already in ``(0, 1]``
    and then gives the identity map. A ``rotation`` (d x d orthogonal) is
    applied about the mean of the standardized outcomes; pass ``None`` for
    the identity so that no arithmetic is done.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if not 0.0 <= margin <= 0.1:
        raise ConfigError(f"margin must lie in [0, 0.1], got {margin}")
    d = Y.shape[1]
    x_mean = x_scale = None
    if X is not None:
        X = np.asarray(X, dtype=float)
        x_mean = X.mean(axis=0)
        x_scale = X.std(axis=0)
        x_scale = np.where(x_scale > 0, x_scale, 1.0)
    if standardize:
        center, spread = _zscore_stats(Y)
    else:
        center, spread = np.zeros(d), np.ones(d)
    Z = (Y - center) / spread
    pivot = None
    if rotation is not None:
        rotation = np.asarray(rotation, dtype=float)
        if rotation.shape != (d, d):
            raise ConfigError(f"rotation must be {d}x{d}")
        pivot = Z.mean(axis=0)
        Z = (Z - pivot) @ rotation + pivot
    if margin == 0.0:
        if standardize or rotation is not None or not np.all((Z > 0) & (Z <= 1)):
            raise DataError("margin 0 requires raw outcomes already inside (0, 1]")
        return NormalizationSpec(center, spread, np.zeros(d), np.ones(d), 0.0, x_mean, x_scale)
    mn, mx = Z.min(axis=0), Z.max(axis=0)
    rng = mx - mn
    if np.any(rng <= 0):
        raise DataError(f"constant outcome column(s) {np.flatnonzero(rng <= 0).tolist()}")
    return NormalizationSpec(center, spread, mn - margin * rng, rng * (1.0 + 2.0 * margin),
                             margin, x_mean, x_scale, rotation, pivot)


def dequantize(Y, rng):
    """Jitter discrete columns by ``U(-h, h)`` with ``h`` half their smallest positive gap.

    A column counts as discrete when it has repeated values. Returns the new
    outcomes and a boolean mask of the columns that were changed.
    """
    rng = np.random.default_rng(rng)
    Y = np.array(Y, dtype=float, copy=True)
    if Y.ndim == 1:
        Y = Y[:, None]
    changed = np.zeros(Y.shape[1], dtype=bool)
    for j in range(Y.shape[1]):
        vals = np.unique(Y[:, j])
        if vals.shape[0] == Y.shape[0] or vals.shape[0] < 2:
            continue
        h = 0.5 * np.min(np.diff(vals))
        Y[:, j] += rng.uniform(-h, h, size=Y.shape[0])
        changed[j] = True
    return Y, changed


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def split(ds: Dataset, fraction: float, rng):
    """Random partition; returns ``(rest, part)`` with ``part`` ~ ``fraction`` of rows."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(rng)
    perm = rng.permutation(ds.n)
    k = int(round(fraction * ds.n))
    k = min(max(k, 1), ds.n - 1)
    return ds.subset(np.sort(perm[k:])), ds.subset(np.sort(perm[:k]))


def train_test_split(ds: Dataset, train_ratio, rng):
    """``train_ratio`` is ``(train, test)``, e.g. ``(9, 1)`` or ``(3, 7)``."""
    a, b = train_ratio
    train, test = split(ds, b / (a + b), rng)
    return train, test


# ---------------------------------------------------------------------------
# simulation tasks
# ---------------------------------------------------------------------------

def _rot(u, v, angle):
    c, s = np.cos(angle), np.sin(angle)
    return u * c - v * s, u * s + v * c


def _check_task(task):
    if task not in TASKS:
        raise ConfigError(f"unknown task '{task}'; choose from {', '.join(TASKS)}")


def simulate_task(task: str, n: int, seed=0) -> Dataset:
    _check_task(task)
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    if task == "squares":
        lam = rng.random(n) < 0.5
        a = rng.uniform(x - 5, x - 1, size=(2, n))
        b = rng.uniform(1 - x, 5 - x, size=(2, n))
        y = np.where(lam, a, b)
        y1, y2 = y
    elif task == "half_gaussian":
        a = rng.normal(0.0, HALF_GAUSSIAN_SD, n)
        b = rng.normal(0.0, HALF_GAUSSIAN_SD, n)
        y1, y2 = _rot(np.abs(a), b, x * np.pi)
    elif task == "gaussian_stick":
        a = rng.normal(0.0, 1.0, n)
        b = rng.uniform(-6.0, 6.0, n)
        y1, y2 = _rot(a, b, (-0.75 + x) / 2 * np.pi)
    else:
        dd = rng.uniform(0.0, 2.0, n)
        th = rng.uniform(0.0, 2 * np.pi, n)
        y1 = (4 + 2 * x + dd) * np.cos(th)
        y2 = (4 - 2 * x + dd) * np.sin(th)
    return Dataset(x[:, None], np.column_stack([y1, y2]), ["x"], ["y1", "y2"])


def _ring_density(x, y1, y2):
    A = 4 + 2 * x
    B = 4 - 2 * x

    def h(dv):
        return (y1 / (A + dv)) ** 2 + (y2 / (B + dv)) ** 2 - 1.0

    # h decreases in d, so the ring parameter d lies in (0, 2) iff h(0) > 0 > h(2)
    inside = (h(0.0) > 0) & (h(2.0) < 0)
    lo = np.zeros_like(y1)
    hi = np.full_like(y1, 2.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        pos = h(mid) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    dv = 0.5 * (lo + hi)
    c = y1 / (A + dv)
    s = y2 / (B + dv)
    jac = (B + dv) * c ** 2 + (A + dv) * s ** 2
    return np.where(inside, 1.0 / (4 * np.pi) / jac, 0.0)


def truth_density(task: str, x: float, y1, y2) -> np.ndarray:
    """True conditional density of ``(y1, y2)`` given scalar ``x``."""
    _check_task(task)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if task == "squares":
        in_a = (y1 > x - 5) & (y1 < x - 1) & (y2 > x - 5) & (y2 < x - 1)
        in_b = (y1 > 1 - x) & (y1 < 5 - x) & (y2 > 1 - x) & (y2 < 5 - x)
        return (0.5 / 16.0) * (in_a.astype(float) + in_b.astype(float))
    if task == "half_gaussian":
        r1, r2 = _rot(y1, y2, -x * np.pi)
        s = HALF_GAUSSIAN_SD
        return np.where(r1 >= 0, 2 * norm.pdf(r1, scale=s) * norm.pdf(r2, scale=s), 0.0)
    if task == "gaussian_stick":
        r1, r2 = _rot(y1, y2, -(-0.75 + x) / 2 * np.pi)
        return norm.pdf(r1) * np.where(np.abs(r2) <= 6.0, 1.0 / 12.0, 0.0)
    return _ring_density(x, y1, y2)


def support_box(task: str, xs=REFERENCE_X):
    """Bounding box ``(lo, hi)`` of the support (Gaussian tails cut at 3 sd) over ``xs``."""
    _check_task(task)
    lo = np.full(2, np.inf)
    hi = np.full(2, -np.inf)
    for x in xs:
        if task == "squares":
            pts = np.array([[x - 5, x - 5], [x - 1, x - 1], [1 - x, 1 - x], [5 - x, 5 - x]])
        elif task == "half_gaussian":
            s = 3 * HALF_GAUSSIAN_SD
            t = np.linspace(-np.pi / 2, np.pi / 2, 721) + x * np.pi
            pts = np.vstack([np.column_stack([s * np.cos(t), s * np.sin(t)]),
                             np.column_stack(_rot(np.zeros(2), np.array([-s, s]), x * np.pi))])
        elif task == "gaussian_stick":
            a = np.array([-3.0, 3.0, -3.0, 3.0])
            b = np.array([-6.0, -6.0, 6.0, 6.0])
            pts = np.column_stack(_rot(a, b, (-0.75 + x) / 2 * np.pi))
        else:
            t = np.linspace(0, 2 * np.pi, 1441)
            pts = np.column_stack([(6 + 2 * x) * np.cos(t), (6 - 2 * x) * np.sin(t)])
        lo = np.minimum(lo, pts.min(axis=0))
        hi = np.maximum(hi, pts.max(axis=0))
    return lo, hi


def scaling_data(n: int, d: int, q: int, seed=0) -> Dataset:
    """Synthetic data for timing: outcomes depend linearly on covariates plus noise."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, q))
    W = rng.normal(size=(q, d)) / np.sqrt(q)
    Y = X @ W + 0.5 * rng.normal(size=(n, d))
    return Dataset(X, Y)
