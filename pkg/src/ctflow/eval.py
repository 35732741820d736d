"""Test log-likelihood, grid SSE against true densities, and timing benchmarks."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import REFERENCE_X, Dataset, scaling_data, support_box, truth_density


def _log_density_fn(model):
    if hasattr(model, "log_density"):
        return model.log_density
    if hasattr(model, "score_samples"):
        return model.score_samples
    raise TypeError("model needs a log_density or score_samples method")


def mean_test_loglik(model, test: Dataset):
    """Mean held-out log-density and its standard error."""
    ll = np.asarray(_log_density_fn(model)(test.X, test.Y), dtype=float)
    se = ll.std(ddof=1) / np.sqrt(ll.shape[0]) if ll.shape[0] > 1 else 0.0
    return float(ll.mean()), float(se)


@dataclass
class SseReport:
    task: str
    xs: tuple
    per_x: list
    lower: np.ndarray
    upper: np.ndarray
    resolution: int
    pad: float = 0.05
    notes: list = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_x))

    def rows(self):
        return [(x, s) for x, s in zip(self.xs, self.per_x)]

    def header(self) -> str:
        lo, hi = self.lower, self.upper
        return (f"# task={self.task} grid={self.resolution}x{self.resolution} "
                f"bounds=[{lo[0]:.4f},{hi[0]:.4f}]x[{lo[1]:.4f},{hi[1]:.4f}] pad={self.pad}")


def grid_box(task, pad=0.05, xs=REFERENCE_X):
    lo, hi = support_box(task, xs)
    span = hi - lo
    return lo - pad * span, hi + pad * span


def cell_centers(lo, hi, resolution):
    e1 = np.linspace(lo[0], hi[0], resolution + 1)
    e2 = np.linspace(lo[1], hi[1], resolution + 1)
    c1 = 0.5 * (e1[:-1] + e1[1:])
    c2 = 0.5 * (e2[:-1] + e2[1:])
    G1, G2 = np.meshgrid(c1, c2, indexing="ij")
    return G1.ravel(), G2.ravel()


def sse_grid(model, task: str, resolution=64, xs=REFERENCE_X, pad=0.05) -> SseReport:
    """Sum over grid cell centers of squared density error, one value per ``x``.

    ``model`` is anything with ``log_density(X, Y)`` or a callable
    ``f(x, y1, y2) -> density``.
    """
    lo, hi = grid_box(task, pad, xs)
    g1, g2 = cell_centers(lo, hi, resolution)
    Y = np.column_stack([g1, g2])
    per_x = []
    for x in xs:
        truth = truth_density(task, x, g1, g2)
        if callable(model) and not hasattr(model, "log_density") \
                and not hasattr(model, "score_samples"):
            est = np.asarray(model(x, g1, g2), dtype=float)
        else:
            est = np.exp(_log_density_fn(model)(np.full((Y.shape[0], 1), x), Y))
        per_x.append(float(np.sum((est - truth) ** 2)))
    return SseReport(task, tuple(xs), per_x, lo, hi, resolution, pad)


def loglog_slope(sizes, seconds) -> float:
    return float(np.polyfit(np.log(sizes), np.log(seconds), 1)[0])


def scaling_benchmark(ns=(500, 1000, 2000, 4000, 8000), d=2, q=4, n_trees=10, repeats=3,
                      config=None, seed=0):
    """Median wall time of fitting ``n_trees`` trees for each ``n``.

    Returns ``(rows, slope)`` with rows ``(n, n*d*q, seconds)`` and the slope of
    log time against log ``n*d*q``.
    """
    from .flow import PhaseSpec, TrainConfig, train_flow
    from .data import fit_normalizer, split

    base = config or TrainConfig()
    phase = PhaseSpec(base.phases[0].kind, base.phases[0].max_depth, n_trees)
    cfg = TrainConfig(c0=base.c0, gamma=base.gamma, eta=base.eta, phases=(phase,),
                      min_samples=base.min_samples, n_grid=base.n_grid, window=n_trees + 1,
                      max_trees=n_trees, seed=base.seed, fit=base.fit)
    rows = []
    # untimed warm-up so compilation and first-call costs do not land on the smallest n
    warm = scaling_data(200, d, q, seed)
    Tw = Dataset(warm.X, fit_normalizer(warm.Y, 0.01).apply(warm.Y))
    train_flow(Tw, Tw, cfg)
    for n in ns:
        ds = scaling_data(int(n / (1 - cfg.validation_fraction)) + 1, d, q, seed)
        tr, va = split(ds, cfg.validation_fraction, seed)
        nz = fit_normalizer(tr.Y, 0.01, standardize=True, X=tr.X)
        T = Dataset(nz.transform_x(tr.X), nz.apply(tr.Y))
        V = Dataset(nz.transform_x(va.X), nz.apply(va.Y, clamp=True))
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            train_flow(T, V, cfg)
            times.append(time.perf_counter() - t0)
        rows.append((n, n * d * q, float(np.median(times))))
    slope = loglog_slope([r[1] for r in rows], [r[2] for r in rows])
    return rows, slope


def density_eval_time(flow, n_points=2000, repeats=3, seed=0) -> float:
    """Median seconds per point of ``flow.log_density_unit`` at uniform points."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n_points, flow.q))
    Y = 1.0 - rng.random((n_points, flow.d))
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        flow.log_density_unit(X, Y)
        times.append(time.perf_counter() - t0)
    return float(np.median(times)) / n_points
