"""Axis-aligned dyadic partitions of the unit cube.

Boxes are products of half-open intervals ``(lower_j, upper_j]``; a point lying
exactly on a cut belongs to the left child.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidSplitError, OutOfDomainError


@dataclass(frozen=True)
class Rect:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.shape != upper.shape:
            raise ValueError("lower and upper must have the same length")
        if not np.all(lower < upper):
            raise ValueError(f"degenerate box {lower} .. {upper}")
        if np.any(lower < 0.0) or np.any(upper > 1.0):
            raise ValueError("box must lie inside (0, 1]^d")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def unit(cls, d: int) -> "Rect":
        return cls(np.zeros(d), np.ones(d))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, y) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(y > self.lower) and np.all(y <= self.upper))


@dataclass(frozen=True)
class SplitSpec:
    axis: int
    cut: float


def volume(rect: Rect) -> float:
    return float(np.prod(rect.upper - rect.lower))


def split_rect(rect: Rect, spec: SplitSpec) -> tuple[Rect, Rect]:
    j = spec.axis
    if not 0 <= j < rect.dim:
        raise InvalidSplitError(f"axis {j} out of range for a {rect.dim}-d box")
    a, b = rect.lower[j], rect.upper[j]
    if not a < spec.cut < b:
        raise InvalidSplitError(f"cut {spec.cut} not strictly inside ({a}, {b}] on axis {j}")
    left_upper = rect.upper.copy()
    left_upper[j] = spec.cut
    right_lower = rect.lower.copy()
    right_lower[j] = spec.cut
    return Rect(rect.lower, left_upper), Rect(right_lower, rect.upper)


def check_unit_cube(Y: np.ndarray) -> None:
    if not (np.all(Y > 0.0) and np.all(Y <= 1.0)):
        bad = np.argwhere(~((Y > 0.0) & (Y <= 1.0)))[0]
        raise OutOfDomainError(f"point outside (0, 1]^d at row {bad[0]}, column {bad[-1]}")


class DyadicTree:
    """Full binary tree of nested boxes stored as flat arrays.

    Node 0 is the root ``(0, 1]^d``. ``left[k] == -1`` marks a leaf.
    """

    def __init__(self, d: int):
        self.d = d
        self.lower = np.zeros((1, d))
        self.upper = np.ones((1, d))
        self.left = np.array([-1], dtype=np.int64)
        self.right = np.array([-1], dtype=np.int64)
        self.parent = np.array([-1], dtype=np.int64)
        self.depth = np.array([0], dtype=np.int64)
        self.axis = np.array([-1], dtype=np.int64)
        self.cut = np.array([np.nan])

    @property
    def n_nodes(self) -> int:
        return self.left.shape[0]

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def rect(self, node: int) -> Rect:
        return Rect(self.lower[node], self.upper[node])

    def is_leaf(self, node: int) -> bool:
        return self.left[node] < 0

    def internal_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.left >= 0)

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left < 0)

    def split(self, node: int, spec: SplitSpec) -> tuple[int, int]:
        """Split leaf ``node``; returns the indices of the new children."""
        if not self.is_leaf(node):
            raise InvalidSplitError(f"node {node} is already split")
        left_rect, right_rect = split_rect(self.rect(node), spec)
        k = self.n_nodes
        self.lower = np.vstack([self.lower, left_rect.lower, right_rect.lower])
        self.upper = np.vstack([self.upper, left_rect.upper, right_rect.upper])
        self.left = np.concatenate([self.left, [-1, -1]])
        self.right = np.concatenate([self.right, [-1, -1]])
        self.parent = np.concatenate([self.parent, [node, node]])
        depth = self.depth[node] + 1
        self.depth = np.concatenate([self.depth, [depth, depth]])
        self.axis = np.concatenate([self.axis, [-1, -1]])
        self.cut = np.concatenate([self.cut, [np.nan, np.nan]])
        self.left[node], self.right[node] = k, k + 1
        self.axis[node] = spec.axis
        self.cut[node] = spec.cut
        return k, k + 1

    def volumes(self) -> np.ndarray:
        return np.prod(self.upper - self.lower, axis=1)

    def locate_leaf(self, y) -> list[int]:
        """Root-to-leaf path of node indices for a single point."""
        y = np.asarray(y, dtype=float).ravel()
        if y.shape[0] != self.d:
            raise ValueError(f"expected a point of length {self.d}")
        check_unit_cube(y[None, :])
        path = [0]
        node = 0
        while self.left[node] >= 0:
            node = self.left[node] if y[self.axis[node]] <= self.cut[node] else self.right[node]
            path.append(int(node))
        return path

    def route(self, Y: np.ndarray) -> np.ndarray:
        """Vectorized routing: ``(n, max_depth + 1)`` array of path nodes, -1 padded."""
        n = Y.shape[0]
        paths = np.full((n, self.max_depth + 1), -1, dtype=np.int64)
        node = np.zeros(n, dtype=np.int64)
        paths[:, 0] = 0
        rows = np.arange(n)
        for level in range(1, self.max_depth + 1):
            active = self.left[node] >= 0
            if not active.any():
                break
            idx = rows[active]
            cur = node[idx]
            go_left = Y[idx, self.axis[cur]] <= self.cut[cur]
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
            paths[idx, level] = node[idx]
        return paths
