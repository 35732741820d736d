"""scikit-learn style front end."""
from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from .classifier import FitOptions
from .data import Dataset, fit_normalizer, split
from .flow import DEFAULT_PHASES, TrainConfig, stream
from .rotation import RotationEnsemble, fit_rotation_ensemble, make_rotations


def _seed_from(random_state) -> int:
    if isinstance(random_state, numbers.Integral):
        return int(random_state)
    return int(check_random_state(random_state).randint(0, 2 ** 31 - 1))


def _check_xy(X, y, n_features=None, n_outputs=None):
    X = check_array(X, dtype=float, ensure_2d=False)
    if X.ndim == 1:
        X = X[:, None]
    y = check_array(y, dtype=float, ensure_2d=False)
    if y.ndim == 1:
        y = y[:, None] if n_outputs in (None, 1) else y[None, :]
    if X.shape[0] != y.shape[0]:
        if X.shape[0] == 1:
            X = np.repeat(X, y.shape[0], axis=0)
        else:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"X has {X.shape[1]} features, expected {n_features}")
    if n_outputs is not None and y.shape[1] != n_outputs:
        raise ValueError(f"y has {y.shape[1]} columns, expected {n_outputs}")
    return X, y


class CubeScaler(TransformerMixin, BaseEstimator):
    """Affine map of outcomes into ``(0, 1]`` with a margin; tracks the log-Jacobian."""

    def __init__(self, margin=0.01, standardize=False):
        self.margin = margin
        self.standardize = standardize

    def fit(self, Y, y=None):
        Y = check_array(Y, dtype=float)
        self.spec_ = fit_normalizer(Y, self.margin, standardize=self.standardize)
        self.n_features_in_ = Y.shape[1]
        return self

    def transform(self, Y):
        check_is_fitted(self, "spec_")
        return self.spec_.apply(check_array(Y, dtype=float))

    def inverse_transform(self, U):
        check_is_fitted(self, "spec_")
        return self.spec_.invert(check_array(U, dtype=float))

    @property
    def log_jacobian_(self) -> float:
        """``log |du/dy|``; add to a cube log-density to get data-unit log-density."""
        check_is_fitted(self, "spec_")
        return self.spec_.log_volume_correction


class ConditionalTreeFlow(BaseEstimator):
    """Conditional density estimator built from tree-CDF transforms.

    ``n_rotations > 1`` fits a mixture over rotated copies of the outcomes with
    weights that vary across ``n_x_bins`` k-means bins of the covariates.
    """

    def __init__(self, c0=0.05, gamma=0.5, eta=0.1, phases=DEFAULT_PHASES, min_samples=10,
                 n_grid=20, window=10, max_trees=2000, validation_fraction=0.1, n_rotations=1,
                 rotation_pairs=None, n_x_bins=8, margin=0.01, screen_top=0, random_state=0,
                 n_jobs=1):
        self.c0 = c0
        self.gamma = gamma
        self.eta = eta
        self.phases = phases
        self.min_samples = min_samples
        self.n_grid = n_grid
        self.window = window
        self.max_trees = max_trees
        self.validation_fraction = validation_fraction
        self.n_rotations = n_rotations
        self.rotation_pairs = rotation_pairs
        self.n_x_bins = n_x_bins
        self.margin = margin
        self.screen_top = screen_top
        self.random_state = random_state
        self.n_jobs = n_jobs

    def train_config(self) -> TrainConfig:
        return TrainConfig(c0=self.c0, gamma=self.gamma, eta=self.eta, phases=self.phases,
                           min_samples=self.min_samples, n_grid=self.n_grid,
                           window=self.window, max_trees=self.max_trees,
                           validation_fraction=self.validation_fraction,
                           seed=_seed_from(self.random_state), screen_top=self.screen_top,
                           fit=FitOptions())

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        cfg = self.train_config()
        ds = Dataset(X, y)
        train, val = split(ds, cfg.validation_fraction, stream(cfg.seed, "split"))
        rot = make_rotations(y.shape[1], self.n_rotations, self.rotation_pairs)
        self.model_ = fit_rotation_ensemble(train, val, cfg, rot, self.n_x_bins, self.margin,
                                            self.n_jobs)
        self.n_features_in_ = X.shape[1]
        self.n_outputs_ = y.shape[1]
        return self

    def score_samples(self, X, y):
        """Log conditional density of each ``y`` row given its ``X`` row."""
        check_is_fitted(self, "model_")
        X, y = _check_xy(X, y, self.n_features_in_, self.n_outputs_)
        return self.model_.log_density(X, y)

    def score(self, X, y):
        return float(np.mean(self.score_samples(X, y)))

    def sample(self, X, random_state=None):
        """One draw of ``y`` per row of ``X``."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float, ensure_2d=False)
        if X.ndim == 1:
            X = X.reshape(-1, self.n_features_in_)
        if random_state is None:
            rng = np.random.default_rng(stream(_seed_from(self.random_state), "sampling"))
        else:
            rng = np.random.default_rng(random_state)
        return self.model_.sample(X, rng)

    @classmethod
    def from_model(cls, model: RotationEnsemble, **params):
        est = cls(**params)
        est.model_ = model
        est.n_features_in_ = model.q
        est.n_outputs_ = model.d
        return est
