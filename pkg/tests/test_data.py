import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import chi2

from ctflow.data import (REFERENCE_X, TASKS, Dataset, dequantize, fit_normalizer, load_table,
                         save_dataset, simulate_task, split, support_box, train_test_split,
                         truth_density)
from ctflow.exceptions import ConfigError, DataError
from ctflow.rotation import givens


def grid(lo, hi, m):
    e1 = np.linspace(lo[0], hi[0], m + 1)
    e2 = np.linspace(lo[1], hi[1], m + 1)
    c1, c2 = 0.5 * (e1[1:] + e1[:-1]), 0.5 * (e2[1:] + e2[:-1])
    G1, G2 = np.meshgrid(c1, c2, indexing="ij")
    return G1.ravel(), G2.ravel(), (e1[1] - e1[0]) * (e2[1] - e2[0])


# -- tables --------------------------------------------------------------------

def write(tmp_path, text):
    p = tmp_path / "t.csv"
    p.write_text(text)
    return p


def test_load_table_round_trip(tmp_path):
    ds = simulate_task("squares", 20, 0)
    save_dataset(tmp_path / "d.csv", ds)
    back = load_table(tmp_path / "d.csv", ["x"], ["y1", "y2"])
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.Y, ds.Y)
    assert back.y_names == ["y1", "y2"]


def test_load_table_column_selection(tmp_path):
    p = write(tmp_path, "a,b,c\n1,2,3\n4,5,6\n\n")
    ds = load_table(p, ["c"], ["a"])
    np.testing.assert_array_equal(ds.X[:, 0], [3, 6])
    np.testing.assert_array_equal(ds.Y[:, 0], [1, 4])


@pytest.mark.parametrize("text, match", [
    ("a,b\n1,2\n", "unknown column"),
    ("a,b,c\n1,x,3\n", "line 2, column 'b'"),
    ("a,b,c\n1,2,3\n1,,3\n", "missing value at line 3"),
    ("a,b,c\n", "no data rows"),
    ("", "empty file"),
])
def test_load_table_errors(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        load_table(write(tmp_path, text), ["a"], ["b", "c"])


def test_load_table_column_conflicts(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(ConfigError):
        load_table(p, ["a"], ["a"])
    with pytest.raises(ConfigError):
        load_table(p, ["a"], ["b", "b"])


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros(3), np.zeros(4))
    with pytest.raises(DataError):
        Dataset(np.zeros(2), np.array([1.0, np.nan]))


# -- normalization ---------------------------------------------------------------

@given(st.integers(0, 2**32 - 1), st.booleans(), st.floats(0.0, np.pi))
def test_normalizer_round_trip_and_jacobian(seed, standardize, angle):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(50, 2)) * [3.0, 0.1] + [10.0, -2.0]
    rot = givens(2, 0, 1, angle) if standardize else None
    nz = fit_normalizer(Y, 0.05, standardize=standardize, rotation=rot)
    U = nz.apply(Y, clamp=False)
    assert np.all(U > 0) and np.all(U <= 1)
    np.testing.assert_allclose(nz.invert(U), Y, rtol=1e-10, atol=1e-10)
    # numeric log |det dU/dY|
    h = 1e-6
    J = np.column_stack([(nz.apply(Y[:1] + h * e, clamp=False)
                          - nz.apply(Y[:1] - h * e, clamp=False))[0] / (2 * h)
                         for e in np.eye(2)])
    assert nz.log_volume_correction == pytest.approx(np.log(abs(np.linalg.det(J))), abs=1e-6)


def test_span_two_gives_half_scale():
    nz = fit_normalizer(np.array([[0.0], [1.3], [2.0]]), 1e-9)
    assert nz.scale[0] == pytest.approx(0.5)
    assert nz.log_volume_correction == pytest.approx(np.log(0.5))


def test_margin_zero_rule():
    Y = np.array([[0.2, 1.0], [0.5, 0.3]])
    nz = fit_normalizer(Y, 0.0)
    np.testing.assert_array_equal(nz.apply(Y), Y)
    assert nz.log_volume_correction == 0.0
    with pytest.raises(DataError):
        fit_normalizer(Y + 1.0, 0.0)
    with pytest.raises(DataError):
        fit_normalizer(Y, 0.0, standardize=True)
    with pytest.raises(ConfigError):
        fit_normalizer(Y, 0.5)


def test_clamping_counts_and_warns():
    nz = fit_normalizer(np.array([[0.0], [1.0]]), 0.01)
    with pytest.warns(UserWarning, match="clamped"):
        U = nz.apply(np.array([[-5.0], [0.5], [7.0]]))
    assert nz.n_clamped == 2
    assert U[0, 0] == 1e-12 and U[2, 0] == 1.0


def test_constant_column_rejected():
    with pytest.raises(DataError):
        fit_normalizer(np.ones((5, 1)), 0.01)


def test_normalizer_serialization_round_trip():
    Y = np.random.default_rng(0).normal(size=(30, 2))
    nz = fit_normalizer(Y, 0.01, standardize=True, X=Y[:, :1], rotation=givens(2, 0, 1, 0.3))
    back = type(nz).from_dict(nz.to_dict())
    np.testing.assert_array_equal(back.apply(Y, clamp=False), nz.apply(Y, clamp=False))
    np.testing.assert_array_equal(back.transform_x(Y[:, :1]), nz.transform_x(Y[:, :1]))


# -- dequantization and splits ------------------------------------------------------

def test_dequantize_only_discrete_columns(rng):
    Y = np.column_stack([rng.integers(0, 5, 200) * 2.0, rng.normal(size=200)])
    out, changed = dequantize(Y, 0)
    assert changed.tolist() == [True, False]
    np.testing.assert_array_equal(out[:, 1], Y[:, 1])
    # jitter stays within half the grid spacing, so rounding recovers the values
    np.testing.assert_array_equal(np.round(out[:, 0] / 2) * 2, Y[:, 0])
    assert len(np.unique(out[:, 0])) == 200


def test_split_sizes_and_disjointness():
    ds = simulate_task("squares", 2000, 3)
    train, test = train_test_split(ds, (3, 7), 0)
    assert (train.n, test.n) == (600, 1400)
    rest, part = split(ds, 0.1, 1)
    assert part.n == 200 and rest.n == 1800
    rows = {tuple(r) for r in rest.Y} & {tuple(r) for r in part.Y}
    assert not rows
    with pytest.raises(ConfigError):
        split(ds, 1.0, 0)


# -- simulators and true densities -------------------------------------------------

def test_simulate_is_seeded():
    a = simulate_task("elastic_ring", 100, 5)
    b = simulate_task("elastic_ring", 100, 5)
    np.testing.assert_array_equal(a.Y, b.Y)
    assert a.X.min() >= -1 and a.X.max() <= 1
    with pytest.raises(ConfigError):
        simulate_task("spiral", 10)


@pytest.mark.parametrize("task", TASKS)
@pytest.mark.parametrize("x", REFERENCE_X)
def test_truth_integrates_to_one(task, x):
    lo, hi = support_box(task, (x,))
    span = hi - lo
    g1, g2, area = grid(lo - 0.02 * span, hi + 0.02 * span, 700)
    total = truth_density(task, x, g1, g2).sum() * area
    # Gaussian tails past 3 sd fall outside the box; square edges cut through cells
    assert total == pytest.approx(1.0, abs=0.01)


@pytest.mark.parametrize("task", TASKS)
def test_simulator_matches_truth_histogram(task):
    """Binned simulator draws near x0 against the truth integrated over the same x window."""
    ds = simulate_task(task, 400_000, 11)
    x0, hw = 0.25, 0.03
    sel = np.abs(ds.X[:, 0] - x0) < hw
    Y = ds.Y[sel]
    lo, hi = support_box(task, (x0 - hw, x0 + hw))
    m = 8
    e1 = np.linspace(lo[0], hi[0], m + 1)
    e2 = np.linspace(lo[1], hi[1], m + 1)
    counts, _, _ = np.histogram2d(Y[:, 0], Y[:, 1], bins=[e1, e2])
    g1, g2, area = grid(lo, hi, m * 40)
    prob = np.zeros(m * m)
    for x in np.linspace(x0 - hw, x0 + hw, 13):
        dens = truth_density(task, x, g1, g2).reshape(m * 40, m * 40)
        prob += dens.reshape(m, 40, m, 40).sum(axis=(1, 3)).ravel() * area
    prob /= 13
    expected = prob / prob.sum() * counts.sum()
    keep = expected > 5
    stat = np.sum((counts.ravel()[keep] - expected[keep]) ** 2 / expected[keep])
    assert chi2.sf(stat, keep.sum() - 1) > 1e-3


def test_ring_density_against_change_of_variables(rng):
    x = 0.4
    dd = rng.uniform(0.05, 1.95, 20)
    th = rng.uniform(0, 2 * np.pi, 20)

    def f(d, t):
        return np.array([(4 + 2 * x + d) * np.cos(t), (4 - 2 * x + d) * np.sin(t)])

    h = 1e-6
    for d, t in zip(dd, th):
        J = np.column_stack([(f(d + h, t) - f(d - h, t)) / (2 * h),
                             (f(d, t + h) - f(d, t - h)) / (2 * h)])
        y = f(d, t)
        expected = 1.0 / (2.0 * 2 * np.pi) / abs(np.linalg.det(J))
        assert truth_density("elastic_ring", x, y[:1], y[1:])[0] == pytest.approx(expected,
                                                                                  rel=1e-6)


def test_squares_density_values():
    assert truth_density("squares", 0.25, np.array([-2.0]), np.array([-2.0]))[0] == 1 / 32
    assert truth_density("squares", 0.25, np.array([0.0]), np.array([0.0]))[0] == 0.0
