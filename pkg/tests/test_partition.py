import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddspde.grid import ScalarField, build_grid
from ddspde.partition import build_strip_partition, split_weight_apply, strip_weights, write_partition_csv

from conftest import psi_field


def test_single_strip_is_one():
    p = build_strip_partition(build_grid(9), 1, 0.1)
    assert p.s == 1
    assert np.all(p.chi[0].values == 1.0)


def test_two_strip_ramp_values():
    x = np.array([0.44, 0.5, 0.56, 0.45, 0.55])
    chi = strip_weights(x, 2, 0.1)
    assert chi[0, 0] == 1.0
    assert chi[0, 1] == pytest.approx(0.5, abs=1e-15)
    assert chi[0, 2] == 0.0
    assert chi[0, 3] == pytest.approx(1.0, abs=1e-12)
    assert chi[0, 4] == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(chi.sum(axis=0), 1.0, atol=1e-15)


def test_trapezoid_geometry_four_strips():
    x = np.linspace(0, 1, 1001)
    chi = strip_weights(x, 4, 0.1)
    # strip 2 is flat on [0.25 + 0.05, 0.5 - 0.05] and zero outside [0.2, 0.55]
    flat = (x >= 0.3 + 1e-9) & (x <= 0.45 - 1e-9)
    out = (x <= 0.2 - 1e-9) | (x >= 0.55 + 1e-9)
    assert np.all(chi[1, flat] == 1.0)
    assert np.all(chi[1, out] == 0.0)
    # linear ramp: slope 1 / overlap
    assert strip_weights(np.array([0.225]), 4, 0.1)[1, 0] == pytest.approx(0.25)


def test_random_nodes_sum_to_one(rng):
    g = build_grid(127)
    p = build_strip_partition(g, 4, 0.1)
    total = sum(c.values for c in p.chi)
    idx = rng.integers(0, g.n_interior, (10, 2))
    for i, j in idx:
        assert abs(total[i, j] - 1) <= 1e-15


@pytest.mark.parametrize("s,overlap", [(2, 0.5), (4, 0.25), (4, 0.0), (3, -0.1)])
def test_rejects_bad_overlap(s, overlap):
    with pytest.raises(ValueError, match="overlap"):
        build_strip_partition(build_grid(9), s, overlap)


def test_weights_depend_on_x1_only():
    p = build_strip_partition(build_grid(31), 4, 0.1)
    for c in p.chi:
        assert np.all(c.values == c.values[:, :1])


def test_support_indices():
    g = build_grid(31)
    p = build_strip_partition(g, 4, 0.1)
    for c, (lo, hi) in zip(p.chi, p.support):
        row = c.values[:, 0]
        assert np.all(row[lo : hi + 1] > 0)
        assert np.all(row[:lo] == 0) and np.all(row[hi + 1 :] == 0)
    assert p.support[0][0] == 0
    assert p.support[-1][1] == g.n_interior - 1


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 80), s=st.integers(1, 6), frac=st.floats(0.01, 0.99))
def test_partition_of_unity_property(n, s, frac):
    g = build_grid(n)
    p = build_strip_partition(g, s, frac / s)
    total = sum(c.values for c in p.chi)
    assert np.max(np.abs(total - 1)) <= 1e-12
    for c in p.chi:
        assert c.values.min() >= 0 and c.values.max() <= 1


def test_split_weight_apply_examples(rng):
    g = build_grid(15)
    v = ScalarField(g, rng.standard_normal(g.shape))
    p1 = build_strip_partition(g, 1, 0.1)
    assert np.array_equal(split_weight_apply(p1, 1, v).values, v.values)
    p2 = build_strip_partition(g, 2, 0.1)
    one = ScalarField(g, np.ones(g.shape))
    total = split_weight_apply(p2, 1, one) + split_weight_apply(p2, 2, one)
    assert np.allclose(total.values, 1.0, atol=1e-15)
    w = split_weight_apply(p2, 1, psi_field(g))
    lo, hi = p2.support[0]
    assert np.all(w.values[hi + 1 :] == 0)
    with pytest.raises(IndexError):
        split_weight_apply(p2, 3, v)
    with pytest.raises(IndexError):
        split_weight_apply(p2, 0, v)


def test_sum_property_and_confinement(rng):
    g = build_grid(40)
    p = build_strip_partition(g, 4, 0.1)
    v = ScalarField(g, rng.standard_normal(g.shape))
    parts = [split_weight_apply(p, l, v) for l in range(1, 5)]
    assert np.allclose(sum(q.values for q in parts), v.values, rtol=0, atol=1e-14)
    for q, (lo, hi) in zip(parts, p.support):
        assert np.all(q.values[:lo] == 0) and np.all(q.values[hi + 1 :] == 0)


def test_partition_csv(tmp_path):
    p = build_strip_partition(build_grid(7), 4, 0.1)
    path = tmp_path / "p.csv"
    write_partition_csv(path, p)
    lines = path.read_text().splitlines()
    assert lines[0] == "x1,chi_1,chi_2,chi_3,chi_4"
    assert len(lines) == 8
    assert all(len(line.split(",")) == 5 for line in lines)
