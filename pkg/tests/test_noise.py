import numpy as np
import pytest

from ddspde.grid import build_grid
from ddspde.noise import (
    NoisePath,
    aggregate_to_coarse,
    build_spectrum,
    increment_field,
    increment_values,
    sample_path,
    truncation_tail,
    write_spectrum_csv,
)
from ddspde.timegrid import TimeGrid


def manual_path(spectrum, coeffs, T=1.0):
    coeffs = np.asarray(coeffs, dtype=float)
    return NoisePath(spectrum, TimeGrid.uniform(T, coeffs.shape[0]), coeffs, seed=0)


def direct_sum(spectrum, coeffs, K):
    """O(K^2 n^2) reference synthesis, one eigenfunction at a time."""
    out = np.zeros(spectrum.grid.shape)
    for k1 in range(1, K + 1):
        for k2 in range(1, K + 1):
            psi = spectrum.eigenfunction(k1, k2).values
            out += np.sqrt((k1**2 + k2**2) ** (-0.5 - spectrum.delta)) * coeffs[k1 - 1, k2 - 1] * psi
    return out


def test_eigenvalues():
    g = build_grid(3)
    sp = build_spectrum(2, 0.001, g)
    assert sp.q[0, 0] == pytest.approx(2**-0.501, rel=1e-15)
    assert sp.q[0, 0] == pytest.approx(0.7066168, abs=1e-7)
    assert sp.q[0, 1] == pytest.approx(5**-0.501, rel=1e-15)
    assert sp.q[0, 1] == pytest.approx(0.4464944, abs=1e-7)
    assert build_spectrum(1, 0.5, g).q[0, 0] == 0.5
    assert sp.q.shape == (2, 2)


def test_eigenvalues_decrease_with_radius():
    sp = build_spectrum(12, 0.001, build_grid(3))
    k = np.arange(1, 13)
    r2 = (k[:, None] ** 2 + k[None, :] ** 2).ravel()
    q = sp.q.ravel()
    order = np.argsort(r2, kind="stable")
    r2, q = r2[order], q[order]
    assert np.all(q > 0)
    strictly = r2[1:] > r2[:-1]
    assert np.all(q[1:][strictly] < q[:-1][strictly])


def test_build_spectrum_rejects_bad_delta():
    with pytest.raises(ValueError):
        build_spectrum(4, 0.0, build_grid(3))
    with pytest.raises(ValueError):
        build_spectrum(0, 0.1, build_grid(3))


def test_eigenfunctions_discretely_orthonormal():
    g = build_grid(16)
    sp = build_spectrum(8, 0.001, g)
    modes = [(a, b) for a in range(1, 9) for b in range(1, 9)]
    V = np.stack([sp.eigenfunction(*m).flat() for m in modes])
    gram = g.spacing**2 * V @ V.T
    assert np.allclose(gram, np.eye(len(modes)), atol=1e-10)


def test_sample_path_deterministic():
    g = build_grid(5)
    sp = build_spectrum(4, 0.001, g)
    tg = TimeGrid.uniform(1.0, 8)
    a = sample_path(sp, tg, seed=42, sample=3)
    b = sample_path(sp, tg, seed=42, sample=3)
    c = sample_path(sp, tg, seed=42, sample=4)
    assert a.increments.shape == (8, 4, 4)
    assert np.array_equal(a.increments, b.increments)
    assert not np.array_equal(a.increments, c.increments)


def test_degenerate_step_gives_zero_increment():
    sp = build_spectrum(3, 0.1, build_grid(3))
    path = sample_path(sp, TimeGrid(np.array([0.0, 0.5, 0.5, 1.0])), seed=1)
    assert np.all(path.increments[1] == 0)
    assert np.all(path.increments[0] != 0)


def test_increment_mean_monte_carlo():
    sp = build_spectrum(1, 0.5, build_grid(1))
    h = 0.25
    tg = TimeGrid.uniform(h, 1)
    M = 100_000
    x = np.array([sample_path(sp, tg, seed=7, sample=m).increments[0, 0, 0] for m in range(M)])
    assert abs(x.mean()) <= 4 * np.sqrt(h / M)
    assert abs(x.var() - h) <= 4 * h * np.sqrt(2 / M)


def test_increment_field_examples():
    g = build_grid(7)
    sp = build_spectrum(3, 0.5, g)
    zero = manual_path(sp, np.zeros((1, 3, 3)))
    assert np.all(increment_field(zero, 1, 3).values == 0)
    c = np.zeros((1, 3, 3))
    c[0, 0, 0] = 1.0
    single = increment_field(manual_path(sp, c), 1, 3)
    assert np.allclose(single.values, np.sqrt(0.5) * sp.eigenfunction(1, 1).values, atol=1e-15)


def test_truncation_difference_orthogonal_to_low_mode():
    g = build_grid(9)
    sp = build_spectrum(4, 0.001, g)
    path = sample_path(sp, TimeGrid.uniform(1.0, 2), seed=11)
    diff = increment_field(path, 2, 2) - increment_field(path, 2, 1)
    assert abs(diff.inner(sp.eigenfunction(1, 1))) < 1e-10
    assert abs(diff.inner(sp.eigenfunction(1, 2))) > 1e-3


def test_separable_synthesis_matches_direct_sum(rng):
    g = build_grid(13)
    sp = build_spectrum(10, 0.3, g)
    coeffs = rng.standard_normal((1, 10, 10))
    path = manual_path(sp, coeffs)
    for K in (1, 4, 10):
        assert np.allclose(increment_values(path, 1, K), direct_sum(sp, coeffs[0], K), atol=1e-12, rtol=0)


def test_increment_field_rejects_large_truncation():
    sp = build_spectrum(3, 0.1, build_grid(3))
    path = sample_path(sp, TimeGrid.uniform(1.0, 2), seed=0)
    with pytest.raises(ValueError):
        increment_field(path, 1, 4)
    with pytest.raises(IndexError):
        increment_field(path, 3, 2)


def test_truncation_levels_share_modes():
    g = build_grid(15)
    sp = build_spectrum(7, 0.001, g)
    path = sample_path(sp, TimeGrid.uniform(1.0, 3), seed=5)
    a, b = increment_field(path, 2, 3), increment_field(path, 2, 7)
    for k1 in range(1, 4):
        for k2 in range(1, 4):
            psi = sp.eigenfunction(k1, k2)
            assert a.inner(psi) == pytest.approx(b.inner(psi), abs=1e-10)


def test_aggregate_examples():
    sp = build_spectrum(1, 0.5, build_grid(1))
    path = manual_path(sp, np.array([[[0.3]], [[-1.1]], [[0.25]], [[2.0]]]))
    assert aggregate_to_coarse(path, 1) is path
    coarse = aggregate_to_coarse(path, 2)
    assert coarse.n_steps == 2
    assert coarse.increments[0, 0, 0] == 0.3 + -1.1
    assert coarse.increments[1, 0, 0] == 0.25 + 2.0
    assert np.allclose(coarse.time_grid.nodes, [0.0, 0.5, 1.0])
    with pytest.raises(ValueError):
        aggregate_to_coarse(path, 3)


def test_aggregated_variance_monte_carlo():
    sp = build_spectrum(1, 0.5, build_grid(1))
    M, r = 100_000, 4
    h_fine = 1.0 / (M * r)
    fine = sample_path(sp, TimeGrid.uniform(1.0, M * r), seed=3)
    x = aggregate_to_coarse(fine, r).increments[:, 0, 0]
    se = r * h_fine * np.sqrt(2.0 / M)
    assert abs(x.var() - r * h_fine) <= 4 * se


def test_coupling_exactness():
    g = build_grid(7)
    sp = build_spectrum(5, 0.001, g)
    fine = sample_path(sp, TimeGrid.uniform(1.0, 12), seed=9)
    coarse = aggregate_to_coarse(fine, 3)
    w = np.linspace(-1, 1, g.size).reshape(g.shape)  # a linear functional
    for n in range(1, 5):
        fine_sum = sum(increment_values(fine, 3 * (n - 1) + j, 5) for j in (1, 2, 3))
        assert np.sum(w * increment_values(coarse, n, 5)) == pytest.approx(np.sum(w * fine_sum), abs=1e-12)


def test_ito_isometry_small():
    g = build_grid(8)
    sp = build_spectrum(4, 0.2, g)
    h = 0.1
    tg = TimeGrid.uniform(h, 1)
    M = 4000
    x = np.array([increment_field(sample_path(sp, tg, 1, m), 1).norm_sq() for m in range(M)])
    expected = h * sp.q.sum()
    assert abs(x.mean() - expected) <= 4 * x.std(ddof=1) / np.sqrt(M)


def test_truncation_tail_examples():
    tail, cap = truncation_tail(1, 0.5, 2)
    assert tail == pytest.approx(1 / 5 + 1 / 5 + 1 / 8, rel=1e-14)
    assert tail == pytest.approx(0.525)
    assert cap == 2
    with pytest.raises(ValueError):
        truncation_tail(4, 0.5, 4)
    tails = [truncation_tail(K, 0.5, 20)[0] for K in range(1, 20)]
    assert all(b < a for a, b in zip(tails, tails[1:]))


def test_spectrum_csv(tmp_path):
    sp = build_spectrum(2, 0.5, build_grid(3))
    p = tmp_path / "s.csv"
    write_spectrum_csv(p, sp)
    lines = p.read_text().splitlines()
    assert lines[0] == "k1,k2,q"
    assert lines[1] == "1,1,0.5"
    assert len(lines) == 5
