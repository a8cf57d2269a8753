import math

import numpy as np
import pytest

from shofar.data import (
    PRESET_SIZES,
    gen_checkerboard,
    gen_circles,
    gen_havlicek,
    gen_moons,
    havlicek_expectation,
    load_csv,
    make_train_test,
    save_csv,
    stratified_split,
)
from shofar.exceptions import GenerationError, InputError, ParseError
from shofar.qkernel import EmbeddingKind, EmbeddingSpec, kernel_matrix_exact
from shofar.svm import accuracy, classify, solve_primal


def balanced(ds, slack=1):
    return abs(int(np.sum(ds.labels == 1)) - int(np.sum(ds.labels == -1))) <= slack


def test_circles_zero_noise_radii():
    ds = gen_circles(8, noise_sd=0.0, factor=0.5, seed=4, rescale=False)
    r = np.linalg.norm(ds.points, axis=1)
    np.testing.assert_allclose(np.sort(r), [0.5] * 4 + [1.0] * 4, atol=1e-12)
    np.testing.assert_allclose(r[ds.labels == -1], 1.0, atol=1e-12)
    assert balanced(ds, 0)


@pytest.mark.parametrize("gen", [gen_circles, gen_moons])
def test_two_class_generators(gen):
    a, b = gen(20, seed=3), gen(20, seed=3)
    assert set(a.labels.tolist()) <= {-1, 1} and balanced(a, 0)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.points, gen(20, seed=4).points)
    assert a.points.min() >= 0.0 and a.points.max() <= math.pi + 1e-12
    with pytest.raises(InputError):
        gen(7)


def test_rescale_recorded_and_invertible():
    ds = gen_circles(12, seed=1)
    raw = gen_circles(12, seed=1, rescale=False)
    np.testing.assert_allclose(ds.unscaled(), raw.points, atol=1e-12)


def test_checkerboard_parity():
    ds = gen_checkerboard(4, grid=2, seed=0)
    assert ds.labels.tolist() == [1, -1, -1, 1]
    assert np.all((ds.points >= 0) & (ds.points <= math.pi))


def test_checkerboard_balance_and_domain():
    ds = gen_checkerboard(100, grid=4, seed=9)
    assert balanced(ds, 2)
    assert np.all((ds.points >= 0) & (ds.points <= math.pi))
    cell = np.floor(ds.points / (math.pi / 4)).astype(int)
    np.testing.assert_array_equal(ds.labels, np.where(cell.sum(axis=1) % 2 == 0, 1, -1))
    with pytest.raises(InputError):
        gen_checkerboard(15, grid=4)


def test_havlicek_gap_and_balance():
    ds = gen_havlicek(40, gap=0.3, seed=2)
    assert balanced(ds, 0)
    ev = havlicek_expectation(2, ds.points)
    assert np.all(np.abs(ev) >= 0.3)
    np.testing.assert_array_equal(np.sign(ev).astype(int), ds.labels)


def test_havlicek_learnable():
    ds = gen_havlicek(40, seed=5)
    K = kernel_matrix_exact(EmbeddingSpec(EmbeddingKind.IQP, 2), ds.points)
    m = solve_primal(K, ds.labels, 1000.0)
    assert accuracy(classify(m, K), ds.labels) >= 0.95


def test_havlicek_stall_raises():
    with pytest.raises(GenerationError, match="smaller gap"):
        gen_havlicek(40, gap=0.999, seed=0, max_candidates=2000)


def test_split_sizes_and_stratification():
    tr, te = make_train_test("moons", *PRESET_SIZES["moons"], seed=0)
    assert (len(tr), len(te)) == PRESET_SIZES["moons"]
    assert balanced(tr, 2) and balanced(te, 2)
    ds = gen_circles(10, seed=0)
    a, b = stratified_split(ds, 4, seed=1)
    assert len(a) == 6 and len(b) == 4
    with pytest.raises(InputError):
        stratified_split(ds, 0)


@pytest.mark.parametrize("name", sorted(PRESET_SIZES))
def test_preset_sizes(name):
    m, M = PRESET_SIZES[name]
    tr, te = make_train_test(name, m, M, seed=1)
    assert (len(tr), len(te)) == (m, M)


def test_csv_roundtrip(tmp_path):
    ds = gen_moons(10, seed=7)
    save_csv(ds, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv")
    assert np.array_equal(back.points, ds.points)
    assert np.array_equal(back.labels, ds.labels)
    assert (back.name, back.seed) == (ds.name, ds.seed)


def test_csv_bad_label(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,label\n0.1,0.2,1\n0.3,0.4,2\n")
    with pytest.raises(ParseError, match="line 3"):
        load_csv(p)


def test_csv_empty(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("")
    with pytest.raises(ParseError, match="line 1"):
        load_csv(p)


def test_csv_bad_field_count(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x1,x2,label\n0.1,1\n")
    with pytest.raises(ParseError, match="line 2"):
        load_csv(p)
