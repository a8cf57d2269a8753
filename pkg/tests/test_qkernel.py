import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shofar.exceptions import InputError
from shofar.qkernel import (
    DepolarizingChannel,
    EmbeddingKind,
    EmbeddingSpec,
    angle_kernel_analytic,
    depolarize,
    embed,
    kernel_exact,
    kernel_matrix_exact,
    rx,
)

ANGLE2 = EmbeddingSpec(EmbeddingKind.ANGLE, 2)
IQP2 = EmbeddingSpec(EmbeddingKind.IQP, 2)
ALL_SPECS = [ANGLE2, IQP2, EmbeddingSpec(EmbeddingKind.IQP_THEN_ANGLE, 2),
             EmbeddingSpec(EmbeddingKind.ANGLE, 3)]

angles = st.floats(-2 * math.pi, 2 * math.pi, allow_nan=False)


def test_embed_angle_zero_is_ground_state():
    np.testing.assert_allclose(embed(ANGLE2, [0, 0]), [1, 0, 0, 0], atol=1e-15)


def test_embed_angle_pi_single_qubit():
    spec = EmbeddingSpec(EmbeddingKind.ANGLE, 1)
    np.testing.assert_allclose(embed(spec, [math.pi]), [0, -1j], atol=1e-15)


def test_embed_iqp_zero_is_uniform():
    np.testing.assert_allclose(embed(IQP2, [0, 0]), [0.5] * 4, atol=1e-15)


def test_rx_matches_pinned_convention():
    th = 0.7
    c, s = math.cos(th / 2), math.sin(th / 2)
    np.testing.assert_allclose(rx(th), [[c, -1j * s], [-1j * s, c]])


def test_embed_rejects_wrong_dimension():
    with pytest.raises(InputError):
        embed(ANGLE2, [0.1, 0.2, 0.3])


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.id)
def test_kernel_of_point_with_itself_is_one(spec):
    x = np.linspace(0.3, 1.1, spec.input_dim)
    assert kernel_exact(spec, x, x) == pytest.approx(1.0, abs=1e-12)


def test_angle_kernel_half():
    assert kernel_exact(ANGLE2, [0, 0], [math.pi / 2, 0]) == pytest.approx(0.5, abs=1e-12)


def test_angle_kernel_orthogonal():
    assert kernel_exact(ANGLE2, [0, 0], [math.pi, math.pi]) == pytest.approx(0.0, abs=1e-12)


def test_kernel_matrix_single_point():
    K = kernel_matrix_exact(IQP2, [[0.4, 1.2]])
    assert K.shape == (1, 1) and K[0, 0] == 1.0


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.id)
def test_kernel_matrix_symmetric_unit_diagonal(spec, rng):
    X = rng.uniform(0, math.pi, (7, spec.input_dim))
    K = kernel_matrix_exact(spec, X)
    assert np.array_equal(K, K.T)
    assert np.all(np.diag(K) == 1.0)


def test_kernel_matrix_matches_analytic_three_points():
    X = np.array([[0.1, 0.2], [1.0, 2.5], [3.0, 0.4]])
    np.testing.assert_allclose(kernel_matrix_exact(ANGLE2, X), angle_kernel_analytic(X, X), atol=1e-12)


def test_kernel_matrix_rectangular(rng):
    X, X2 = rng.uniform(0, 3, (4, 2)), rng.uniform(0, 3, (6, 2))
    K = kernel_matrix_exact(IQP2, X, X2)
    assert K.shape == (4, 6)
    assert K[2, 5] == pytest.approx(kernel_exact(IQP2, X[2], X2[5]), abs=1e-12)


def test_kernel_matrix_empty_rejected():
    with pytest.raises(InputError):
        kernel_matrix_exact(ANGLE2, np.zeros((0, 2)))


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.id)
def test_kernel_matrix_psd(spec, rng):
    X = rng.uniform(0, 2 * math.pi, (50, spec.input_dim))
    assert np.linalg.eigvalsh(kernel_matrix_exact(spec, X)).min() >= -1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(angles, min_size=6, max_size=6))
def test_normalization_symmetry_range(v):
    for spec in ALL_SPECS[:3]:
        x, x2 = v[:2], v[2:4]
        assert np.linalg.norm(embed(spec, x)) == pytest.approx(1.0, abs=1e-12)
        k = kernel_exact(spec, x, x2)
        assert k == kernel_exact(spec, x2, x)
        assert 0.0 <= k <= 1.0


def test_angle_oracle_on_random_pairs(rng):
    X, X2 = rng.uniform(-4, 4, (1000, 2)), rng.uniform(-4, 4, (1000, 2))
    got = np.array([kernel_exact(ANGLE2, a, b) for a, b in zip(X, X2)])
    ref = np.prod(np.cos((X - X2) / 2) ** 2, axis=1)
    assert np.max(np.abs(got - ref)) < 1e-10


def test_depolarize_examples():
    ch0 = DepolarizingChannel(0.0, 4)
    ch = DepolarizingChannel(0.05, 4)
    assert depolarize(1.0, ch0) == 1.0
    assert depolarize(1.0, ch) == pytest.approx(0.998125, abs=1e-15)
    assert depolarize(0.0, ch) == pytest.approx(0.000625, abs=1e-15)


def test_depolarize_matrix_and_domain():
    ch = DepolarizingChannel(0.3, 8)
    K = np.array([[1.0, 0.2], [0.2, 1.0]])
    np.testing.assert_allclose(depolarize(K, ch), (1 - 0.09) * K + 0.09 / 8)
    with pytest.raises(InputError):
        depolarize(1.2, ch)


def test_channel_validation():
    with pytest.raises(InputError):
        DepolarizingChannel(1.5, 4)
    with pytest.raises(InputError):
        DepolarizingChannel(0.1, 3)
    assert DepolarizingChannel.for_spec(0.05, IQP2).d == 4


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_depolarize_order_preserving(k1, k2, lam):
    ch = DepolarizingChannel(lam, 4)
    lo, hi = sorted((k1, k2))
    assert depolarize(lo, ch) <= depolarize(hi, ch) + 1e-15


def test_spec_parsing_and_limits():
    assert EmbeddingKind.parse("iqp+angle") is EmbeddingKind.IQP_THEN_ANGLE
    assert ANGLE2.id == "angle-2q"
    assert IQP2.dim == 4
    with pytest.raises(InputError):
        EmbeddingSpec(EmbeddingKind.ANGLE, 11)
    with pytest.raises(InputError):
        EmbeddingKind.parse("amplitude")
