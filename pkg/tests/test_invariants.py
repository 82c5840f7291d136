import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_B, random_F, random_unit
from magpann.errors import ContractViolation, InvalidDeformationError
from magpann.invariants import (
    InvariantCache,
    compute_invariants,
    invariant_derivatives,
    invariants_and_derivatives,
)
from magpann.tensors import axis_angle_rotation, random_rotations

E3 = np.array([0.0, 0.0, 1.0])
small = arrays(np.float64, (3, 3), elements=st.floats(-0.3, 0.3))
field = arrays(np.float64, (3,), elements=st.floats(-3.0, 3.0))
unit = arrays(np.float64, (3,), elements=st.floats(-1.0, 1.0)).filter(lambda v: np.linalg.norm(v) > 0.1)


def test_reference_state():
    I = compute_invariants(np.eye(3), np.zeros(3), E3)
    np.testing.assert_allclose(I, [3, 3, 1, 0, 0, 0, 1, 1, 0, 0], atol=1e-15)


def test_plane_strain_example():
    F = np.diag([1.04, 1.0, 1 / 1.04])
    I = compute_invariants(F, np.zeros(3), E3)
    assert I[0] == pytest.approx(3.006156, abs=5e-7)
    assert I[6] == pytest.approx(0.924556, abs=5e-7)
    assert I[7] == pytest.approx(0.854804, abs=5e-7)
    assert I[2] == pytest.approx(1.0, abs=1e-14)


def test_unit_field_along_direction():
    I = compute_invariants(np.eye(3), np.array([0.0, 0.0, 1.0]), E3)
    np.testing.assert_allclose(I[3:6], [1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(I[8:10], [1, 1], atol=1e-15)


def test_simple_derivative_examples():
    jac = invariant_derivatives(np.eye(3), np.array([0.0, 0.0, 1.0]), E3)
    np.testing.assert_allclose(jac.dB[3], [0, 0, 2], atol=1e-15)
    np.testing.assert_allclose(jac.dF[2], 2 * np.eye(3), atol=1e-15)


def test_structural_zeros(rng):
    F, B, S = random_F(rng), random_B(rng), random_unit(rng)
    jac = invariant_derivatives(F, B, S)
    for l in (0, 1, 2, 6, 7):
        assert np.all(jac.dB[l] == 0.0)
    assert np.all(jac.dF[3] == 0.0)


def test_derivatives_vs_finite_differences(rng):
    h = 1e-6
    for _ in range(5):
        F, B, S = random_F(rng), random_B(rng), random_unit(rng)
        _, jac = invariants_and_derivatives(F, B, S)
        for i in range(3):
            for j in range(3):
                E = np.zeros((3, 3))
                E[i, j] = h
                fd = (compute_invariants(F + E, B, S) - compute_invariants(F - E, B, S)) / (2 * h)
                np.testing.assert_allclose(jac.dF[:, i, j], fd, rtol=1e-6, atol=1e-6 * np.abs(jac.dF).max())
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            fd = (compute_invariants(F, B + e, S) - compute_invariants(F, B - e, S)) / (2 * h)
            np.testing.assert_allclose(jac.dB[:, k], fd, rtol=1e-6, atol=1e-6 * np.abs(jac.dB).max())


def test_domain_errors():
    with pytest.raises(ContractViolation):
        compute_invariants(np.eye(3), np.zeros(3), np.array([0, 0, 2.0]))
    with pytest.raises(InvalidDeformationError):
        compute_invariants(np.diag([1.0, 1.0, -1.0]), np.zeros(3), E3)


def test_sign_and_ordering(rng):
    F, B = random_F(rng, 200), random_B(rng, 200)
    I = compute_invariants(F, B, random_unit(rng))
    assert np.all(I[:, 2] > 0) and np.all(I[:, 3] >= 0) and np.all(I[:, 8] >= 0) and np.all(I[:, 9] >= 0)
    assert np.all(I[:, 3] >= I[:, 8] - 1e-12 * I[:, 3])


def test_objectivity_100_rotations(rng):
    F, B, S = random_F(rng), random_B(rng), random_unit(rng)
    I0 = compute_invariants(F, B, S)
    Q = random_rotations(rng, 100)
    np.testing.assert_allclose(compute_invariants(Q @ F, B, S), np.broadcast_to(I0, (100, 10)), rtol=1e-10, atol=1e-12)


@given(small, field, unit, st.floats(-np.pi, np.pi))
def test_transverse_isotropy(X, B, S, alpha):
    F = np.eye(3) + X
    if np.linalg.det(F) < 0.1:
        return
    S = S / np.linalg.norm(S)
    Q = axis_angle_rotation(S, alpha)
    np.testing.assert_allclose(
        compute_invariants(F @ Q.T, Q @ B, S), compute_invariants(F, B, S), rtol=1e-10, atol=1e-12
    )


@given(small, field, unit)
def test_time_reversal(X, B, S):
    F = np.eye(3) + X
    if np.linalg.det(F) < 0.1:
        return
    S = S / np.linalg.norm(S)
    np.testing.assert_array_equal(compute_invariants(F, -B, S), compute_invariants(F, B, S))


@given(small, field, unit, st.floats(0.2, 5.0))
def test_iso_invariants_ignore_dilation(X, B, S, c):
    F = np.eye(3) + X
    if np.linalg.det(F) < 0.1:
        return
    S = S / np.linalg.norm(S)
    iso = [0, 1, 4, 5, 6, 7, 9]
    np.testing.assert_allclose(
        compute_invariants(c * F, B, S)[iso], compute_invariants(F, B, S)[iso], rtol=1e-10, atol=1e-12
    )


def test_cache_matches_direct(rng):
    F, B = random_F(rng, 7), random_B(rng, 7)
    cache = InvariantCache(F, B)
    for _ in range(3):
        S = random_unit(rng)
        I, jac = cache.evaluate(S)
        I2, jac2 = invariants_and_derivatives(F, B, S)
        np.testing.assert_array_equal(I, I2)
        np.testing.assert_array_equal(jac.dF, jac2.dF)
        np.testing.assert_array_equal(jac.dB, jac2.dB)
