import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from magpann.errors import ContractViolation, InvalidDeformationError, SingularTensorError
from magpann.tensors import (
    DeformationState,
    axis_angle_rotation,
    cofactor,
    det,
    inv,
    isochoric_part,
    matrix_function,
    principal_stretches,
    random_rotations,
    rotation_from_angles,
    symmetric_eigen,
)

finite = st.floats(-2.0, 2.0, allow_nan=False, allow_infinity=False)
matrices = arrays(np.float64, (3, 3), elements=finite)
angles = st.floats(-10.0, 10.0, allow_nan=False)


def well_conditioned(A):
    return abs(np.linalg.det(A)) > 1e-3 * max(1.0, np.linalg.norm(A)) ** 3


# -- cofactor ---------------------------------------------------------------


def test_cofactor_identity():
    assert np.array_equal(cofactor(np.eye(3)), np.eye(3))


def test_cofactor_diagonal():
    np.testing.assert_allclose(cofactor(np.diag([2.0, 1.0, 1.0])), np.diag([1.0, 2.0, 2.0]), rtol=0, atol=1e-15)


def test_cofactor_singular_raises():
    with pytest.raises(SingularTensorError):
        cofactor(np.diag([1.0, 1.0, 0.0]))
    with pytest.raises(SingularTensorError):
        inv(np.zeros((3, 3)))


@given(matrices)
def test_cofactor_identity_property(A):
    if not well_conditioned(A):
        return
    d = det(A)
    scale = max(1.0, np.linalg.norm(A) ** 3)
    np.testing.assert_allclose(cofactor(A).T @ A, d * np.eye(3), atol=1e-10 * scale)
    np.testing.assert_allclose(cofactor(A) @ A.T, d * np.eye(3), atol=1e-10 * scale)


def test_det_matches_numpy(rng):
    A = rng.normal(size=(50, 3, 3))
    np.testing.assert_allclose(det(A), np.linalg.det(A), rtol=1e-12, atol=1e-14)


# -- symmetric eigenproblem --------------------------------------------------


def test_eigen_identity():
    w, V = symmetric_eigen(np.eye(3))
    np.testing.assert_allclose(w, [1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)


def test_eigen_diagonal():
    w, _ = symmetric_eigen(np.diag([0.25, 4.0, 1.0]))
    np.testing.assert_allclose(w, [4.0, 1.0, 0.25], rtol=1e-14)


def test_eigen_rejects_asymmetric():
    A = np.eye(3)
    A[0, 1] = 1e-3
    with pytest.raises(ContractViolation):
        symmetric_eigen(A)


def test_eigen_matches_singular_values(rng):
    F = rng.normal(size=(200, 3, 3))
    w, _ = symmetric_eigen(np.swapaxes(F, -1, -2) @ F)
    s = np.linalg.svd(F, compute_uv=False)
    np.testing.assert_allclose(w, s**2, rtol=1e-9, atol=1e-12 * np.max(s**2))


@given(arrays(np.float64, (3, 3), elements=finite), st.sampled_from([0, 1, 2]))
def test_eigen_post_conditions(X, degenerate):
    A = X + X.T
    if degenerate:
        # force (near) repeated eigenvalues through an exactly constructed spectrum
        Q = np.linalg.qr(X + 3 * np.eye(3))[0]
        lam = np.array([2.0, 2.0, -1.0]) if degenerate == 1 else np.array([1.0, 1.0 + 1e-9, 1.0])
        A = Q @ np.diag(lam) @ Q.T
        A = 0.5 * (A + A.T)
    w, V = symmetric_eigen(A)
    assert np.all(np.diff(w) <= 1e-12 * max(1.0, np.abs(w).max()))
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-10)
    scale = max(np.abs(w).max(), 1e-300)
    np.testing.assert_allclose(A @ V, V * w, atol=1e-9 * scale)


def test_matrix_function_log(rng):
    F = np.eye(3) + 0.2 * rng.normal(size=(3, 3))
    C = F.T @ F
    w, V = np.linalg.eigh(C)
    ref = V @ np.diag(np.log(w)) @ V.T
    np.testing.assert_allclose(matrix_function(C, np.log, lambda x: 1 / x), ref, atol=1e-12)


def test_principal_stretches():
    np.testing.assert_allclose(principal_stretches(np.diag([1.1, 0.9, 1.0])), [1.1, 1.0, 0.9], rtol=1e-14)


# -- isochoric part ------------------------------------------------------------


def test_isochoric_examples():
    np.testing.assert_allclose(isochoric_part(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(isochoric_part(2.0 * np.eye(3)), np.eye(3), atol=1e-15)
    Fi = isochoric_part(np.diag([1.1, 1.0, 1.0]))
    np.testing.assert_allclose(Fi, np.diag([1.1, 1.0, 1.0]) * 1.1 ** (-1 / 3), rtol=1e-15)
    assert abs(det(Fi) - 1.0) < 1e-12


def test_isochoric_rejects_inverted():
    with pytest.raises(InvalidDeformationError):
        isochoric_part(np.diag([1.0, 1.0, -1.0]))


@given(arrays(np.float64, (3, 3), elements=st.floats(-0.4, 0.4)))
def test_isochoric_idempotent_and_unimodular(X):
    F = np.eye(3) + X
    if det(F) < 0.05:
        return
    Fi = isochoric_part(F)
    assert abs(det(Fi) - 1.0) < 1e-12
    np.testing.assert_allclose(isochoric_part(Fi), Fi, atol=1e-12)


# -- rotations ---------------------------------------------------------------


def test_axis_angle_zero_is_identity():
    np.testing.assert_allclose(rotation_from_angles("axis-angle", (np.array([0, 0, 1.0]), 0.0)), np.eye(3))


def test_polar_zero_keeps_e3():
    Q = rotation_from_angles("polar-azimuth", (0.0, 1.234))
    np.testing.assert_allclose(Q @ [0, 0, 1.0], [0, 0, 1.0], atol=1e-15)


def test_axis_angle_quarter_turn():
    Q = rotation_from_angles("axis-angle", (np.array([0, 0, 1.0]), 0.5 * np.pi))
    np.testing.assert_allclose(Q @ [1.0, 0, 0], [0, 1.0, 0], atol=1e-15)


@given(angles, angles)
def test_polar_azimuth_maps_e3(p1, p2):
    Q = rotation_from_angles("polar-azimuth", (p1, p2))
    ref = [np.sin(p1) * np.cos(p2), np.sin(p1) * np.sin(p2), np.cos(p1)]
    np.testing.assert_allclose(Q @ [0, 0, 1.0], ref, atol=1e-14)


@given(st.sampled_from(["euler-two-axis", "polar-azimuth", "axis-angle"]), angles, angles, angles)
def test_rotations_are_proper_orthogonal(kind, a, b, c):
    if kind == "axis-angle":
        axis = np.array([np.cos(b) * np.sin(c), np.sin(b) * np.sin(c), np.cos(c)])
        Q = rotation_from_angles(kind, (axis, a))
    else:
        Q = rotation_from_angles(kind, (a, b))
    np.testing.assert_allclose(Q @ Q.T, np.eye(3), atol=1e-12)
    assert abs(det(Q) - 1.0) < 1e-12


def test_rotation_kind_unknown():
    with pytest.raises(ContractViolation):
        rotation_from_angles("quaternion", (0, 0))


def test_random_rotations(rng):
    Q = random_rotations(rng, 100)
    np.testing.assert_allclose(Q @ np.swapaxes(Q, -1, -2), np.broadcast_to(np.eye(3), Q.shape), atol=1e-12)
    np.testing.assert_allclose(det(Q), 1.0, atol=1e-12)


def test_axis_angle_batched():
    Q = axis_angle_rotation(np.array([1.0, 0, 0]), np.array([0.0, np.pi]))
    np.testing.assert_allclose(Q[1], np.diag([1.0, -1.0, -1.0]), atol=1e-15)


def test_deformation_state_validation():
    s = DeformationState.unloaded()
    assert np.array_equal(s.F, np.eye(3)) and np.array_equal(s.B, np.zeros(3))
    with pytest.raises(InvalidDeformationError):
        DeformationState(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ContractViolation):
        DeformationState(np.eye(2), np.zeros(3))
