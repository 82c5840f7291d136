"""Dense 3-vector / 3x3-tensor algebra and kinematic constructions.

All routines are batched over leading axes: a tensor argument has shape
``(..., 3, 3)`` and a vector ``(..., 3)``. Coordinates are row-major, i.e.
``F[..., i, j]`` is F_ij, and ``A @ B`` is the single contraction A.B.

``det``, ``inv``, ``cofactor``, ``isochoric_part`` and ``matrix_function``
accept complex arrays so that complex-step differentiation can be pushed
through every constitutive evaluation in the package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, InvalidDeformationError, SingularTensorError

SINGULAR_TOL = 1e-14

IDENTITY = np.eye(3)

# Levi-Civita symbol e_ijk
LEVI_CIVITA = np.zeros((3, 3, 3))
for _i, _j, _k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
    LEVI_CIVITA[_i, _j, _k] = 1.0
    LEVI_CIVITA[_i, _k, _j] = -1.0


@dataclass(frozen=True)
class DeformationState:
    """Deformation gradient ``F`` (dimensionless) and referential induction ``B`` (T)."""

    F: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if F.shape[-2:] != (3, 3) or B.shape[-1] != 3:
            raise ContractViolation("F must be (...,3,3) and B (...,3)")
        if np.any(det(F) <= 0.0):
            raise InvalidDeformationError("det(F) must be positive")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "B", B)

    @classmethod
    def unloaded(cls) -> "DeformationState":
        return cls(np.eye(3), np.zeros(3))


def transpose(A):
    return np.swapaxes(A, -1, -2)


def det(A):
    A = np.asarray(A)
    return (
        A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
        - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
        + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0])
    )


def _cofactor_unchecked(A):
    A = np.asarray(A)
    C = np.empty(A.shape, dtype=A.dtype)
    C[..., 0, 0] = A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1]
    C[..., 0, 1] = A[..., 1, 2] * A[..., 2, 0] - A[..., 1, 0] * A[..., 2, 2]
    C[..., 0, 2] = A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0]
    C[..., 1, 0] = A[..., 0, 2] * A[..., 2, 1] - A[..., 0, 1] * A[..., 2, 2]
    C[..., 1, 1] = A[..., 0, 0] * A[..., 2, 2] - A[..., 0, 2] * A[..., 2, 0]
    C[..., 1, 2] = A[..., 0, 1] * A[..., 2, 0] - A[..., 0, 0] * A[..., 2, 1]
    C[..., 2, 0] = A[..., 0, 1] * A[..., 1, 2] - A[..., 0, 2] * A[..., 1, 1]
    C[..., 2, 1] = A[..., 0, 2] * A[..., 1, 0] - A[..., 0, 0] * A[..., 1, 2]
    C[..., 2, 2] = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    return C


def _check_regular(d):
    if np.any(np.abs(d) < SINGULAR_TOL):
        raise SingularTensorError("tensor is singular (|det| < 1e-14)")


def cofactor(A):
    """cof(A) = det(A) A^-T."""
    _check_regular(det(A))
    return _cofactor_unchecked(A)


def inv(A):
    d = det(A)
    _check_regular(d)
    return transpose(_cofactor_unchecked(A)) / d[..., None, None]


def inv_transpose(A):
    d = det(A)
    _check_regular(d)
    return _cofactor_unchecked(A) / d[..., None, None]


def dyad(a, b):
    return np.asarray(a)[..., :, None] * np.asarray(b)[..., None, :]


def dot(a, b):
    """Single contraction of two vectors without complex conjugation."""
    return np.sum(np.asarray(a) * np.asarray(b), axis=-1)


def ddot(A, B):
    """A : B = A_ij B_ij for the symmetric arguments used here (no conjugation)."""
    return np.sum(np.asarray(A) * np.asarray(B), axis=(-2, -1))


def frobenius_sq(A):
    return ddot(A, A)


def right_cauchy_green(F):
    return transpose(F) @ F


def isochoric_part(F):
    """F_iso = det(F)^(-1/3) F."""
    F = np.asarray(F)
    J = det(F)
    if not np.iscomplexobj(J) and np.any(J <= 0.0):
        raise InvalidDeformationError("isochoric part needs det(F) > 0")
    return J[..., None, None] ** (-1.0 / 3.0) * F


# ---------------------------------------------------------------------------
# Symmetric eigenproblem


def symmetric_eigen(A, check=True):
    """Eigenvalues (descending) and orthonormal eigenvectors of symmetric 3x3 tensors.

    Closed-form trigonometric eigenvalues; the eigenvector of the best-separated
    eigenvalue is taken from cross products of the rows of A - lam*1, and the
    remaining pair is obtained by deflation to an exactly solved 2x2 problem.
    Eigenvectors are returned as columns: ``A @ V[..., :, k] = w[..., k] V[..., :, k]``.
    """
    A = np.asarray(A, dtype=float)
    if A.shape[-2:] != (3, 3):
        raise ContractViolation("symmetric_eigen expects (...,3,3)")
    if check:
        skew = np.sqrt(frobenius_sq(A - transpose(A)))
        if np.any(skew >= 1e-10 * np.maximum(np.sqrt(frobenius_sq(A)), 1e-300)):
            raise ContractViolation("symmetric_eigen needs a symmetric tensor")
    batch = A.shape[:-2]
    M = 0.5 * (A + transpose(A)).reshape(-1, 3, 3)
    n = M.shape[0]

    scale = np.max(np.abs(M), axis=(1, 2))
    scale = np.where(scale > 0.0, scale, 1.0)
    M = M / scale[:, None, None]

    q = np.trace(M, axis1=1, axis2=2) / 3.0
    Bm = M - q[:, None, None] * IDENTITY
    p = np.sqrt(np.sum(Bm * Bm, axis=(1, 2)) / 6.0)
    spherical = p < 1e-15
    p_safe = np.where(spherical, 1.0, p)
    r = np.clip(det(Bm / p_safe[:, None, None]) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    e1 = q + 2.0 * p * np.cos(phi)
    e3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e2 = 3.0 * q - e1 - e3

    use_top = (e1 - e2) >= (e2 - e3)
    lam = np.where(use_top, e1, e3)
    R = M - lam[:, None, None] * IDENTITY
    crosses = np.stack(
        [np.cross(R[:, 0], R[:, 1]), np.cross(R[:, 0], R[:, 2]), np.cross(R[:, 1], R[:, 2])],
        axis=1,
    )
    norms = np.linalg.norm(crosses, axis=2)
    best = np.argmax(norms, axis=1)
    v = crosses[np.arange(n), best]
    vn = norms[np.arange(n), best]
    ok = vn > 1e-300
    v = np.where(ok[:, None], v / np.where(ok, vn, 1.0)[:, None], np.array([1.0, 0.0, 0.0]))

    # orthonormal complement of v
    k = np.argmin(np.abs(v), axis=1)
    ek = np.eye(3)[k]
    u = np.cross(v, ek)
    u /= np.linalg.norm(u, axis=1)[:, None]
    w = np.cross(v, u)

    Mu = np.einsum("nij,nj->ni", M, u)
    Mw = np.einsum("nij,nj->ni", M, w)
    a = np.einsum("ni,ni->n", u, Mu)
    b = np.einsum("ni,ni->n", u, Mw)
    c = np.einsum("ni,ni->n", w, Mw)
    mean = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    theta = 0.5 * np.arctan2(2.0 * b, a - c)
    ct, st = np.cos(theta), np.sin(theta)
    x_hi = ct[:, None] * u + st[:, None] * w
    x_lo = -st[:, None] * u + ct[:, None] * w
    lam_v = np.einsum("ni,nij,nj->n", v, M, v)

    vals = np.stack([lam_v, mean + rad, mean - rad], axis=1)
    vecs = np.stack([v, x_hi, x_lo], axis=2)
    vals = np.where(spherical[:, None], q[:, None], vals)
    vecs = np.where(spherical[:, None, None], IDENTITY, vecs)

    order = np.argsort(-vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1) * scale[:, None]
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)
    return vals.reshape(batch + (3,)), vecs.reshape(batch + (3, 3))


def matrix_function(A, f, df, degenerate_tol=1e-7):
    """Isotropic tensor function f(A) = sum_a f(lam_a) v_a (x) v_a of a symmetric tensor.

    For a complex argument the imaginary part is treated as an infinitesimal
    (complex-step) perturbation and propagated with the Daleckii-Krein
    divided-difference formula, using ``df`` where eigenvalues coincide.
    """
    A = np.asarray(A)
    Ar = A.real
    vals, V = symmetric_eigen(Ar, check=False)
    fv = f(vals)
    out = np.einsum("...ia,...a,...ja->...ij", V, fv, V)
    if not np.iscomplexobj(A):
        return out
    E = transpose(V) @ A.imag @ V
    la = vals[..., :, None]
    lb = vals[..., None, :]
    gap = la - lb
    close = np.abs(gap) <= degenerate_tol * np.maximum(1.0, np.abs(la))
    safe_gap = np.where(close, 1.0, gap)
    dd = np.where(close, df(0.5 * (la + lb)), (fv[..., :, None] - fv[..., None, :]) / safe_gap)
    return out + 1j * (V @ (dd * E) @ transpose(V))


def principal_stretches(F):
    """Principal stretches (descending) = square roots of the eigenvalues of C."""
    vals, _ = symmetric_eigen(right_cauchy_green(np.asarray(F, dtype=float)), check=False)
    return np.sqrt(np.clip(vals, 0.0, None))


# ---------------------------------------------------------------------------
# Rotations


def axis_angle_rotation(axis, alpha):
    """Q(alpha) = cos(alpha) 1 + (1 - cos(alpha)) a (x) a - sin(alpha) e.a."""
    a = np.asarray(axis, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    c = np.cos(alpha)[..., None, None]
    s = np.sin(alpha)[..., None, None]
    eps_a = np.einsum("ijk,...k->...ij", LEVI_CIVITA, a)
    return c * IDENTITY + (1.0 - c) * dyad(a, a) - s * eps_a


_E1 = np.array([1.0, 0.0, 0.0])
_E2 = np.array([0.0, 1.0, 0.0])
_E3 = np.array([0.0, 0.0, 1.0])


def rotation_from_angles(kind, angles):
    """Rotation tensor from an angle parametrization.

    kind = "euler-two-axis": angles (theta1, theta2), rotation about e1 by
        theta1 followed by rotation about e2 by theta2 (both axes normal to e3).
    kind = "polar-azimuth": angles (phi1, phi2); maps e3 onto
        (sin phi1 cos phi2, sin phi1 sin phi2, cos phi1).
    kind = "axis-angle": angles (axis, alpha) with a unit axis vector.
    """
    if kind == "euler-two-axis":
        t1, t2 = angles
        return axis_angle_rotation(_E2, t2) @ axis_angle_rotation(_E1, t1)
    if kind == "polar-azimuth":
        p1, p2 = angles
        return axis_angle_rotation(_E3, p2) @ axis_angle_rotation(_E2, p1)
    if kind == "axis-angle":
        axis, alpha = angles
        return axis_angle_rotation(axis, alpha)
    raise ContractViolation(f"unknown rotation kind {kind!r}")


def random_rotations(rng, n):
    """Uniformly distributed rotations (via unit quaternions)."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1)[:, None]
    w, x, y, z = q.T
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=1,
    )
