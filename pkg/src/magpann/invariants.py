"""Transversely isotropic magneto-elastic invariants and their exact derivatives.

The ten invariants, in storage order::

    0  I1iso  = tr Ciso                      5  I6iso  = B . Ciso^2 . B
    1  I2iso  = (tr^2 Ciso - tr Ciso^2) / 2  6  I7iso  = S . Ciso . S
    2  I3     = J^2                          7  I8iso  = S . Ciso^2 . S
    3  I4     = B . B                        8  I9     = (S . B)^2
    4  I5iso  = B . Ciso . B                 9  I10iso = (S . Ciso . B)^2

with C = F^T F, J = det F and Ciso = J^(-2/3) C. B enters only
quadratically, so every invariant is even in B.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import ContractViolation, InvalidDeformationError
from .tensors import det, inv_transpose, transpose

NAMES = ("I1iso", "I2iso", "I3", "I4", "I5iso", "I6iso", "I7iso", "I8iso", "I9", "I10iso")
# positions of the purely mechanical invariants (elastic network input)
ELASTIC = (0, 1, 2, 6, 7)
I3, I7, I8 = 2, 6, 7
REFERENCE = np.array([3.0, 3.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0])


class InvariantJacobian(NamedTuple):
    dF: np.ndarray  # (..., 10, 3, 3)
    dB: np.ndarray  # (..., 10, 3)


def _prepare(F, B, S):
    F = np.asarray(F)
    B = np.asarray(B)
    S = np.asarray(S)
    if F.shape[-2:] != (3, 3) or B.shape[-1] != 3 or S.shape[-1] != 3:
        raise ContractViolation("expected F (...,3,3), B (...,3), S (...,3)")
    if not np.iscomplexobj(S):
        if np.any(np.abs(np.sum(S * S, axis=-1) - 1.0) > 1e-10):
            raise ContractViolation("preferred direction S must be a unit vector")
    J = det(F)
    if not np.iscomplexobj(J) and np.any(J <= 0.0):
        raise InvalidDeformationError("invariants need det(F) > 0")
    return F, B, S, J


def _mv(A, v):
    return np.einsum("...ij,...j->...i", A, v)


def _vdot(a, b):
    return np.sum(a * b, axis=-1)


def _outer(a, b):
    return a[..., :, None] * b[..., None, :]


def _unit_quadratic(S, CS):
    """S.C S written as 1 + S.(C S - S), equal for unit S and exactly 1 when C = 1."""
    return 1.0 + _vdot(S, CS - S)


def _unit_quartic(S, CS):
    """|C S|^2 as 1 + (C S - S).(C S + S), exactly 1 when C = 1."""
    return 1.0 + _vdot(CS - S, CS + S)


class InvariantCache:
    """Direction-independent part of the invariants at fixed (F, B).

    I1..I6 and their derivatives do not involve S; they are computed once so
    that re-evaluating the basis for a new preferred direction only costs the
    four direction-dependent invariants.
    """

    def __init__(self, F, B):
        F = np.asarray(F)
        B = np.asarray(B)
        if F.shape[-2:] != (3, 3) or B.shape[-1] != 3:
            raise ContractViolation("expected F (...,3,3) and B (...,3)")
        J = det(F)
        if not np.iscomplexobj(J) and np.any(J <= 0.0):
            raise InvalidDeformationError("invariants need det(F) > 0")
        shape = np.broadcast_shapes(F.shape[:-2], B.shape[:-1])
        F = np.broadcast_to(F, shape + (3, 3))
        B = np.broadcast_to(B, shape + (3,))
        J = np.broadcast_to(J, shape)
        self.F, self.B, self.J, self.shape = F, B, J, shape
        self.K = inv_transpose(F)
        self.C = transpose(F) @ F
        self.j23 = (J ** (-2.0 / 3.0))[..., None, None]
        self.Ci = self.j23 * self.C
        self.CiB = _mv(self.Ci, B)
        self.CB = _mv(self.C, B)
        Ci, CiB, C = self.Ci, self.CiB, self.C
        tr = np.trace(Ci, axis1=-2, axis2=-1)
        tr2 = np.sum(Ci * transpose(Ci), axis=(-2, -1))
        trC = np.trace(C, axis1=-2, axis2=-1)[..., None, None]
        base = [
            tr,
            0.5 * (tr * tr - tr2),
            J * J,
            _vdot(B, B),
            _vdot(B, CiB),
            _vdot(CiB, CiB),
        ]
        self.I_base = np.stack(base, axis=-1)
        eye = np.broadcast_to(np.eye(3), shape + (3, 3))
        self.dF_base = np.stack(
            [
                self._iso(base[0], 1, eye),
                self._iso(base[1], 2, trC * np.eye(3) - C),
                2.0 * base[2][..., None, None] * self.K,
                np.zeros(shape + (3, 3), dtype=np.result_type(F, B)),
                self._iso(base[4], 1, _outer(B, B)),
                self._iso(base[5], 2, _outer(self.CB, B) + _outer(B, self.CB)),
            ],
            axis=-3,
        )
        zv = np.zeros(shape + (3,), dtype=self.dF_base.dtype)
        self.dB_base = np.stack([zv, zv, zv, 2.0 * B, 2.0 * CiB, 2.0 * _mv(Ci, CiB)], axis=-2)

    def _iso(self, f, k, dg):
        # derivative of f = J^(-2k/3) g(C) with g homogeneous of degree k in C
        jk = self.j23 if k == 1 else self.j23 * self.j23
        return 2.0 * jk * (self.F @ dg) - (2.0 * k / 3.0) * f[..., None, None] * self.K

    def directional(self, S):
        S = np.asarray(S)
        if S.shape[-1] != 3:
            raise ContractViolation("S must have 3 components")
        if not np.iscomplexobj(S):
            if np.any(np.abs(np.sum(S * S, axis=-1) - 1.0) > 1e-10):
                raise ContractViolation("preferred direction S must be a unit vector")
        shape = self.shape
        S = np.broadcast_to(S, shape + (3,))
        Ci, B = self.Ci, self.B
        CiS = _mv(Ci, S)
        CS = _mv(self.C, S)
        SB = _vdot(S, B)
        SCB = _vdot(S, self.CiB)
        I = np.stack([_unit_quadratic(S, CiS), _unit_quartic(S, CiS), SB * SB, SCB * SCB], axis=-1)
        dF = np.stack(
            [
                self._iso(I[..., 0], 1, _outer(S, S)),
                self._iso(I[..., 1], 2, _outer(CS, S) + _outer(S, CS)),
                np.zeros(shape + (3, 3), dtype=np.result_type(self.F, S)),
                2.0 * SCB[..., None, None] * self._iso(SCB, 1, 0.5 * (_outer(S, B) + _outer(B, S))),
            ],
            axis=-3,
        )
        zv = np.zeros(shape + (3,), dtype=dF.dtype)
        dB = np.stack([zv, zv, 2.0 * SB[..., None] * S, 2.0 * SCB[..., None] * CiS], axis=-2)
        return I, dF, dB

    def evaluate(self, S):
        """Full invariant vector (..., 10) and Jacobians for direction S."""
        I_s, dF_s, dB_s = self.directional(S)
        I = np.concatenate([self.I_base.astype(I_s.dtype, copy=False), I_s], axis=-1)
        dF = np.concatenate([self.dF_base.astype(dF_s.dtype, copy=False), dF_s], axis=-3)
        dB = np.concatenate([self.dB_base.astype(dB_s.dtype, copy=False), dB_s], axis=-2)
        return I, InvariantJacobian(dF, dB)


def compute_invariants(F, B, S):
    """The invariant vector (..., 10) for deformation F, induction B and unit direction S."""
    F, B, S, J = _prepare(F, B, S)
    Ci = (J ** (-2.0 / 3.0))[..., None, None] * (transpose(F) @ F)
    CiB = _mv(Ci, B)
    CiS = _mv(Ci, S)
    tr = np.trace(Ci, axis1=-2, axis2=-1)
    tr2 = np.sum(Ci * transpose(Ci), axis=(-2, -1))
    SB = _vdot(S, B)
    SCB = _vdot(S, CiB)
    one = np.ones_like(J)
    return np.stack(
        [
            tr,
            0.5 * (tr * tr - tr2),
            J * J,
            _vdot(B, B) * one,
            _vdot(B, CiB),
            _vdot(CiB, CiB),
            _unit_quadratic(S, CiS) * one,
            _unit_quartic(S, CiS),
            SB * SB * one,
            SCB * SCB,
        ],
        axis=-1,
    )


def invariants_and_derivatives(F, B, S):
    """Invariants together with their derivatives with respect to F and B.

    Every invariant has the form f = J^(-2k/3) g(C) with g homogeneous of degree
    k in C, hence df/dF = 2 J^(-2k/3) F . dg/dC - (2k/3) f F^-T.
    """
    F, B, S, J = _prepare(F, B, S)
    return InvariantCache(F, B).evaluate(S)


def invariant_derivatives(F, B, S):
    return invariants_and_derivatives(F, B, S)[1]
