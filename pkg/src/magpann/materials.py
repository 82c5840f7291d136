"""Closed-form magneto-elastic material laws and the derived field quantities.

The constituent laws (Ogden, Neo-Hooke, volumetric, Langevin, vacuum) are
point evaluators. ``OracleModel`` combines them into an exactly transversely
isotropic composite law that stands in for homogenized RVE responses when
generating training data.

Every energy model exposes ``evaluate(F, B) -> (psi, P, H)`` with
P = dpsi/dF and H = dpsi/dB, batched over leading axes. Models with
``complex_safe = True`` accept complex arguments, which is what
``second_derivatives`` uses for exact complex-step Hessians.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ContractViolation, InvalidDeformationError
from .invariants import invariants_and_derivatives
from .tensors import (
    IDENTITY,
    det,
    dyad,
    inv,
    inv_transpose,
    matrix_function,
    transpose,
)

MU0 = 4e-7 * np.pi
LN2 = np.log(2.0)


# ---------------------------------------------------------------------------
# parameter sets


@dataclass(frozen=True)
class OgdenParams:
    mu: tuple = (-11.80e3, 12.45e3, 4.59e-2)  # Pa
    alpha: tuple = (-6.68, 2.09, 18.34)
    kappa: float = 3.5e6  # Pa, nu = 0.495 with G = 52.4 kPa

    def __post_init__(self):
        if len(self.mu) != len(self.alpha):
            raise ContractViolation("Ogden needs as many moduli as exponents")
        if sum(m * a for m, a in zip(self.mu, self.alpha)) <= 0.0:
            raise ContractViolation("Ogden parameters give non-positive initial shear stiffness")
        if self.kappa <= 0.0:
            raise ContractViolation("bulk modulus must be positive")

    @property
    def shear_modulus(self) -> float:
        return 0.5 * sum(m * a for m, a in zip(self.mu, self.alpha))

    def scaled(self, factor: float) -> "OgdenParams":
        return OgdenParams(tuple(factor * m for m in self.mu), self.alpha, self.kappa)


@dataclass(frozen=True)
class LangevinParams:
    m_s: float  # A/m
    chi: float

    def __post_init__(self):
        if self.m_s <= 0.0 or self.chi <= 0.0:
            raise ContractViolation("Langevin needs m_s > 0 and chi > 0")


@dataclass(frozen=True)
class NeoHookeParams:
    G: float = 251.1e6
    kappa: float = 2 * 251.1e6 * 1.3 / (3 * 0.4)  # nu = 0.3

    def __post_init__(self):
        if self.G <= 0.0 or self.kappa <= 0.0:
            raise ContractViolation("Neo-Hooke needs G > 0 and kappa > 0")


PARTICLE_LANGEVIN = LangevinParams(m_s=1000e3, chi=0.9)


@dataclass(frozen=True)
class OracleParams:
    """Synthetic transversely isotropic composite.

    Ogden moduli are the matrix values scaled by 2.5. ``c7`` weights
    (I7iso - 1)^2 and ``c_shear`` weights I8iso - I7iso^2 = |(1 - S(x)S).Ciso.S|^2,
    a non-negative term that stiffens shear in planes containing S. The shear
    term is concave in I7iso, so a network convex in the invariants cannot
    represent it alone.
    """

    mu: tuple = (-29.50e3, 31.125e3, 0.11475)
    alpha: tuple = (-6.68, 2.09, 18.34)
    c7: float = 20e3
    c_shear: float = 80e3
    kappa: float = 5e6
    chi_iso: float = 0.25
    m_s1: float = 160e3
    chi_a: float = 0.08
    m_s2: float = 40e3
    S: tuple = (0.0, 0.0, 1.0)

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        if abs(np.linalg.norm(S) - 1.0) > 1e-12:
            raise ContractViolation("oracle preferred direction must be a unit vector")
        if min(self.kappa, self.chi_iso, self.m_s1, self.chi_a, self.m_s2) <= 0.0:
            raise ContractViolation("oracle moduli and magnetic parameters must be positive")
        if self.c7 < 0.0 or self.c_shear < 0.0:
            raise ContractViolation("oracle reinforcement coefficients must be non-negative")
        OgdenParams(self.mu, self.alpha, self.kappa)

    @property
    def m_s_mre(self) -> float:
        return self.m_s1 + self.m_s2

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.S, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu"] = list(self.mu)
        d["alpha"] = list(self.alpha)
        d["S"] = list(self.S)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OracleParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown oracle parameter(s): {sorted(unknown)}")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**kw)


# ---------------------------------------------------------------------------
# constituent energies


def _jacobian(F):
    J = det(F)
    if not np.iscomplexobj(J) and np.any(J <= 0.0):
        raise InvalidDeformationError("det(F) must be positive")
    return J


def _ogden_w(mu, alpha):
    mu = np.asarray(mu, dtype=float)
    alpha = np.asarray(alpha, dtype=float)

    def w(x):
        x = x[..., None]
        return np.sum(mu / alpha * (x ** (alpha / 2.0) - 1.0), axis=-1)

    def dw(x):
        x = x[..., None]
        return np.sum(0.5 * mu * x ** (alpha / 2.0 - 1.0), axis=-1)

    def d2w(x):
        x = x[..., None]
        return np.sum(0.5 * mu * (alpha / 2.0 - 1.0) * x ** (alpha / 2.0 - 2.0), axis=-1)

    return w, dw, d2w


def _ogden(F, mu, alpha, need_stress=True):
    J = _jacobian(F)
    j23 = J ** (-2.0 / 3.0)
    Ci = j23[..., None, None] * (transpose(F) @ F)
    w, dw, d2w = _ogden_w(mu, alpha)
    psi = np.trace(matrix_function(Ci, w, dw), axis1=-2, axis2=-1)
    if not need_stress:
        return psi, None
    Siso = matrix_function(Ci, dw, d2w)
    tr = np.sum(Siso * Ci, axis=(-2, -1))
    P = 2.0 * j23[..., None, None] * (F @ Siso) - (2.0 / 3.0) * tr[..., None, None] * inv_transpose(F)
    return psi, P


def ogden_iso_energy(F, p: OgdenParams = OgdenParams()):
    """sum_p mu_p/alpha_p (lam1^a_p + lam2^a_p + lam3^a_p - 3) over isochoric stretches."""
    return _ogden(np.asarray(F), p.mu, p.alpha, need_stress=False)[0]


def ogden_iso_stress(F, p: OgdenParams = OgdenParams()):
    return _ogden(np.asarray(F), p.mu, p.alpha)[1]


def neo_hooke_iso_energy(F, p: NeoHookeParams = NeoHookeParams()):
    F = np.asarray(F)
    J = _jacobian(F)
    trCi = J ** (-2.0 / 3.0) * np.sum(F * F, axis=(-2, -1))
    return 0.5 * p.G * (trCi - 3.0)


def volumetric_energy(J, kappa):
    """(kappa/4)(J^2 - 2 ln J - 1)."""
    J = np.asarray(J)
    if not np.iscomplexobj(J) and np.any(J <= 0.0):
        raise InvalidDeformationError("volumetric energy needs J > 0")
    return 0.25 * kappa * (J * J - 2.0 * np.log(J) - 1.0)


def volumetric_energy_derivative(J, kappa):
    return 0.5 * kappa * (J - 1.0 / J)


def vacuum_energy(F, B):
    """|F.B|^2 / (2 mu0 J)."""
    F = np.asarray(F)
    J = _jacobian(F)
    FB = np.einsum("...ij,...j->...i", F, B)
    return np.sum(FB * FB, axis=-1) / (2.0 * MU0 * J)


def langevin_energy_sq(s, p: LangevinParams):
    """Langevin energy and its derivative as functions of the squared effective induction s = l^2.

    psi = (mu0 m_s^2 / 3 chi) [ln x - ln sinh x],  x = 3 chi l / (mu0 m_s).
    Small arguments use the series of ln(x / sinh x) and L(x)/x in x^2, which
    also keeps the derivative finite at s = 0.
    """
    s = np.asarray(s)
    k = 3.0 * p.chi / (MU0 * p.m_s)
    A = MU0 * p.m_s**2 / (3.0 * p.chi)
    x2 = k * k * s
    small = np.abs(x2) < 1e-4  # |x| < 1e-2
    x2s = np.where(small, x2, 0.0)
    g_ser = -x2s / 6.0 + x2s**2 / 180.0 - x2s**3 / 2835.0
    lx_ser = 1.0 / 3.0 - x2s / 45.0 + 2.0 * x2s**2 / 945.0

    x = np.sqrt(np.where(small, 1.0, x2))
    one_m = -np.expm1(-2.0 * x)  # 1 - exp(-2x)
    g_big = np.log(x) - (x + np.log(one_m) - LN2)
    coth = 2.0 / one_m - 1.0
    lx_big = (coth - 1.0 / x) / x

    psi = A * np.where(small, g_ser, g_big)
    dpsi = -0.5 * p.m_s * k * np.where(small, lx_ser, lx_big)
    return psi, dpsi


def langevin_energy(ell, p: LangevinParams):
    """Langevin energy at effective induction magnitude ``ell`` (T)."""
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 0.0):
        raise ContractViolation("effective induction magnitude must be non-negative")
    return langevin_energy_sq(ell * ell, p)[0]


def langevin_magnetization(ell, p: LangevinParams):
    """m_s L(x), the magnetization magnitude conjugate to the Langevin energy."""
    ell = np.asarray(ell, dtype=float)
    _, dpsi = langevin_energy_sq(ell * ell, p)
    return -2.0 * ell * dpsi


# ---------------------------------------------------------------------------
# energy models


class VacuumModel:
    """Pure vacuum energy; m = 0 for every state."""

    complex_safe = True

    def evaluate(self, F, B):
        F = np.asarray(F)
        B = np.asarray(B)
        J = _jacobian(F)
        K = inv_transpose(F)
        C = transpose(F) @ F
        CB = np.einsum("...ij,...j->...i", C, B)
        psi = np.sum(B * CB, axis=-1) / (2.0 * MU0 * J)
        P = (F @ dyad(B, B)) / (MU0 * J[..., None, None]) - psi[..., None, None] * K
        H = CB / (MU0 * J[..., None])
        return psi, P, H


def _magnetic_terms(F, B, J, K, lang, S=None):
    """Langevin energy with l^2 = J^-1 B.C.B (or J^-1 I10iso along S) and its derivatives."""
    C = transpose(F) @ F
    if S is None:
        CB = np.einsum("...ij,...j->...i", C, B)
        s = np.sum(B * CB, axis=-1) / J
        ds_dF = 2.0 * (F @ dyad(B, B)) / J[..., None, None] - s[..., None, None] * K
        ds_dB = 2.0 * CB / J[..., None]
    else:
        I, jac = invariants_and_derivatives(F, B, S)
        s = I[..., 9] / J
        ds_dF = jac.dF[..., 9, :, :] / J[..., None, None] - s[..., None, None] * K
        ds_dB = jac.dB[..., 9, :] / J[..., None]
    psi, dpsi = langevin_energy_sq(s, lang)
    return psi, dpsi[..., None, None] * ds_dF, dpsi[..., None] * ds_dB


class OracleModel:
    """Composite ground truth: Ogden + reinforcement + volumetric + 2x Langevin + vacuum."""

    complex_safe = True

    def __init__(self, params: OracleParams = OracleParams()):
        self.params = params
        self.lang_iso = LangevinParams(params.m_s1, params.chi_iso)
        self.lang_par = LangevinParams(params.m_s2, params.chi_a)

    @property
    def direction(self):
        return self.params.direction

    def evaluate(self, F, B):
        p = self.params
        F = np.asarray(F)
        B = np.asarray(B)
        B = np.broadcast_to(B, F.shape[:-1])
        J = _jacobian(F)
        K = inv_transpose(F)
        S = p.direction

        psi, P = _ogden(F, p.mu, p.alpha)

        I, jac = invariants_and_derivatives(F, B, S)
        i7, i8 = I[..., 6], I[..., 7]
        d7, d8 = jac.dF[..., 6, :, :], jac.dF[..., 7, :, :]
        psi = psi + p.c7 * (i7 - 1.0) ** 2 + p.c_shear * (i8 - i7 * i7)
        P = P + (2.0 * p.c7 * (i7 - 1.0))[..., None, None] * d7
        P = P + p.c_shear * (d8 - 2.0 * i7[..., None, None] * d7)

        psi = psi + volumetric_energy(J, p.kappa)
        P = P + (volumetric_energy_derivative(J, p.kappa) * J)[..., None, None] * K

        vac_psi, vac_P, vac_H = VacuumModel().evaluate(F, B)
        m1, P1, H1 = _magnetic_terms(F, B, J, K, self.lang_iso)
        m2, P2, H2 = _magnetic_terms(F, B, J, K, self.lang_par, S)
        psi = psi + vac_psi + m1 + m2
        P = P + vac_P + P1 + P2
        H = vac_H + H1 + H2
        return psi, P, H


class ParticleModel:
    """Neo-Hooke + volumetric + Langevin + vacuum law of the magnetizable inclusions."""

    complex_safe = True

    def __init__(self, nh: NeoHookeParams = NeoHookeParams(), lang: LangevinParams = PARTICLE_LANGEVIN):
        self.nh = nh
        self.lang = lang

    def evaluate(self, F, B):
        F = np.asarray(F)
        B = np.broadcast_to(np.asarray(B), F.shape[:-1])
        J = _jacobian(F)
        K = inv_transpose(F)
        j23 = J ** (-2.0 / 3.0)
        psi = neo_hooke_iso_energy(F, self.nh) + volumetric_energy(J, self.nh.kappa)
        trC = np.sum(F * F, axis=(-2, -1))
        P = self.nh.G * (j23[..., None, None] * F - (trC * j23 / 3.0)[..., None, None] * K)
        P = P + (volumetric_energy_derivative(J, self.nh.kappa) * J)[..., None, None] * K
        vac_psi, vac_P, vac_H = VacuumModel().evaluate(F, B)
        mag, Pm, Hm = _magnetic_terms(F, B, J, K, self.lang)
        return psi + vac_psi + mag, P + vac_P + Pm, vac_H + Hm


def oracle_energy(F, B, p: OracleParams = OracleParams()):
    return OracleModel(p).evaluate(F, B)[0]


# ---------------------------------------------------------------------------
# field quantities


@dataclass
class FieldSet:
    """All magneto-mechanical quantities at a state (SI units)."""

    psi: np.ndarray
    P_tot: np.ndarray
    H: np.ndarray
    sigma_tot: np.ndarray
    b: np.ndarray
    h: np.ndarray
    m: np.ndarray
    sigma_pon: np.ndarray
    sigma: np.ndarray = field(repr=False)


def ponderomotive_stress(b, m):
    """(b(x)b - |b|^2/2 1)/mu0 + (b.m) 1 - m(x)b."""
    bb = np.sum(b * b, axis=-1)[..., None, None]
    bm = np.sum(b * m, axis=-1)[..., None, None]
    return (dyad(b, b) - 0.5 * bb * IDENTITY) / MU0 + bm * IDENTITY - dyad(m, b)


def fields_from_derivatives(F, B, psi, P, H):
    """Push the referential derivatives forward to the current configuration."""
    F = np.asarray(F)
    B = np.broadcast_to(np.asarray(B), F.shape[:-1])
    J = _jacobian(F)
    sigma_tot = (P @ transpose(F)) / J[..., None, None]
    b = np.einsum("...ij,...j->...i", F, B) / J[..., None]
    h = np.einsum("...ji,...j->...i", inv(F), H)  # h = H . F^-1
    m = b / MU0 - h
    sigma_pon = ponderomotive_stress(b, m)
    return FieldSet(psi, P, H, sigma_tot, b, h, m, sigma_pon, sigma_tot - sigma_pon)


def derived_fields(model, F, B) -> FieldSet:
    """Evaluate ``model`` and derive P_tot, H, sigma_tot, b, h, m, sigma_pon and sigma."""
    F = np.asarray(F, dtype=float)
    B = np.asarray(B, dtype=float)
    psi, P, H = model.evaluate(F, B)
    return fields_from_derivatives(F, B, psi, P, H)


def second_derivatives(model, F, B, step=None):
    """d2psi/dFdF as (..., 9, 9) (row-major flattening of F) and d2psi/dBdB as (..., 3, 3).

    Complex-safe models are differentiated by complex step through their analytic
    first derivatives, which is exact to rounding. Other models fall back to
    central differences of the first derivatives.
    """
    F = np.asarray(F, dtype=float)
    B = np.broadcast_to(np.asarray(B, dtype=float), F.shape[:-1])
    E9 = np.eye(9).reshape(9, 3, 3)
    E3 = np.eye(3)
    Fb = np.broadcast_to(F[..., None, :, :], F.shape[:-2] + (9, 3, 3))
    Bb9 = np.broadcast_to(B[..., None, :], B.shape[:-1] + (9, 3))
    Fb3 = np.broadcast_to(F[..., None, :, :], F.shape[:-2] + (3, 3, 3))
    Bb3 = np.broadcast_to(B[..., None, :], B.shape[:-1] + (3, 3))
    if getattr(model, "complex_safe", False):
        h = 1e-30 if step is None else step
        _, P, _ = model.evaluate(Fb + 1j * h * E9, Bb9.astype(complex))
        _, _, H = model.evaluate(Fb3.astype(complex), Bb3 + 1j * h * E3)
        dP = P.imag / h
        dH = H.imag / h
    else:
        hF = 1e-6 if step is None else step
        hB = hF * max(1.0, float(np.max(np.abs(B)))) if B.size else hF
        _, Pp, _ = model.evaluate(Fb + hF * E9, Bb9)
        _, Pm, _ = model.evaluate(Fb - hF * E9, Bb9)
        _, _, Hp = model.evaluate(Fb3, Bb3 + hB * E3)
        _, _, Hm = model.evaluate(Fb3, Bb3 - hB * E3)
        dP = (Pp - Pm) / (2 * hF)
        dH = (Hp - Hm) / (2 * hB)
    hess_F = dP.reshape(dP.shape[:-2] + (9,))
    hess_F = np.swapaxes(hess_F, -1, -2)
    hess_B = np.swapaxes(dH, -1, -2)
    return hess_F, hess_B
