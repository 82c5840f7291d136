import mpmath
import numpy as np
import pytest

from conftest import fd_first, fd_second, random_B, random_F, rel_err
from magpann.errors import ContractViolation, InvalidDeformationError
from magpann.materials import (
    MU0,
    LangevinParams,
    NeoHookeParams,
    OgdenParams,
    OracleModel,
    OracleParams,
    ParticleModel,
    VacuumModel,
    derived_fields,
    langevin_energy,
    langevin_magnetization,
    neo_hooke_iso_energy,
    ogden_iso_energy,
    ogden_iso_stress,
    oracle_energy,
    second_derivatives,
    vacuum_energy,
    volumetric_energy,
)
from magpann.tensors import random_rotations

MATRIX = OgdenParams()
ORACLE = OracleParams()


def langevin_reference(ell, m_s, chi):
    """High-precision ln(x) - ln(sinh x) form."""
    mpmath.mp.dps = 40
    x = mpmath.mpf(3 * chi) / (mpmath.mpf(MU0) * m_s) * ell
    return float(mpmath.mpf(MU0) * m_s**2 / (3 * chi) * (mpmath.log(x) - mpmath.log(mpmath.sinh(x))))


# -- Ogden ---------------------------------------------------------------------


def test_matrix_parameters():
    assert MATRIX.mu == (-11.80e3, 12.45e3, 4.59e-2)
    assert MATRIX.alpha == (-6.68, 2.09, 18.34)
    assert MATRIX.shear_modulus > 0


def test_ogden_zero_at_identity_and_dilation():
    assert ogden_iso_energy(np.eye(3), MATRIX) == pytest.approx(0.0, abs=1e-10)
    assert ogden_iso_energy(1.3 * np.eye(3), MATRIX) == pytest.approx(0.0, abs=1e-9)


def test_ogden_plane_strain_value():
    lam = np.array([1.04, 1.0, 1 / 1.04])
    expected = sum(m / a * (np.sum(lam**a) - 3.0) for m, a in zip(MATRIX.mu, MATRIX.alpha))
    assert ogden_iso_energy(np.diag(lam), MATRIX) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(161.9975, rel=1e-6)


def test_ogden_stress_vs_finite_differences(rng):
    F = random_F(rng)
    P = ogden_iso_stress(F, MATRIX)
    h = 1e-6
    fd = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            E = np.zeros((3, 3))
            E[i, j] = h
            fd[i, j] = (ogden_iso_energy(F + E, MATRIX) - ogden_iso_energy(F - E, MATRIX)) / (2 * h)
    assert rel_err(P, fd) < 1e-6


def test_ogden_invalid_parameters():
    with pytest.raises(ContractViolation):
        OgdenParams(mu=(-1.0,), alpha=(1.0,))


# -- volumetric, vacuum, Langevin ---------------------------------------------------


def test_volumetric_examples():
    assert volumetric_energy(1.0, 7.0) == 0.0
    assert volumetric_energy(2.0, 4.0) == pytest.approx(3.0 - 2.0 * np.log(2.0), rel=1e-14)
    assert volumetric_energy(2.0, 4.0) == pytest.approx(1.6137, abs=1e-4)
    assert volumetric_energy(0.5, 1.0) > 0 and volumetric_energy(2.0, 1.0) > 0
    assert volumetric_energy(1e-8, 1.0) > 1.0 and volumetric_energy(1e8, 1.0) > 1e15
    with pytest.raises(InvalidDeformationError):
        volumetric_energy(0.0, 1.0)


def test_vacuum_examples(rng):
    assert vacuum_energy(random_F(rng), np.zeros(3)) == 0.0
    assert vacuum_energy(np.eye(3), np.array([0, 0, 1.0])) == pytest.approx(1 / (2 * MU0), rel=1e-14)
    assert 1 / (2 * MU0) == pytest.approx(3.9789e5, rel=1e-4)
    F, B = random_F(rng), random_B(rng)
    Q = random_rotations(rng, 1)[0]
    assert vacuum_energy(Q @ F, B) == pytest.approx(vacuum_energy(F, B), rel=1e-12)


def test_langevin_examples():
    p = LangevinParams(m_s=1e6, chi=0.9)
    assert langevin_energy(0.0, p) == 0.0
    v = langevin_energy(1.0, p)
    assert v == pytest.approx(langevin_reference(1.0, 1e6, 0.9), rel=1e-12)
    assert v == pytest.approx(-3.152e5, rel=1e-3)
    ell = 1e-3
    assert langevin_energy(ell, p) == pytest.approx(-p.chi * ell**2 / (2 * MU0), rel=1e-4)
    with pytest.raises(ContractViolation):
        langevin_energy(-1.0, p)


@pytest.mark.parametrize("ell", [1e-9, 1e-6, 3e-4, 1e-3, 0.01, 0.1, 1.0, 5.0, 50.0])
def test_langevin_series_branch_accuracy(ell):
    p = LangevinParams(m_s=160e3, chi=0.25)
    assert langevin_energy(ell, p) == pytest.approx(langevin_reference(ell, p.m_s, p.chi), rel=1e-10)


def test_langevin_saturates_and_is_negative():
    p = LangevinParams(m_s=40e3, chi=0.08)
    ell = np.linspace(0.0, 50.0, 1001)
    m = langevin_magnetization(ell, p)
    assert np.all(np.diff(m) > 0) and np.all(m < p.m_s)
    assert m[-1] > 0.99 * p.m_s
    assert np.all(langevin_energy(ell, p) <= 0.0)


# -- oracle ----------------------------------------------------------------------


def test_oracle_parameters():
    assert ORACLE.m_s_mre == pytest.approx(200e3)
    with pytest.raises(ContractViolation):
        OracleParams(S=(0.0, 0.0, 2.0))
    assert OracleParams.from_dict(ORACLE.to_dict()) == ORACLE
    with pytest.raises(KeyError):
        OracleParams.from_dict({"bogus": 1})


def test_oracle_unloaded_state():
    fs = derived_fields(OracleModel(), np.eye(3), np.zeros(3))
    assert fs.psi == pytest.approx(0.0, abs=1e-9)
    for name in ("P_tot", "H", "sigma_tot", "b", "h", "m", "sigma_pon", "sigma"):
        assert np.max(np.abs(getattr(fs, name))) < 1e-6, name


def test_oracle_unit_field_value():
    B = np.array([0.0, 0.0, 1.0])
    expected = (
        1 / (2 * MU0)
        + langevin_energy(1.0, LangevinParams(ORACLE.m_s1, ORACLE.chi_iso))
        + langevin_energy(1.0, LangevinParams(ORACLE.m_s2, ORACLE.chi_a))
    )
    assert oracle_energy(np.eye(3), B) == pytest.approx(expected, rel=1e-12)


def test_oracle_transverse_isotropy(rng):
    from magpann.tensors import axis_angle_rotation

    F, B = random_F(rng), random_B(rng)
    S = ORACLE.direction
    for alpha in rng.uniform(-np.pi, np.pi, 10):
        Q = axis_angle_rotation(S, alpha)
        assert oracle_energy(F @ Q.T, Q @ B) == pytest.approx(oracle_energy(F, B), rel=1e-10)


def test_oracle_field_bound_at_half_tesla():
    fs = derived_fields(OracleModel(), np.eye(3), np.array([0.0, 0.0, 0.5]))
    mag = np.linalg.norm(fs.m)
    assert 0.0 < mag < 200e3


def test_oracle_magnetization_monotone_concave(rng):
    b = np.arange(0.0, 4.0 + 1e-9, 0.05)
    model = OracleModel()
    dirs = [ORACLE.direction, np.array([1.0, 0, 0]), np.array([1.0, 0, 1]) / np.sqrt(2), *(
        v / np.linalg.norm(v) for v in rng.normal(size=(3, 3))
    )]
    for n in dirs:
        fs = derived_fields(model, np.broadcast_to(np.eye(3), (b.size, 3, 3)), b[:, None] * n)
        m = np.linalg.norm(fs.m, axis=1)
        assert np.all(np.diff(m) > 0)
        assert np.all(np.diff(m, 2) < 0)
        assert np.all(m < ORACLE.m_s1 + ORACLE.m_s2)


def test_oracle_mechanical_energy_non_negative(rng):
    F = np.concatenate([random_F(rng, 2000, 0.3), random_F(rng, 500, 0.03)])
    psi = oracle_energy(F, np.zeros((F.shape[0], 3)))
    assert np.all(psi >= -1e-9)


# -- derived fields ----------------------------------------------------------------


def test_vacuum_fields():
    B = np.array([0.0, 0.0, 1.0])
    fs = derived_fields(VacuumModel(), np.eye(3), B)
    np.testing.assert_allclose(fs.m, 0.0, atol=1e-9)
    np.testing.assert_allclose(fs.h, B / MU0, rtol=1e-14)
    maxwell = (np.outer(B, B) - 0.5 * np.eye(3)) / MU0
    np.testing.assert_allclose(fs.sigma_pon, maxwell, rtol=1e-12, atol=1e-6)
    np.testing.assert_allclose(fs.sigma_tot, maxwell, rtol=1e-12, atol=1e-6)
    np.testing.assert_allclose(fs.sigma, 0.0, atol=1e-6)


@pytest.mark.parametrize("model", [OracleModel(), ParticleModel(), VacuumModel()], ids=["oracle", "particle", "vacuum"])
def test_field_identities(model, rng):
    F, B = random_F(rng, 20), random_B(rng, 20)
    fs = derived_fields(model, F, B)
    b_rebuilt = MU0 * (fs.h + fs.m)
    assert np.all(np.linalg.norm(b_rebuilt - fs.b, axis=1) <= 1e-10 * np.linalg.norm(fs.b, axis=1))
    skew = np.linalg.norm(fs.sigma_tot - np.swapaxes(fs.sigma_tot, 1, 2), axis=(1, 2))
    assert np.all(skew <= 1e-8 * np.linalg.norm(fs.sigma_tot, axis=(1, 2)))
    np.testing.assert_array_equal(fs.sigma, fs.sigma_tot - fs.sigma_pon)


@pytest.mark.parametrize("model", [OracleModel(), ParticleModel()], ids=["oracle", "particle"])
def test_first_derivatives_vs_finite_differences(model, rng):
    for _ in range(20):
        F, B = random_F(rng), random_B(rng)
        _, P, H = model.evaluate(F, B)
        P_fd, H_fd = fd_first(model, F, B)
        assert rel_err(P, P_fd) < 1e-6
        assert rel_err(H, H_fd) < 1e-6


def test_second_derivatives_examples():
    class Quadratic:
        complex_safe = True

        def __init__(self, a):
            self.a = a

        def evaluate(self, F, B):
            from magpann.tensors import det, inv_transpose

            J = det(F)
            return 0.5 * self.a * (J - 1) ** 2, (self.a * (J - 1) * J)[..., None, None] * inv_transpose(F), 0 * B

    hF, _ = second_derivatives(Quadratic(3.0), np.eye(3), np.zeros(3))
    I9 = np.eye(3).ravel()
    np.testing.assert_allclose(hF, 3.0 * np.outer(I9, I9), atol=1e-12)
    _, hB = second_derivatives(VacuumModel(), np.eye(3), np.zeros(3))
    np.testing.assert_allclose(hB, np.eye(3) / MU0, rtol=1e-14)


def test_oracle_second_derivatives_vs_finite_differences(rng):
    model = OracleModel()
    for _ in range(3):
        F, B = random_F(rng), random_B(rng)
        hF, hB = second_derivatives(model, F, B)
        fF, fB = fd_second(model, F, B)
        assert rel_err(hF, fF) < 1e-5
        assert rel_err(hB, fB) < 1e-5
        np.testing.assert_allclose(hF, hF.T, rtol=0, atol=1e-8 * np.abs(hF).max())


def test_neo_hooke_zero_and_positive(rng):
    assert neo_hooke_iso_energy(np.eye(3)) == pytest.approx(0.0, abs=1e-6)
    assert np.all(neo_hooke_iso_energy(random_F(rng, 50, 0.2)) >= -1e-6)
    with pytest.raises(ContractViolation):
        NeoHookeParams(G=-1.0)
