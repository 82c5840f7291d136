import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from magpann.invariants import ELASTIC, REFERENCE
from magpann.pann import NormalizationSpec, PANNModel
from magpann.pnn import PNN, inverse_softplus

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def random_F(rng, n=None, scale=0.1):
    """Deformation gradients near identity with positive determinant."""
    F = np.eye(3) + scale * rng.normal(size=(1 if n is None else n, 3, 3))
    bad = np.linalg.det(F) <= 0.2
    while np.any(bad):
        F[bad] = np.eye(3) + scale * rng.normal(size=(int(bad.sum()), 3, 3))
        bad = np.linalg.det(F) <= 0.2
    return F[0] if n is None else F


def random_B(rng, n=None, scale=1.0):
    shape = () if n is None else (n,)
    return scale * rng.normal(size=shape + (3,))


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_pann(rng, oscale_el=5e4, oscale_cmv=5e5):
    """Untrained model with generic parameters; every hidden weight and output weight is non-trivial."""
    lo = REFERENCE - np.array([0.2, 0.2, 0.05, 0, 0, 0, 0.2, 0.3, 0, 0])
    hi = REFERENCE + np.array([0.2, 0.2, 0.05, 4, 4, 4, 0.2, 0.3, 4, 4])
    el = [list(ELASTIC)]
    norm_el = NormalizationSpec(lo[el[0]], hi[el[0]], oscale_el)
    norm_cmv = NormalizationSpec(lo, hi, oscale_cmv)
    nets = []
    for sizes in ((5, 6, 1), (10, 10, 10, 1)):
        layers = []
        for i, o in zip(sizes[:-2], sizes[1:-1]):
            layers.append((rng.normal(scale=0.8, size=(o, i)), rng.normal(scale=0.3, size=o)))
        layers.append(
            (inverse_softplus(rng.uniform(0.1, 1.0, size=(1, sizes[-2]))), inverse_softplus(np.array([0.05])))
        )
        nets.append(PNN(sizes, layers))
    phi = (rng.uniform(0.0, 0.5 * np.pi), rng.uniform(0.0, 2.0 * np.pi))
    return PANNModel(nets[0], nets[1], norm_el, norm_cmv, phi, lambda_gro=rng.uniform(10.0, 1e3))


def fd_first(model, F, B, h=1e-6):
    """Central differences of psi with respect to F and B (step scaled by the entries)."""
    P = np.zeros((3, 3))
    for i in range(3):
        for j in range(3):
            d = h * max(1.0, abs(F[i, j]))
            E = np.zeros((3, 3))
            E[i, j] = d
            P[i, j] = (model.evaluate(F + E, B)[0] - model.evaluate(F - E, B)[0]) / (2 * d)
    H = np.zeros(3)
    for k in range(3):
        d = h * max(1.0, abs(B[k]))
        e = np.zeros(3)
        e[k] = d
        H[k] = (model.evaluate(F, B + e)[0] - model.evaluate(F, B - e)[0]) / (2 * d)
    return P, H


def fd_second(model, F, B, h=1e-6):
    """Central differences of the analytic first derivatives: (9x9, 3x3)."""
    hF = np.zeros((9, 9))
    for a in range(9):
        E = np.zeros(9)
        E[a] = h
        E = E.reshape(3, 3)
        dP = (model.evaluate(F + E, B)[1] - model.evaluate(F - E, B)[1]) / (2 * h)
        hF[a] = dP.ravel()
    hB = np.zeros((3, 3))
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        hB[k] = (model.evaluate(F, B + e)[2] - model.evaluate(F, B - e)[2]) / (2 * h)
    return hF, hB


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def miniature_config():
    return os.path.join(ROOT, "configs", "miniature.json")


# acceptance verdicts, echoed in the terminal summary so they survive output capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
