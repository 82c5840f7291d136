"""Physics-augmented neural network free energy for transversely isotropic magneto-elasticity.

    psi = psi_el(I1, I2, I3, I7, I8) + psi_cmv(I1..I10)
    psi_el  = o_el * NN_el(norm(I_el))  - n_el_c (J - 1) - n_el_p (I7 - 1) - NN_el(ref) + growth(J)
    psi_cmv = o_cmv * NN_cmv(norm(I))   - n_cmv_c (J - 1) - n_cmv_p (I7 - 1) - NN_cmv(ref)

The correction coefficients come from the network gradient at the reference
state, so the unloaded state is energy-, stress- and field-free for every
parameter value.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .invariants import ELASTIC, I3, I7, I8, REFERENCE, compute_invariants, invariants_and_derivatives
from .materials import MU0, fields_from_derivatives, second_derivatives
from .pnn import PNN
from .tensors import det, symmetric_eigen, transpose

SCHEMA_VERSION = 1
ELASTIC_SIZES = (5, 6, 1)
COUPLED_SIZES = (10, 10, 10, 1)
PHI1_BOUNDS = (0.0, 0.5 * np.pi)
PHI2_BOUNDS = (0.0, 2.0 * np.pi)

# positions of I3, I7 and I8 within the elastic input vector
_EL_I3, _EL_I7, _EL_I8 = 2, 3, 4


@dataclass
class NormalizationSpec:
    """Affine input map to [-1, 1] per coordinate plus an output scale (o_min = 0)."""

    imin: np.ndarray
    imax: np.ndarray
    oscale: float

    def __post_init__(self):
        self.imin = np.asarray(self.imin, dtype=float)
        self.imax = np.asarray(self.imax, dtype=float)
        if self.imin.shape != self.imax.shape or np.any(self.imax <= self.imin):
            raise ConfigurationError("normalization needs imax > imin componentwise")
        if not self.oscale > 0.0:
            raise ConfigurationError("normalization output scale must be positive")

    @property
    def center(self):
        return 0.5 * (self.imax + self.imin)

    @property
    def half_range(self):
        return 0.5 * (self.imax - self.imin)

    def apply(self, x):
        # (2 i - (imax + imin)) / (imax - imin)
        return (x - self.center) / self.half_range

    def to_dict(self):
        return {"imin": self.imin.tolist(), "imax": self.imax.tolist(), "oscale": float(self.oscale)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["imin"], d["imax"], d["oscale"])


def direction_from_angles(phi1, phi2):
    """Unit vector (sin p1 cos p2, sin p1 sin p2, cos p1)."""
    s1 = np.sin(phi1)
    return np.stack([s1 * np.cos(phi2), s1 * np.sin(phi2), np.cos(phi1) * np.ones_like(s1)], axis=-1)


def direction_angle_jacobian(phi1, phi2):
    """d S / d(phi1, phi2) as a (3, 2) matrix."""
    c1, s1, c2, s2 = np.cos(phi1), np.sin(phi1), np.cos(phi2), np.sin(phi2)
    return np.array([[c1 * c2, -s1 * s2], [c1 * s2, s1 * c2], [-s1, 0.0]])


def clamp_angles(phi):
    """Project onto phi1 in [0, pi/2]; phi2 is periodic and wrapped into [0, 2 pi)."""
    phi = np.asarray(phi, dtype=float)
    return np.array([np.clip(phi[0], *PHI1_BOUNDS), np.mod(phi[1], 2.0 * np.pi)])


class _NetworkTerm:
    """One PNN with its normalization and the cached reference corrections."""

    def __init__(self, net: PNN, norm: NormalizationSpec | None, ref: np.ndarray, i3: int, i7: int, i8: int):
        self.net = net
        self.norm = norm
        self.ref = ref
        self.i3, self.i7, self.i8 = i3, i7, i8
        self._version = 0
        self._cache_key = None
        self._cache = None
        self._fw = None

    def touch(self):
        self._version += 1

    def _require_norm(self):
        if self.norm is None:
            raise ConfigurationError("normalization spec has not been fitted")
        return self.norm

    def _forward(self, x):
        """Normalized input and hidden-layer pass, reused while x and the parameters are unchanged."""
        n = self._require_norm()
        c = self._fw
        if c is not None and c[0] == self._version and c[1].shape == x.shape and np.array_equal(c[1], x):
            return c[2], c[3]
        xn = n.apply(x)
        fw = self.net.forward(xn)
        self._fw = (self._version, np.array(x, copy=True), xn, fw)
        return xn, fw

    def value(self, x):
        n = self._require_norm()
        return n.oscale * self.net.value(n.apply(x))

    def value_and_grad(self, x):
        """Scaled network output and its gradient with respect to the raw invariants."""
        n = self._require_norm()
        xn, fw = self._forward(x)
        y, g = self.net.value_and_grad(xn, fw)
        return n.oscale * y, g * (n.oscale / n.half_range)

    def corrections(self):
        """(n_circ, n_par, energy offset), recomputed only when parameters change."""
        if self._cache_key != self._version or self._cache is None:
            n = self._require_norm()
            y, g = self.net.value_and_grad(n.apply(self.ref[None, :]))
            y, g = n.oscale * y, g * (n.oscale / n.half_range)
            g = g[0]
            self._cache = (2.0 * g[self.i3], g[self.i7] + 2.0 * g[self.i8], -y[0])
            self._cache_key = self._version
        return self._cache

    def hvp(self, x, w):
        """Hessian of the scaled output with respect to raw inputs, applied row-wise to w."""
        n = self._require_norm()
        r = n.half_range
        xn, fw = self._forward(x)
        return self.net.hvp(xn, w / r, fw) * (n.oscale / r)

    def param_grad(self, x, v, v_ref):
        """d/dtheta [sum_i v_i . dNN/dx(x_i) + v_ref . dNN/dx(ref)] for scaled NN, raw inputs."""
        n = self._require_norm()
        s = n.oscale / n.half_range
        xn, fw = self._forward(x)
        g = self.net.directional_param_grad(xn, v * s, fw)
        return g + self.net.directional_param_grad(n.apply(self.ref)[None, :], v_ref[None, :] * s)


class PANNModel:
    """Two positive networks, normalization, trainable preferred direction and growth term."""

    complex_safe = True

    def __init__(
        self,
        elastic: PNN | None = None,
        coupled: PNN | None = None,
        norm_elastic: NormalizationSpec | None = None,
        norm_coupled: NormalizationSpec | None = None,
        phi=(0.0, 0.0),
        lambda_gro: float = 1.0,
        provenance: dict | None = None,
    ):
        elastic = elastic if elastic is not None else PNN(ELASTIC_SIZES)
        coupled = coupled if coupled is not None else PNN(COUPLED_SIZES)
        if elastic.sizes[0] != 5 or coupled.sizes[0] != 10:
            raise ContractViolation("elastic network needs 5 inputs and the coupled network 10")
        if not lambda_gro > 0.0:
            raise ContractViolation("growth coefficient must be positive")
        self.el = _NetworkTerm(elastic, norm_elastic, REFERENCE[list(ELASTIC)], _EL_I3, _EL_I7, _EL_I8)
        self.cmv = _NetworkTerm(coupled, norm_coupled, REFERENCE.copy(), I3, I7, I8)
        self.phi = np.asarray(phi, dtype=float).copy()
        self.lambda_gro = float(lambda_gro)
        self.provenance = dict(provenance or {})

    @classmethod
    def initialize(cls, rng, norm_elastic=None, norm_coupled=None, phi=None, lambda_gro=1.0):
        if phi is None:
            phi = (rng.uniform(*PHI1_BOUNDS), rng.uniform(*PHI2_BOUNDS))
        return cls(
            PNN.initialize(ELASTIC_SIZES, rng),
            PNN.initialize(COUPLED_SIZES, rng),
            norm_elastic,
            norm_coupled,
            phi,
            lambda_gro,
        )

    # -- parameters -----------------------------------------------------------

    @property
    def elastic(self) -> PNN:
        return self.el.net

    @property
    def coupled(self) -> PNN:
        return self.cmv.net

    @property
    def n_params(self) -> int:
        return self.elastic.n_params + self.coupled.n_params + 2

    @property
    def direction(self) -> np.ndarray:
        return direction_from_angles(self.phi[0], self.phi[1])

    def set_elastic_params(self, theta):
        self.elastic.set_flat(theta)
        self.el.touch()

    def set_coupled_params(self, theta):
        self.coupled.set_flat(theta)
        self.cmv.touch()

    def set_angles(self, phi):
        self.phi = clamp_angles(phi)

    def copy(self) -> "PANNModel":
        return PANNModel(
            self.elastic.copy(),
            self.coupled.copy(),
            self.el.norm,
            self.cmv.norm,
            self.phi.copy(),
            self.lambda_gro,
            dict(self.provenance),
        )

    # -- energy pieces --------------------------------------------------------

    def _growth(self, J):
        g = J + 1.0 / J - 2.0
        return self.lambda_gro * g * g, 2.0 * self.lambda_gro * g * (1.0 - 1.0 / (J * J))

    def invariant_gradient(self, I, parts=("el", "cmv")):
        """Energy and dpsi/dI (..., 10) for invariant rows I (..., 10)."""
        I = np.asarray(I)
        J = np.sqrt(I[..., I3])
        psi = np.zeros(I.shape[:-1], dtype=I.dtype)
        G = np.zeros(I.shape, dtype=I.dtype)
        flat = I.reshape(-1, 10)
        if "el" in parts:
            nc, npar, en = self.el.corrections()
            y, g = self.el.value_and_grad(flat[:, list(ELASTIC)])
            gro, dgro = self._growth(J)
            psi = psi + y.reshape(psi.shape) + en - nc * (J - 1.0) - npar * (I[..., I7] - 1.0) + gro
            G[..., list(ELASTIC)] += g.reshape(I.shape[:-1] + (5,))
            G[..., I3] += (dgro - nc) / (2.0 * J)
            G[..., I7] -= npar
        if "cmv" in parts:
            nc, npar, en = self.cmv.corrections()
            y, g = self.cmv.value_and_grad(flat)
            psi = psi + y.reshape(psi.shape) + en - nc * (J - 1.0) - npar * (I[..., I7] - 1.0)
            G += g.reshape(I.shape)
            G[..., I3] -= nc / (2.0 * J)
            G[..., I7] -= npar
        return psi, G

    def evaluate(self, F, B, parts=("el", "cmv"), S=None):
        """psi, P = dpsi/dF and H = dpsi/dB, batched over leading axes."""
        F = np.asarray(F)
        B = np.broadcast_to(np.asarray(B), F.shape[:-1])
        S = self.direction if S is None else S
        I, jac = invariants_and_derivatives(F, B, S)
        psi, G = self.invariant_gradient(I, parts)
        P = np.einsum("...l,...lij->...ij", G, jac.dF)
        H = np.einsum("...l,...li->...i", G, jac.dB)
        return psi, P, H

    def energy(self, F, B, parts=("el", "cmv"), S=None):
        """psi only (no derivatives), batched over leading axes."""
        F = np.asarray(F)
        B = np.broadcast_to(np.asarray(B), F.shape[:-1])
        S = self.direction if S is None else S
        I = compute_invariants(F, B, S)
        flat = I.reshape(-1, 10)
        J = np.sqrt(I[..., I3])
        psi = np.zeros(I.shape[:-1], dtype=I.dtype)
        for name, term in (("el", self.el), ("cmv", self.cmv)):
            if name not in parts:
                continue
            nc, npar, en = term.corrections()
            x = flat[:, list(ELASTIC)] if name == "el" else flat
            psi = psi + term.value(x).reshape(psi.shape) + en - nc * (J - 1.0) - npar * (I[..., I7] - 1.0)
        if "el" in parts:
            psi = psi + self._growth(J)[0]
        return psi

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        if self.el.norm is None or self.cmv.norm is None:
            raise ConfigurationError("cannot serialize a model without fitted normalization")
        return {
            "schema_version": SCHEMA_VERSION,
            "elastic_layers": self.elastic.to_dict(),
            "coupled_layers": self.coupled.to_dict(),
            "norm_elastic": self.el.norm.to_dict(),
            "norm_coupled": self.cmv.norm.to_dict(),
            "phi1": float(self.phi[0]),
            "phi2": float(self.phi[1]),
            "lambda_gro": self.lambda_gro,
            "units": "SI",
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PANNModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigurationError(
                f"model schema version {d.get('schema_version')!r} != supported {SCHEMA_VERSION}"
            )
        if d.get("units", "SI") != "SI":
            raise ConfigurationError("only SI model files are supported")
        return cls(
            PNN.from_dict(d["elastic_layers"]),
            PNN.from_dict(d["coupled_layers"]),
            NormalizationSpec.from_dict(d["norm_elastic"]),
            NormalizationSpec.from_dict(d["norm_coupled"]),
            (d["phi1"], d["phi2"]),
            d["lambda_gro"],
            d.get("provenance", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "PANNModel":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "PANNModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def assemble_psi_el(model: PANNModel, F):
    """Mechanical energy and first Piola stress of the elastic part."""
    F = np.asarray(F)
    psi, P, _ = model.evaluate(F, np.zeros(F.shape[:-1], dtype=F.dtype), parts=("el",))
    return psi, P


def assemble_psi_cmv(model: PANNModel, F, B):
    """Coupled energy with its derivatives with respect to F and B."""
    return model.evaluate(F, B, parts=("cmv",))


def model_predict(model, F, B):
    """All field quantities of the model at the given states."""
    F = np.asarray(F, dtype=float)
    B = np.asarray(B, dtype=float)
    psi, P, H = model.evaluate(F, B)
    return fields_from_derivatives(F, B, psi, P, H)


def model_second_derivatives(model, F, B):
    """(d2psi/dFdF as (..., 9, 9), d2psi/dBdB as (..., 3, 3))."""
    return second_derivatives(model, F, B)


def _direction_free_ranges(I, eig_range):
    lo = I.min(axis=0).copy()
    hi = I.max(axis=0).copy()
    lo = np.minimum(lo, REFERENCE)
    hi = np.maximum(hi, REFERENCE)
    if eig_range is not None:
        emin, emax = eig_range
        lo[I7], hi[I7] = min(emin, 1.0), max(emax, 1.0)
        lo[I8], hi[I8] = min(emin * emin, 1.0), max(emax * emax, 1.0)
        lo[8], hi[8] = 0.0, hi[3]
        lo[9], hi[9] = 0.0, hi[5]
    return _widen(lo, hi)


def _widen(lo, hi):
    span = hi - lo
    scale = np.maximum(np.abs(hi), np.abs(lo))
    degenerate = span <= 1e-12 * np.maximum(scale, 1.0)
    lo = np.where(degenerate, lo - 0.5 * np.maximum(scale, 1.0) * 1e-3, lo)
    hi = np.where(degenerate, hi + 0.5 * np.maximum(scale, 1.0) * 1e-3, hi)
    return lo, hi


def ciso_eigen_range(F):
    F = np.asarray(F, dtype=float)
    J = det(F)
    Ci = (J ** (-2.0 / 3.0))[..., None, None] * (transpose(F) @ F)
    vals, _ = symmetric_eigen(Ci, check=False)
    return float(vals.min()), float(vals.max())


def fit_normalization(F, B, S, sigma, magnetic_energy_scale=None, mechanical=False):
    """Direction-independent normalization from training states (F, B) and stress targets."""
    F = np.asarray(F, dtype=float)
    B = np.asarray(B, dtype=float)
    I = compute_invariants(F, B, S)
    lo, hi = _direction_free_ranges(I, ciso_eigen_range(F))
    s_sigma = float(np.max(np.sum(np.asarray(sigma) ** 2, axis=(-2, -1))))
    oscale = 0.1 * np.sqrt(s_sigma)
    if mechanical:
        if oscale <= 0.0:
            raise ConfigurationError("mechanical targets are all zero; cannot fit output scale")
        return NormalizationSpec(lo[list(ELASTIC)], hi[list(ELASTIC)], oscale)
    if magnetic_energy_scale is not None:
        oscale = max(oscale, float(magnetic_energy_scale))
    if oscale <= 0.0:
        raise ConfigurationError("coupled targets are all zero; cannot fit output scale")
    return NormalizationSpec(lo, hi, oscale)


def magnetic_energy_scale(F, B, m):
    """Half the largest B.H over the data, with H = F^T h and h = b/mu0 - m."""
    F = np.asarray(F, dtype=float)
    B = np.asarray(B, dtype=float)
    m = np.asarray(m, dtype=float)
    J = det(F)
    b = np.einsum("...ij,...j->...i", F, B) / J[..., None]
    h = b / MU0 - m
    H = np.einsum("...ji,...j->...i", F, h)
    return 0.5 * float(np.max(np.abs(np.sum(B * H, axis=-1))))
