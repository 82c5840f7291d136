"""Two-stage Sobolev training of the PANN model, restarts and metrics.

Stage 1 fits the elastic network and the direction angles to mechanical
stresses. Stage 2 freezes the elastic network and fits the coupled network and
the angles to mechanical stress, magnetization and the magnetization-curve
penalties on the additional purely magnetic states.

Network-parameter gradients are exact (reverse pass through the linear map
dpsi/dI -> predictions, then a forward-over-reverse network product). The
angle derivatives combine an analytic adjoint for the data rows with a
complex-step derivative of the penalties on the direction-dependent
additional states.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, ContractViolation
from .invariants import ELASTIC, I3, I7, I8, InvariantCache, invariants_and_derivatives
from .materials import MU0, ponderomotive_stress
from .pann import (
    PHI1_BOUNDS,
    PANNModel,
    clamp_angles,
    direction_angle_jacobian,
    direction_from_angles,
    fit_normalization,
    magnetic_energy_scale,
    model_predict,
)
from .sampling import AdditionalSetConfig, Dataset, build_additional_set
from .tensors import det, inv, transpose

log = logging.getLogger(__name__)

CS_STEP = 1e-30
_EL = list(ELASTIC)
_EL_I3, _EL_I7, _EL_I8 = 2, 3, 4


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    w_sigma: float = 1.0
    w_m: float = 1.0
    w_sat: float = 1e-2
    w_mon: float = 1e-2
    w_con: float = 1e-2
    adam_iters: int = 2000
    adam_lr: float = 1e-2
    adam_decay: float = 0.5
    adam_decay_every: int = 500
    lbfgs_iters: int = 5000
    lbfgs_ftol: float = 1e-14
    lbfgs_gtol: float = 1e-12
    early_stop_window: int = 50
    early_stop_tol: float = 1e-12
    restarts: int = 20
    seed: int = 0
    m_s_mre: float = 200e3
    lambda_gro_factor: float = 10.0**-2.5
    add_n_phi: int = 6
    add_n_b: int = 9
    add_b_min: float = 2.0
    add_b_max: float = 4.0
    history_stride: int = 10

    def __post_init__(self):
        for k in ("w_sigma", "w_m", "w_sat", "w_mon", "w_con"):
            if getattr(self, k) < 0:
                raise ConfigurationError(f"loss weight {k} must be non-negative")
        if self.restarts < 1:
            raise ConfigurationError("restarts must be >= 1")
        if self.adam_iters < 0 or self.lbfgs_iters < 0:
            raise ConfigurationError("iteration counts must be non-negative")

    @property
    def add_set(self) -> AdditionalSetConfig:
        return AdditionalSetConfig(self.add_n_phi, self.add_n_b, self.add_b_min, self.add_b_max)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown training key(s): {sorted(unknown)}")
        return cls(**d)


# ---------------------------------------------------------------------------
# helpers


def relu(x):
    if np.iscomplexobj(x):
        return np.where(x.real > 0, x, 0.0)
    return np.maximum(x, 0.0)


def _sqnorm(x, axes):
    return np.sum(x * x, axis=axes)


def r_squared(reference, prediction) -> float:
    """1 - SS_res / SS_tot over all coordinates (tensors flattened)."""
    y = np.asarray(reference, dtype=float).ravel()
    p = np.asarray(prediction, dtype=float).ravel()
    if y.shape != p.shape:
        raise ContractViolation("reference and prediction sizes differ")
    if y.size < 2:
        raise ContractViolation("R^2 needs at least two samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise ContractViolation("R^2 is undefined for a constant reference")
    return 1.0 - float(np.sum((y - p) ** 2)) / ss_tot


def estimate_shear_modulus(F, sigma) -> float:
    """Least-squares G in dev(sigma) = 2 G dev(eps) with eps = sym(F) - 1."""
    F = np.asarray(F, dtype=float)
    eps = 0.5 * (F + transpose(F)) - np.eye(3)
    tr = np.trace(eps, axis1=-2, axis2=-1)[..., None, None]
    ed = eps - tr / 3.0 * np.eye(3)
    sd = sigma - np.trace(sigma, axis1=-2, axis2=-1)[..., None, None] / 3.0 * np.eye(3)
    den = 2.0 * float(np.sum(ed * ed))
    if den <= 0.0:
        raise ConfigurationError("mechanical data carry no deviatoric strain")
    return float(np.sum(sd * ed)) / den


# ---------------------------------------------------------------------------
# loss problems


def _mv(A, x):
    return np.einsum("...ij,...j->...i", A, x)


def _vd(x, y):
    return np.sum(x * y, axis=-1)


def _reference_adjoint(Gbar, I, n_in):
    """v_ref for the reference-state corrections (n_c via I3, n_par via I7/I8)."""
    nbar_c = float(np.sum(Gbar[:, I3] * (-0.5 / np.sqrt(I[:, I3]))))
    nbar_p = -float(np.sum(Gbar[:, I7]))
    v_ref = np.zeros(n_in)
    i3, i7, i8 = (_EL_I3, _EL_I7, _EL_I8) if n_in == 5 else (I3, I7, I8)
    v_ref[i3] = 2.0 * nbar_c
    v_ref[i7] = nbar_p
    v_ref[i8] = 2.0 * nbar_p
    return v_ref


def _invariant_hvp(model, parts, I, Gbar):
    """Rows of (d2psi/dI dI) . Gbar; the growth and reference corrections are at most linear in I7."""
    HG = np.zeros_like(Gbar)
    if "el" in parts:
        HG[:, _EL] += model.el.hvp(I[:, _EL], Gbar[:, _EL])
    if "cmv" in parts:
        HG += model.cmv.hvp(I, Gbar)
    return HG


def _direction_gradient(cache: InvariantCache, HG, G, Pbar, Hbar, S):
    """Exact dL/dS for rows with fixed (F, B), given the adjoints of P and H.

    Two contributions: the invariant Hessian of psi applied to Gbar (``HG``),
    contracted with dI/dS, and the (P, H)-directional derivative of
    sum_l G_l dI_l/dS with G held fixed.
    """
    F, B, Ci, CiB = cache.F, cache.B, cache.Ci, cache.CiB
    CiS = _mv(Ci, S)
    Ci2S = _mv(Ci, CiS)
    SB = B @ S
    SCB = CiB @ S
    g = 2.0 * (
        HG[:, 6:7] * CiS + HG[:, 7:8] * Ci2S + (HG[:, 8] * SB)[:, None] * B + (HG[:, 9] * SCB)[:, None] * CiB
    )
    # directional derivative of V = 2 [G6 Ci S + G7 Ci^2 S + G8 (S.B) B + G9 (S.Ci B) Ci B]
    trKP = np.sum(cache.K * Pbar, axis=(-2, -1))[:, None, None]
    FtP = transpose(F) @ Pbar
    dCi = cache.j23 * (FtP + transpose(FtP)) - (2.0 / 3.0) * trKP * Ci
    dCiS = _mv(dCi, S)
    dCi2S = _mv(dCi, CiS) + _mv(Ci, dCiS)
    dV = G[:, 6:7] * dCiS + G[:, 7:8] * dCi2S
    if Hbar is not None:
        dCiB = _mv(dCi, B) + _mv(Ci, Hbar)
        dV += (G[:, 8] * (Hbar @ S))[:, None] * B + (G[:, 8] * SB)[:, None] * Hbar
        dV += (G[:, 9] * (dCiB @ S))[:, None] * CiB + (G[:, 9] * SCB)[:, None] * dCiB
    else:
        dCiB = _mv(dCi, B)
        dV += (G[:, 9] * (dCiB @ S))[:, None] * CiB + (G[:, 9] * SCB)[:, None] * dCiB
    return np.sum(g, axis=0) + 2.0 * np.sum(dV, axis=0)


def _angle_chain(phi, dLdS):
    return direction_angle_jacobian(phi[0], phi[1]).T @ dLdS


class ElasticProblem:
    """L_el = mean ||sigma_ref - sigma_el||^2 / s_sigma_mech over mechanical training tuples."""

    def __init__(self, data: Dataset):
        if len(data) == 0:
            raise ConfigurationError("empty mechanical dataset")
        self.F = np.asarray(data.F, dtype=float)
        self.B = np.zeros((len(data), 3))
        self.sigma = np.asarray(data.sigma, dtype=float)
        self.s_sigma = float(np.max(_sqnorm(self.sigma, (-2, -1))))
        if self.s_sigma <= 0.0:
            raise ConfigurationError("mechanical targets are all zero")
        self.J = det(self.F)
        self.n = len(data)
        self.cache = InvariantCache(self.F, self.B)

    def _forward(self, model: PANNModel, S):
        I, jac = self.cache.evaluate(S)
        _, G = model.invariant_gradient(I, parts=("el",))
        P = np.einsum("nl,nlij->nij", G, jac.dF)
        sig = (P @ transpose(self.F)) / self.J[:, None, None]
        return I, jac, G, sig

    def loss(self, model: PANNModel, S=None) -> float:
        S = model.direction if S is None else S
        sig = self._forward(model, S)[-1]
        r = sig - self.sigma
        return np.sum(_sqnorm(r, (-2, -1))) / (self.n * self.s_sigma)

    def predictions(self, model):
        return self._forward(model, model.direction)[-1]

    def loss_and_grad(self, model: PANNModel):
        """Loss and gradient with respect to [theta_el, phi1, phi2]."""
        S = model.direction
        I, jac, G, sig = self._forward(model, S)
        r = sig - self.sigma
        L = float(np.sum(_sqnorm(r, (-2, -1))) / (self.n * self.s_sigma))
        sbar = 2.0 * r / (self.n * self.s_sigma)
        Pbar = (sbar @ self.F) / self.J[:, None, None]
        Gbar = np.einsum("nij,nlij->nl", Pbar, jac.dF)
        g_theta = model.el.param_grad(I[:, _EL], Gbar[:, _EL], _reference_adjoint(Gbar, I, 5))
        HG = _invariant_hvp(model, ("el",), I, Gbar)
        dLdS = _direction_gradient(self.cache, HG, G, Pbar, None, S)
        return L, np.concatenate([g_theta, _angle_chain(model.phi, dLdS)])


def angle_grad_complex_step(loss_of_S, phi):
    """Complex-step derivative of a direction-dependent loss with respect to the two angles."""
    out = np.zeros(2)
    for k in range(2):
        pc = np.asarray(phi, dtype=complex)
        pc[k] += 1j * CS_STEP
        out[k] = np.imag(loss_of_S(direction_from_angles(pc[0], pc[1]))) / CS_STEP
    return out


def _fields(F, B, J, P, H):
    """sigma_tot, b, h, m, sigma (complex-safe)."""
    Fi = inv(F)
    sig_tot = (P @ transpose(F)) / J[:, None, None]
    b = np.einsum("nij,nj->ni", F, B) / J[:, None]
    h = np.einsum("nji,nj->ni", Fi, H)
    m = b / MU0 - h
    bb = np.sum(b * b, axis=-1)[:, None, None]
    bm = np.sum(b * m, axis=-1)[:, None, None]
    eye = np.eye(3)
    pon = (b[:, :, None] * b[:, None, :] - 0.5 * bb * eye) / MU0 + bm * eye - m[:, :, None] * b[:, None, :]
    return sig_tot, b, h, m, sig_tot - pon


class CoupledProblem:
    """L_cmv = w_s L_sigma + w_m L_m + w_sat L_sat + w_mon L_mon + w_con L_con.

    Data rows have fixed (F, B) and use a cached invariant basis. The purely
    magnetic additional rows (F = 1) are rebuilt around the current direction.
    """

    TERMS = ("sigma", "m", "sat", "mon", "con")

    def __init__(self, data: Dataset, config: TrainConfig):
        if len(data) == 0:
            raise ConfigurationError("empty coupled dataset")
        add = config.add_set
        if add.n_b < 3:
            raise ConfigurationError("the concavity penalty needs at least 3 magnitudes per direction")
        self.cfg = config
        self.add = add
        self.n = len(data)
        self.F = np.asarray(data.F, dtype=float)
        self.B = np.asarray(data.B, dtype=float)
        self.sigma = np.asarray(data.sigma, dtype=float)
        self.m = np.asarray(data.m, dtype=float)
        self.s_sigma = float(np.max(_sqnorm(self.sigma, (-2, -1))))
        self.s_m = float(np.max(_sqnorm(self.m, -1)))
        if self.s_sigma <= 0.0 or self.s_m <= 0.0:
            raise ConfigurationError("coupled targets are all zero")
        self.J = det(self.F)
        self.Fi = inv(self.F)
        self.cache = InvariantCache(self.F, self.B)
        self.n_add = add.n_phi * add.n_b
        self.weights = np.array([config.w_sigma, config.w_m, config.w_sat, config.w_mon, config.w_con])

    # -- data rows ------------------------------------------------------------

    def _data_forward(self, model, S):
        I, jac = self.cache.evaluate(S)
        _, G = model.invariant_gradient(I)
        P = np.einsum("nl,nlij->nij", G, jac.dF)
        H = np.einsum("nl,nli->ni", G, jac.dB)
        return I, jac, G, _fields(self.F, self.B, self.J, P, H)

    def _data_terms(self, sig, m):
        r_s = sig - self.sigma
        r_m = m - self.m
        L_s = np.sum(_sqnorm(r_s, (-2, -1))) / (self.n * self.s_sigma)
        L_m = np.sum(_sqnorm(r_m, -1)) / (self.n * self.s_m)
        return L_s, L_m, r_s, r_m

    # -- additional magnetic rows -----------------------------------------------

    def _add_forward(self, model, S):
        B = build_additional_set(S, self.add).reshape(-1, 3)
        F = np.broadcast_to(np.eye(3), (B.shape[0], 3, 3))
        I, jac = invariants_and_derivatives(F, B, S)
        _, G = model.invariant_gradient(I)
        H = np.einsum("nl,nli->ni", G, jac.dB)
        return I, jac, B, B / MU0 - H  # F = 1: h = H, b = B

    def _add_terms(self, m):
        add, cfg = self.add, self.cfg
        mag = np.sqrt(np.sum(m * m, axis=-1)).reshape(add.n_phi, add.n_b)
        ms, db, bmax = cfg.m_s_mre, add.delta_b, add.b_max
        pre = 1.0 / (self.n_add * ms * ms)
        sat = relu(mag - ms)
        mon = relu(-(mag[:, 1:] - mag[:, :-1]) / db)
        con = relu((mag[:, 2:] - 2.0 * mag[:, 1:-1] + mag[:, :-2]) / db**2)
        L = (pre * np.sum(sat * sat), pre * bmax**2 * np.sum(mon * mon), pre * bmax**4 * np.sum(con * con))
        return L, (mag, sat, mon, con)

    def _add_loss(self, model, S):
        L, _ = self._add_terms(self._add_forward(model, S)[-1])
        return self.weights[2:] @ np.array(L)

    # -- public ---------------------------------------------------------------

    def terms(self, model: PANNModel, S=None):
        S = model.direction if S is None else S
        *_, (sig_tot, b, h, m, sig) = self._data_forward(model, S)
        L_s, L_m, _, _ = self._data_terms(sig, m)
        L_add, _ = self._add_terms(self._add_forward(model, S)[-1])
        return np.array([L_s, L_m, *L_add])

    def loss(self, model, S=None):
        return self.weights @ self.terms(model, S)

    def loss_and_grad(self, model: PANNModel):
        """Loss and gradient with respect to [theta_cmv, phi1, phi2]."""
        S = model.direction
        n, cfg, add = self.n, self.cfg, self.add
        w_s, w_m, w_sat, w_mon, w_con = self.weights
        # one network pass over data and additional rows
        I, jac = self.cache.evaluate(S)
        Ba = build_additional_set(S, add).reshape(-1, 3)
        Ia, jac_a = invariants_and_derivatives(np.broadcast_to(np.eye(3), (Ba.shape[0], 3, 3)), Ba, S)
        I_all = np.concatenate([I, Ia])
        _, G_all = model.invariant_gradient(I_all)
        G, Ga = G_all[:n], G_all[n:]
        P = np.einsum("nl,nlij->nij", G, jac.dF)
        H = np.einsum("nl,nli->ni", G, jac.dB)
        sig_tot, b, h, m, sig = _fields(self.F, self.B, self.J, P, H)
        ma = Ba / MU0 - np.einsum("nl,nli->ni", Ga, jac_a.dB)
        L_s, L_m, r_s, r_m = self._data_terms(sig, m)
        L_add, (mag, sat, mon, con) = self._add_terms(ma)
        L = float(w_s * L_s + w_m * L_m + self.weights[2:] @ np.array(L_add))
        # data-row adjoints; sigma = sigma_tot - pon(b, m)
        sbar = w_s * 2.0 * r_s / (n * self.s_sigma)
        mbar = w_m * 2.0 * r_m / (n * self.s_m)
        tr = np.trace(sbar, axis1=-2, axis2=-1)
        mbar = mbar - tr[:, None] * b + np.einsum("nij,nj->ni", sbar, b)
        Pbar = (sbar @ self.F) / self.J[:, None, None]
        Hbar = np.einsum("nij,nj->ni", self.Fi, -mbar)
        Gbar = np.einsum("nij,nlij->nl", Pbar, jac.dF) + np.einsum("ni,nli->nl", Hbar, jac.dB)
        # additional-row adjoints through |m|
        ms, db, bmax = cfg.m_s_mre, add.delta_b, add.b_max
        pre = 1.0 / (self.n_add * ms * ms)
        gmag = w_sat * pre * 2.0 * sat
        d_mon = -w_mon * pre * bmax**2 * 2.0 * mon / db
        gmag[:, 1:] += d_mon
        gmag[:, :-1] -= d_mon
        d_con = w_con * pre * bmax**4 * 2.0 * con / db**2
        gmag[:, 2:] += d_con
        gmag[:, 1:-1] -= 2.0 * d_con
        gmag[:, :-2] += d_con
        mg = mag.reshape(-1)
        safe = np.where(mg > 0, mg, 1.0)
        mbar_a = (gmag.reshape(-1) / safe * (mg > 0))[:, None] * ma
        Gbar_a = np.einsum("ni,nli->nl", -mbar_a, jac_a.dB)
        Gbar_all = np.concatenate([Gbar, Gbar_a])
        g_theta = model.cmv.param_grad(I_all, Gbar_all, _reference_adjoint(Gbar_all, I_all, 10))
        HG = _invariant_hvp(model, ("el", "cmv"), I_all, Gbar_all)[:n]
        dLdS = _direction_gradient(self.cache, HG, G, Pbar, Hbar, S)
        g_phi = _angle_chain(model.phi, dLdS)
        if np.any(gmag != 0.0):
            g_phi = g_phi + angle_grad_complex_step(lambda Sc: self._add_loss(model, Sc), model.phi)
        return L, np.concatenate([g_theta, g_phi])


# ---------------------------------------------------------------------------
# optimizers


@dataclass
class StageResult:
    history: list = field(default_factory=list)  # (phase, iteration, loss)
    adam_iterations: int = 0
    lbfgs_iterations: int = 0
    lbfgs_message: str = ""
    final_loss: float = math.nan


class _Objective:
    """Flat vector x = [theta, phi1, phi2] bound to one network of a model."""

    def __init__(self, model: PANNModel, problem, which: str):
        self.model = model
        self.problem = problem
        self.which = which

    def get(self):
        net = self.model.elastic if self.which == "el" else self.model.coupled
        return np.concatenate([net.get_flat(), self.model.phi])

    def set(self, x):
        if self.which == "el":
            self.model.set_elastic_params(x[:-2])
        else:
            self.model.set_coupled_params(x[:-2])
        self.model.phi = np.array([x[-2], x[-1]], dtype=float)

    def __call__(self, x):
        self.set(x)
        L, g = self.problem.loss_and_grad(self.model)
        if not np.isfinite(L) or not np.all(np.isfinite(g)):
            raise TrainingDiverged("non-finite loss or gradient")
        return L, g


def adam(obj: _Objective, cfg: TrainConfig, result: StageResult, callback=None):
    x = obj.get()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_window = []
    for it in range(cfg.adam_iters):
        lr = cfg.adam_lr * cfg.adam_decay ** (it // max(cfg.adam_decay_every, 1))
        L, g = obj(x)
        if it % cfg.history_stride == 0:
            result.history.append(("adam", it, L))
        if callback is not None:
            callback("adam", it, obj.model)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** (it + 1))
        vh = v / (1 - b2 ** (it + 1))
        x = x - lr * mh / (np.sqrt(vh) + eps)
        x[-2:] = clamp_angles(x[-2:])
        best_window.append(L)
        result.adam_iterations = it + 1
        w = cfg.early_stop_window
        if len(best_window) > w:
            if min(best_window[:-w]) - min(best_window[-w:]) < cfg.early_stop_tol:
                break
            best_window = best_window[-(w + 1) :]
    obj.set(x)
    return x


def lbfgs(obj: _Objective, cfg: TrainConfig, result: StageResult, callback=None):
    x0 = obj.get()
    if cfg.lbfgs_iters == 0:
        return x0
    n = x0.size
    bounds = [(None, None)] * (n - 2) + [PHI1_BOUNDS, (None, None)]
    last = {}

    def fun(x):
        L, g = obj(x)
        last["L"] = L
        return L, g

    counter = [0]

    def cb(xk):
        counter[0] += 1
        if counter[0] % cfg.history_stride == 0:
            result.history.append(("lbfgs", counter[0], float(last.get("L", math.nan))))
        if callback is not None:
            callback("lbfgs", counter[0], obj.model)

    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=cb,
        options={"maxiter": cfg.lbfgs_iters, "ftol": cfg.lbfgs_ftol, "gtol": cfg.lbfgs_gtol, "maxcor": 20},
    )
    x = res.x.copy()
    x[-2:] = clamp_angles(x[-2:])
    obj.set(x)
    result.lbfgs_iterations = int(res.nit)
    result.lbfgs_message = str(res.message)
    return x


def _run_stage(obj, cfg, callback=None) -> StageResult:
    res = StageResult()
    adam(obj, cfg, res, callback)
    lbfgs(obj, cfg, res, callback)
    res.final_loss = float(obj.problem.loss(obj.model))
    res.history.append(("final", res.adam_iterations + res.lbfgs_iterations, res.final_loss))
    return res


# ---------------------------------------------------------------------------
# training drivers


@dataclass
class PreparedData:
    mech_train: Dataset
    mech_test: Dataset
    coup_train: Dataset
    coup_test: Dataset


def prepare(dataset: Dataset) -> PreparedData:
    return PreparedData(
        dataset.select("mech", "train"),
        dataset.select("mech", "test"),
        dataset.select("coup", "train"),
        dataset.select("coup", "test"),
    )


def fit_model_scales(data: PreparedData, cfg: TrainConfig):
    """Normalization specs and growth coefficient identified from the training data."""
    S0 = np.array([0.0, 0.0, 1.0])
    mt, ct = data.mech_train, data.coup_train
    if len(mt) == 0 or len(ct) == 0:
        raise ConfigurationError("both mechanical and coupled training data are required")
    norm_el = fit_normalization(mt.F, np.zeros((len(mt), 3)), S0, mt.sigma, mechanical=True)
    norm_cmv = fit_normalization(ct.F, ct.B, S0, ct.sigma, magnetic_energy_scale(ct.F, ct.B, ct.m))
    G = estimate_shear_modulus(mt.F, mt.sigma)
    if G <= 0.0:
        raise ConfigurationError("estimated shear modulus is not positive")
    return norm_el, norm_cmv, cfg.lambda_gro_factor * G


def restart_seed(seed: int, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed), spawn_key=(int(k),))


def train_two_stage(data: PreparedData, cfg: TrainConfig, restart: int = 0, model: PANNModel | None = None, callback=None):
    """One restart: returns (model, report dict)."""
    rng = np.random.default_rng(restart_seed(cfg.seed, restart))
    norm_el, norm_cmv, lam = fit_model_scales(data, cfg)
    if model is None:
        model = PANNModel.initialize(rng, norm_el, norm_cmv, lambda_gro=lam)
    model.provenance = {"seed": int(cfg.seed), "restart": int(restart)}
    phi_init = model.phi.copy()
    t0 = time.perf_counter()
    el_prob = ElasticProblem(data.mech_train)
    cp_prob = CoupledProblem(data.coup_train, cfg)
    report = {"restart": int(restart), "phi_init": phi_init.tolist()}
    try:
        st1 = _run_stage(_Objective(model, el_prob, "el"), cfg, callback)
        report["phi_stage1"] = model.phi.tolist()
        report["stage2_initial_loss"] = float(cp_prob.loss(model))
        st2 = _run_stage(_Objective(model, cp_prob, "cmv"), cfg, callback)
    except TrainingDiverged as exc:
        report.update({"diverged": True, "error": str(exc), "wall_time": time.perf_counter() - t0})
        return model, report
    report.update(
        {
            "diverged": False,
            "phi_final": model.phi.tolist(),
            "direction": model.direction.tolist(),
            "stage1": _stage_dict(st1),
            "stage2": _stage_dict(st2),
            "final": loss_table(model, data, cfg),
            "wall_time": time.perf_counter() - t0,
        }
    )
    return model, report


def _stage_dict(st: StageResult):
    return {
        "adam_iterations": st.adam_iterations,
        "lbfgs_iterations": st.lbfgs_iterations,
        "lbfgs_message": st.lbfgs_message,
        "final_loss": st.final_loss,
        "history": [[p, int(i), float(L)] for p, i, L in st.history],
    }


def loss_table(model: PANNModel, data: PreparedData, cfg: TrainConfig) -> dict:
    """Per-term losses on train and test splits; test losses use the training normalizers."""
    out = {}
    el_tr = ElasticProblem(data.mech_train)
    cp_tr = CoupledProblem(data.coup_train, cfg)
    out["train"] = {"el": float(el_tr.loss(model))}
    out["train"].update({k: float(v) for k, v in zip(CoupledProblem.TERMS, cp_tr.terms(model))})
    out["train"]["cmv"] = float(cp_tr.loss(model))
    out["test"] = {}
    if len(data.mech_test):
        el_te = ElasticProblem(data.mech_test)
        el_te.s_sigma = el_tr.s_sigma
        out["test"]["el"] = float(el_te.loss(model))
    if len(data.coup_test):
        cp_te = CoupledProblem(data.coup_test, cfg)
        cp_te.s_sigma, cp_te.s_m = cp_tr.s_sigma, cp_tr.s_m
        t = cp_te.terms(model)
        out["test"].update({k: float(v) for k, v in zip(CoupledProblem.TERMS[:2], t[:2])})
    out["normalizers"] = {"s_sigma_mech": el_tr.s_sigma, "s_sigma": cp_tr.s_sigma, "s_m": cp_tr.s_m}
    return out


def _restart_worker(args):
    data, cfg, k = args
    model, rep = train_two_stage(data, cfg, k)
    return model.to_dict(), rep


def multi_restart_select(data: PreparedData, cfg: TrainConfig, threads: int = 1, extra=()):
    """Run ``cfg.restarts`` independent restarts and select the smallest final training L_cmv.

    ``extra`` may hold already trained (model, report) pairs that compete in the
    selection. Ties are broken by the model fingerprint so the choice does not
    depend on restart order.
    """
    jobs = [(data, cfg, k) for k in range(cfg.restarts)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            raw = list(ex.map(_restart_worker, jobs))
    else:
        raw = [_restart_worker(j) for j in jobs]
    candidates = [(PANNModel.from_dict(d), rep) for d, rep in raw] + list(extra)
    ok = [(m, r) for m, r in candidates if not r.get("diverged", False)]
    if not ok:
        raise TrainingDiverged("every restart diverged")
    best = min(ok, key=lambda mr: (mr[1]["final"]["train"]["cmv"], mr[0].fingerprint()))
    return best[0], best[1], [r for _, r in candidates]


# ---------------------------------------------------------------------------
# metrics


def r2_table(model, dataset: Dataset) -> dict:
    """R^2 of sigma_el (mechanical tuples) and sigma, sigma_tot, m (coupled tuples)."""
    out = {}
    mech = dataset.select("mech")
    if len(mech) > 1:
        pred = model_predict(model, mech.F, np.zeros((len(mech), 3)))
        out["sigma_el"] = r_squared(mech.sigma, pred.sigma)
    coup = dataset.select("coup")
    if len(coup) > 1:
        pred = model_predict(model, coup.F, coup.B)
        J = det(coup.F)
        b = np.einsum("nij,nj->ni", coup.F, coup.B) / J[:, None]
        sig_tot_ref = coup.sigma + ponderomotive_stress(b, coup.m)
        out["sigma"] = r_squared(coup.sigma, pred.sigma)
        out["sigma_tot"] = r_squared(sig_tot_ref, pred.sigma_tot)
        out["m"] = r_squared(coup.m, pred.m)
    return out


def angle_to(S, S_true) -> float:
    """Angle between two axes in degrees (S and -S are the same axis)."""
    c = abs(float(np.dot(S, S_true))) / (np.linalg.norm(S) * np.linalg.norm(S_true))
    return float(np.degrees(np.arccos(min(1.0, c))))
