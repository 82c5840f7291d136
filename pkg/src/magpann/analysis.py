"""Post-training diagnostics: directional surfaces, magnetization curves,
m-h angle maps and the validation battery (growth and positivity).

Every routine is a pure function of the model (and explicit seeds), so
results from a reloaded model file are bit-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .materials import MU0, derived_fields, second_derivatives
from .tensors import random_rotations

log = logging.getLogger(__name__)

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
RANK_RTOL = 1e-10


# ---------------------------------------------------------------------------
# direction grids


def fibonacci_sphere(n: int = 512) -> np.ndarray:
    """Near-uniform unit vectors (n, 3) without pole clustering."""
    if n < 1:
        raise ValueError("need at least one direction")
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(1.0 - z * z)
    t = GOLDEN_ANGLE * i
    return np.stack([r * np.cos(t), r * np.sin(t), z], axis=-1)


def orthonormal_frame(S):
    """(e1, e2) completing the unit vector S to a right-handed frame."""
    S = np.asarray(S, dtype=float)
    a = np.array([1.0, 0.0, 0.0]) if abs(S[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = a - (a @ S) * S
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(S, e1)


def directions_at(S, polar, azimuth):
    """Unit vectors at the given polar angles to S and azimuths around S (broadcast)."""
    e1, e2 = orthonormal_frame(S)
    p = np.asarray(polar, dtype=float)[..., None]
    a = np.asarray(azimuth, dtype=float)[..., None]
    return np.cos(p) * S + np.sin(p) * (np.cos(a) * e1 + np.sin(a) * e2)


def polar_angle(n, S):
    """Angle between each direction and the axis S, in [0, pi/2] (S and -S are equivalent)."""
    c = np.abs(np.asarray(n) @ np.asarray(S, dtype=float))
    return np.arccos(np.minimum(c, 1.0))


def _axis(model, S):
    if S is not None:
        return np.asarray(S, dtype=float)
    if hasattr(model, "direction"):
        return np.asarray(model.direction, dtype=float)
    params = getattr(model, "params", None)
    if params is not None and hasattr(params, "direction"):
        return np.asarray(params.direction, dtype=float)
    return np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# surfaces


@dataclass
class SurfaceSamples:
    """Scalar directional measure sampled on a set of unit directions."""

    kind: str
    directions: np.ndarray
    values: np.ndarray
    polar: np.ndarray
    alternative: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def to_rows(self):
        rows = []
        for k in range(len(self.values)):
            row = [*self.directions[k], self.polar[k], self.values[k]]
            if self.alternative is not None:
                row.append(self.alternative[k])
            rows.append(row)
        return rows

    def header(self):
        cols = ["n1", "n2", "n3", "polar", self.kind]
        if self.alternative is not None:
            cols.append(self.kind + "_linear_response")
        return cols


def stiffness_compliance(hess_F):
    """Rank-revealing pseudo-inverse of the 9x9 stiffness with diagnostics.

    At a stress-free reference state the infinitesimal rotations span a null
    space of d2psi/dFdF, so the inverse is always taken on its range.
    """
    A = 0.5 * (hess_F + hess_F.T)
    U, s, Vt = np.linalg.svd(A)
    cut = RANK_RTOL * s[0] if s[0] > 0 else 0.0
    keep = s > cut
    rank = int(np.sum(keep))
    inv_s = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    comp = (Vt.T * inv_s) @ U.T
    cond = float(s[0] / s[keep][-1]) if rank else np.inf
    info = {"rank": rank, "condition": cond, "pseudo_inverse": rank < 9, "singular_values": s.tolist()}
    if rank < 9:
        log.info("stiffness has rank %d; using the pseudo-inverse (condition %.3g on its range)", rank, cond)
    return comp, info


def elastic_surface(model, directions=None, S=None) -> SurfaceSamples:
    """E(n) = 1 / ((n x n) : inverse(d2psi/dFdF) : (n x n)) at F = 1, B = 0."""
    directions = fibonacci_sphere() if directions is None else np.asarray(directions, dtype=float)
    hF, _ = second_derivatives(model, np.eye(3), np.zeros(3))
    comp, info = stiffness_compliance(hF)
    N = np.einsum("ki,kj->kij", directions, directions).reshape(-1, 9)
    denom = np.einsum("ka,ab,kb->k", N, comp, N)
    values = 1.0 / denom
    return SurfaceSamples("E", directions, values, polar_angle(directions, _axis(model, S)), None, info)


def magnetic_surface(model, directions=None, S=None) -> SurfaceSamples:
    """chi(n) = n . (1 - mu0 J F^-T d2psi/dBdB F^-1) . n at F = 1, B = 0.

    ``alternative`` holds the linear-response reading 1 / (mu0 n . d2psi/dBdB . n) - 1.
    """
    directions = fibonacci_sphere() if directions is None else np.asarray(directions, dtype=float)
    _, hB = second_derivatives(model, np.eye(3), np.zeros(3))
    hB = 0.5 * (hB + hB.T)
    nn = np.einsum("ki,ij,kj->k", directions, hB, directions)
    values = 1.0 - MU0 * nn
    alt = 1.0 / (MU0 * nn) - 1.0
    return SurfaceSamples("chi", directions, values, polar_angle(directions, _axis(model, S)), alt, {})


def polar_profile(model, kind, polar, S=None, azimuth=0.0):
    """Surface values along one meridian (polar angles in rad)."""
    S = _axis(model, S)
    d = directions_at(S, polar, np.full(np.shape(polar), azimuth))
    fn = elastic_surface if kind == "E" else magnetic_surface
    return fn(model, d, S).values


def azimuthal_variation(model, kind, polar, n_azimuth=16, S=None) -> float:
    """max |v - mean| / |mean| over a full circle of azimuths at fixed polar angle."""
    S = _axis(model, S)
    a = np.linspace(0.0, 2.0 * np.pi, n_azimuth, endpoint=False)
    d = directions_at(S, np.full(n_azimuth, polar), a)
    fn = elastic_surface if kind == "E" else magnetic_surface
    v = fn(model, d, S).values
    return float(np.max(np.abs(v - v.mean())) / abs(v.mean()))


def interior_maximum(polar, values):
    """(index, is_interior_stationary): arg max of a sampled profile and whether it is a
    strict interior maximum (neighbours on both sides lower)."""
    k = int(np.argmax(values))
    interior = 0 < k < len(values) - 1 and values[k - 1] < values[k] and values[k + 1] < values[k]
    return k, bool(interior)


# ---------------------------------------------------------------------------
# magnetization curves and m-h angles


@dataclass
class MagnetizationCurve:
    b: np.ndarray
    m: np.ndarray
    direction: np.ndarray
    monotonicity: np.ndarray  # bool per grid interval
    concavity: np.ndarray  # bool per interior grid point
    saturation: np.ndarray  # bool per grid point
    tolerance: float
    m_s: float

    def counts(self, b_lo=-np.inf, b_hi=np.inf) -> dict:
        """Violation counts restricted to grid points/intervals inside [b_lo, b_hi]."""
        b = self.b
        pt = (b >= b_lo) & (b <= b_hi)
        iv = pt[1:] & pt[:-1]
        cv = pt[2:] & pt[1:-1] & pt[:-2]
        return {
            "monotonicity": int(np.sum(self.monotonicity & iv)),
            "concavity": int(np.sum(self.concavity & cv)),
            "saturation": int(np.sum(self.saturation & pt)),
            "max_m": float(np.max(self.m[pt])) if np.any(pt) else float("nan"),
        }


def magnetization_curve(model, direction, b_grid, m_s=200e3, rel_tol=1e-6) -> MagnetizationCurve:
    """|m| versus |B| along ``direction`` at F = 1 with finite-difference constraint flags."""
    b = np.asarray(b_grid, dtype=float)
    if b.ndim != 1 or b.size < 3:
        raise ValueError("b_grid must be a 1-d grid with at least three points")
    steps = np.diff(b)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(abs(steps[0]), 1.0):
        raise ValueError("b_grid must be uniform and increasing")
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    B = b[:, None] * n
    F = np.broadcast_to(np.eye(3), (b.size, 3, 3))
    fs = derived_fields(model, F, B)
    m = np.sqrt(np.sum(fs.m * fs.m, axis=-1))
    tol = rel_tol * m_s
    d1 = np.diff(m)
    d2 = m[2:] - 2.0 * m[1:-1] + m[:-2]
    return MagnetizationCurve(b, m, n, d1 < -tol, d2 > tol, m > m_s + tol, tol, m_s)


def mh_angle_map(model, polar, magnitudes, S=None, azimuth=0.0, min_norm=1e-12):
    """Angle between m and h (rad) on a (polar x magnitude) grid at F = 1; NaN where undefined."""
    S = _axis(model, S)
    polar = np.asarray(polar, dtype=float)
    mags = np.asarray(magnitudes, dtype=float)
    d = directions_at(S, polar, np.full(polar.shape, azimuth))
    B = (d[:, None, :] * mags[None, :, None]).reshape(-1, 3)
    fs = derived_fields(model, np.broadcast_to(np.eye(3), (B.shape[0], 3, 3)), B)
    mn = np.linalg.norm(fs.m, axis=-1)
    hn = np.linalg.norm(fs.h, axis=-1)
    ok = (mn > min_norm) & (hn > min_norm)
    c = np.sum(fs.m * fs.h, axis=-1) / np.where(ok, mn * hn, 1.0)
    ang = np.where(ok, np.arccos(np.clip(c, -1.0, 1.0)), np.nan)
    return ang.reshape(polar.size, mags.size)


# ---------------------------------------------------------------------------
# validation battery


@dataclass(frozen=True)
class ScanConfig:
    n_states: int = 100_000
    stretch: tuple = (0.2, 5.0)
    J: tuple = (0.9, 1.1)
    b_max: float = 10.0
    seed: int = 0
    growth_J: tuple = (0.01, 100.0)
    growth_B: float = 20.0
    ray_points: int = 200
    curve_step: float = 0.05
    curve_b_max: float = 20.0
    curve_polar_deg: tuple = (0.0, 45.0, 90.0)
    m_s: float = 200e3
    chunk: int = 20_000

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise KeyError(f"unknown scan key(s): {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)


def energy(model, F, B):
    if hasattr(model, "energy"):
        return model.energy(F, B)
    return model.evaluate(F, B)[0]


def scan_states(cfg: ScanConfig):
    """Random states: principal stretches in ``cfg.stretch`` with det in ``cfg.J``,
    random principal frames, |B| uniform in [0, b_max] along uniform random directions."""
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.stretch
    lam = np.empty((0, 3))
    while lam.shape[0] < cfg.n_states:
        k = 2 * (cfg.n_states - lam.shape[0]) + 16
        l12 = rng.uniform(lo, hi, size=(k, 2))
        J = rng.uniform(*cfg.J, size=k)
        l3 = J / (l12[:, 0] * l12[:, 1])
        ok = (l3 >= lo) & (l3 <= hi)
        lam = np.concatenate([lam, np.column_stack([l12[ok], l3[ok]])])
    lam = lam[: cfg.n_states]
    Q = random_rotations(rng, cfg.n_states)
    F = np.einsum("nij,nj,nkj->nik", Q, lam, Q)
    u = rng.normal(size=(cfg.n_states, 3))
    u /= np.linalg.norm(u, axis=1)[:, None]
    B = rng.uniform(0.0, cfg.b_max, size=cfg.n_states)[:, None] * u
    return F, B


def _ray_check(psi):
    """Energy on a ray from the reference state: the end value must be finite,
    positive and the largest along the ray."""
    end = float(psi[-1])
    ok = bool(np.all(np.isfinite(psi)) and end > 0.0 and end >= float(np.max(psi)))
    return ok, end


def growth_checks(model, cfg: ScanConfig, S=None):
    S = _axis(model, S)
    out = {}
    for Jt in cfg.growth_J:
        J = np.geomspace(1.0, Jt, cfg.ray_points)
        F = (J ** (1.0 / 3.0))[:, None, None] * np.eye(3)
        psi = energy(model, F, np.zeros((J.size, 3)))
        ok, end = _ray_check(psi)
        out[f"J={Jt:g}"] = {"passed": ok, "psi": end}
    b = np.linspace(0.0, cfg.growth_B, cfg.ray_points)
    psi = energy(model, np.broadcast_to(np.eye(3), (b.size, 3, 3)), b[:, None] * S)
    ok, end = _ray_check(psi)
    out[f"B={cfg.growth_B:g}T"] = {"passed": ok, "psi": end}
    return out


def positivity_scan(model, cfg: ScanConfig):
    F, B = scan_states(cfg)
    psi = np.concatenate(
        [energy(model, F[i : i + cfg.chunk], B[i : i + cfg.chunk]) for i in range(0, cfg.n_states, cfg.chunk)]
    )
    neg = psi < 0.0
    k = int(np.argmin(psi))
    return {
        "n_states": int(cfg.n_states),
        "negative_count": int(np.sum(neg)),
        "negative_fraction": float(np.mean(neg)),
        "worst_psi": float(psi[k]),
        "worst_F": F[k].tolist(),
        "worst_B": B[k].tolist(),
    }


@dataclass
class ValidationReport:
    growth: dict
    magnetic_growth: dict
    positivity: dict
    extrapolation: dict

    def to_dict(self):
        return asdict(self)


def validate_model(model, cfg: ScanConfig | None = None, S=None) -> ValidationReport:
    cfg = ScanConfig() if cfg is None else cfg
    S = _axis(model, S)
    g = growth_checks(model, cfg, S)
    mag_key = f"B={cfg.growth_B:g}T"
    magnetic = g.pop(mag_key)
    grid = np.arange(0.0, cfg.curve_b_max + 0.5 * cfg.curve_step, cfg.curve_step)
    extrap = {}
    for deg in cfg.curve_polar_deg:
        n = directions_at(S, np.radians(deg), 0.0)
        c = magnetization_curve(model, n, grid, cfg.m_s)
        extrap[f"{deg:g}deg"] = {
            "[0,2.2]T": c.counts(0.0, 2.2),
            "[2,4]T": c.counts(2.0, 4.0),
            "(4,{:g}]T".format(cfg.curve_b_max): c.counts(4.0 + 1e-12, cfg.curve_b_max),
        }
    return ValidationReport(g, magnetic, positivity_scan(model, cfg), extrap)


# ---------------------------------------------------------------------------
# writers


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])


def write_surface_csv(path, surface: SurfaceSamples):
    write_csv(path, surface.header(), surface.to_rows())


def write_curve_csv(path, curves):
    """One row per (curve, grid point); ``curves`` maps a label (polar angle in deg) to a curve."""
    rows = []
    for label, c in curves.items():
        for k in range(c.b.size):
            rows.append([float(label), c.b[k], c.m[k]])
    write_csv(path, ["polar_deg", "B", "m"], rows)


def write_angle_map_csv(path, polar, magnitudes, angles):
    rows = [[p, b, angles[i, j]] for i, p in enumerate(polar) for j, b in enumerate(magnitudes)]
    write_csv(path, ["polar", "B", "angle"], rows)


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True, allow_nan=True)
        fh.write("\n")
