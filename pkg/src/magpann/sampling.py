"""Load-state sampling, load paths, invariant filtering and oracle datasets."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import ConfigurationError, ContractViolation, InvalidDeformationError
from .invariants import compute_invariants
from .materials import OracleModel, OracleParams, derived_fields
from .tensors import det, principal_stretches, rotation_from_angles

log = logging.getLogger(__name__)

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])
TWO_PI = 2.0 * np.pi

CSV_HEADER = (
    ["kind", "path", "step"]
    + [f"F{i}{j}" for i in range(1, 4) for j in range(1, 4)]
    + [f"B{i}" for i in range(1, 4)]
    + [f"S{i}{j}" for i in range(1, 4) for j in range(1, 4)]
    + [f"m{i}" for i in range(1, 4)]
)


@dataclass(frozen=True)
class SamplingRanges:
    """Parameter box for terminal load states. ``mechanical`` drops the field parameters."""

    lam1: tuple = (0.95, 1.04)
    lam2: tuple = (0.95, 1.04)
    J: tuple = (0.995, 1.005)
    theta1: tuple = (0.0, TWO_PI)
    theta2: tuple = (0.0, TWO_PI)
    phi1: tuple = (0.0, 0.5 * np.pi)
    phi2: tuple = (0.0, TWO_PI)
    B: tuple = (0.5, 2.2)
    n_paths: int = 64
    increments: int = 20
    eps_tol: float = 0.45
    mechanical: bool = False
    oversample: int = 10

    def __post_init__(self):
        for name in ("lam1", "lam2", "J", "theta1", "theta2", "phi1", "phi2", "B"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigurationError(f"sampling range {name} has min > max")
        if self.lam1[0] <= 0 or self.lam2[0] <= 0 or self.J[0] <= 0:
            raise ConfigurationError("stretches and J must be positive")
        if self.increments < 1 or self.n_paths < 1 or self.oversample < 1:
            raise ConfigurationError("increments, n_paths and oversample must be >= 1")
        if not 0.0 <= self.eps_tol <= 1.0:
            raise ConfigurationError("eps_tol is a fraction in [0, 1]")

    @classmethod
    def mechanical_default(cls) -> "SamplingRanges":
        return cls(n_paths=28, mechanical=True, B=(0.0, 0.0))

    @classmethod
    def coupled_default(cls) -> "SamplingRanges":
        return cls()

    @property
    def stretch_range(self):
        return min(self.lam1[0], self.lam2[0]), max(self.lam1[1], self.lam2[1])

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown sampling key(s): {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class LoadPaths:
    """Terminal states and their increments, F (N, M, 3, 3), B (N, M, 3)."""

    F: np.ndarray
    B: np.ndarray
    counts: dict = field(default_factory=dict)

    @property
    def n_paths(self):
        return self.F.shape[0]

    @property
    def increments(self):
        return self.F.shape[1]


def _scale(u, rng_):
    lo, hi = rng_
    return lo + (hi - lo) * u


def states_from_parameters(lam1, lam2, J, t1, t2, p1=None, p2=None, Bmag=None, S=E3):
    """F = Q diag(l1, l2, J/(l1 l2)) Q^T with Q = R_e2(t2) R_e1(t1); B = |B| R(p1, p2) S."""
    lam1, lam2, J = map(np.asarray, (lam1, lam2, J))
    n = lam1.shape[0]
    Q = rotation_from_angles("euler-two-axis", (t1, t2))
    D = np.zeros((n, 3, 3))
    D[:, 0, 0] = lam1
    D[:, 1, 1] = lam2
    D[:, 2, 2] = J / (lam1 * lam2)
    F = Q @ D @ np.swapaxes(Q, -1, -2)
    if Bmag is None:
        return F, np.zeros((n, 3))
    QB = rotation_from_angles("polar-azimuth", (p1, p2))
    B = np.asarray(Bmag)[:, None] * np.einsum("nij,j->ni", QB, S)
    return F, B


def sample_load_states(ranges: SamplingRanges, seed, n=None):
    """Latin-hypercube terminal states; deterministic in ``seed``."""
    n = ranges.n_paths if n is None else int(n)
    if n < 1:
        raise ConfigurationError("need at least one sample")
    d = 5 if ranges.mechanical else 8
    rng = np.random.default_rng(seed)
    u = qmc.LatinHypercube(d=d, seed=rng).random(n)
    lam1 = _scale(u[:, 0], ranges.lam1)
    lam2 = _scale(u[:, 1], ranges.lam2)
    J = _scale(u[:, 2], ranges.J)
    t1 = _scale(u[:, 3], ranges.theta1)
    t2 = _scale(u[:, 4], ranges.theta2)
    if ranges.mechanical:
        return states_from_parameters(lam1, lam2, J, t1, t2)
    return states_from_parameters(
        lam1, lam2, J, t1, t2, _scale(u[:, 5], ranges.phi1), _scale(u[:, 6], ranges.phi2), _scale(u[:, 7], ranges.B)
    )


def build_load_paths(F_term, B_term, increments):
    """F_m = 1 + (m/M)(F_M - 1), B_m = (m/M) B_M for m = 1..M; rejects paths with det <= 0."""
    F_term = np.asarray(F_term, dtype=float)
    B_term = np.asarray(B_term, dtype=float)
    M = int(increments)
    if M < 1:
        raise ConfigurationError("increments must be >= 1")
    t = np.arange(1, M + 1) / M
    F = np.eye(3) + t[None, :, None, None] * (F_term[:, None] - np.eye(3))
    B = t[None, :, None] * B_term[:, None, :]
    ok = np.all(det(F) > 0.0, axis=1)
    if not np.all(ok):
        for k in np.flatnonzero(~ok):
            log.warning("load path %d rejected: non-positive det(F) along the path", k)
        if not np.any(ok):
            raise InvalidDeformationError("every load path crosses det(F) <= 0")
    return F[ok], B[ok]


def stretch_mask(F, stretch_range, tol=1e-12):
    lo, hi = stretch_range
    lam = principal_stretches(F)
    return np.all((lam >= lo - tol) & (lam <= hi + tol), axis=-1)


def redundancy_mask(I, eps_tol):
    """Greedy pass in input order; keep a state if its normalized Chebyshev distance
    to every kept state exceeds ``eps_tol``. Constant invariants are ignored and
    ``eps_tol <= 0`` disables the pass."""
    I = np.asarray(I, dtype=float)
    n = I.shape[0]
    if eps_tol <= 0.0 or n == 0:
        return np.ones(n, dtype=bool)
    lo, hi = I.min(axis=0), I.max(axis=0)
    span = hi - lo
    active = span > 1e-14 * np.maximum(1.0, np.abs(hi))
    X = (I[:, active] - lo[active]) / span[active]
    keep = np.zeros(n, dtype=bool)
    kept = np.empty((0, X.shape[1]))
    for i in range(n):
        if kept.shape[0] == 0 or np.all(np.max(np.abs(kept - X[i]), axis=1) > eps_tol):
            keep[i] = True
            kept = np.vstack([kept, X[i]])
    return keep


def filter_states(F, B, eps_tol, stretch_range, S=E3):
    """Stretch-range exclusion followed by the redundancy filter; returns a boolean mask."""
    F = np.asarray(F, dtype=float)
    B = np.asarray(B, dtype=float)
    mask = stretch_mask(F, stretch_range)
    idx = np.flatnonzero(mask)
    if idx.size:
        I = compute_invariants(F[idx], B[idx], S)
        red = redundancy_mask(I, eps_tol)
        mask[idx[~red]] = False
    return mask


def sample_paths(ranges: SamplingRanges, seed) -> LoadPaths:
    """Oversampled terminals -> filter -> first ``n_paths`` survivors -> increments.

    When fewer than ``n_paths`` terminals survive the redundancy filter at the
    configured tolerance, the tolerance is relaxed geometrically (x0.8) until
    enough survive; the tolerance actually used is reported in ``counts``.
    """
    n_cand = ranges.n_paths * ranges.oversample
    F, B = sample_load_states(ranges, seed, n_cand)
    in_range = stretch_mask(F, ranges.stretch_range)
    eps = float(ranges.eps_tol)
    while True:
        mask = filter_states(F, B, eps, ranges.stretch_range)
        if mask.sum() >= ranges.n_paths or eps < 1e-3:
            break
        eps *= 0.8
    idx = np.flatnonzero(mask)
    counts = {
        "candidates": int(n_cand),
        "after_stretch_exclusion": int(in_range.sum()),
        "eps_tol_requested": float(ranges.eps_tol),
        "eps_tol_effective": eps,
        "after_redundancy_filter": int(idx.size),
    }
    if eps != ranges.eps_tol:
        log.info("redundancy tolerance relaxed from %.3g to %.3g", ranges.eps_tol, eps)
    if idx.size < ranges.n_paths:
        log.warning("only %d of %d requested paths survive filtering", idx.size, ranges.n_paths)
    idx = idx[: ranges.n_paths]
    Fp, Bp = build_load_paths(F[idx], B[idx], ranges.increments)
    counts["paths"] = int(Fp.shape[0])
    counts["states"] = int(Fp.shape[0] * Fp.shape[1])
    return LoadPaths(Fp, Bp, counts)


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """Flat tuple arrays. ``kind`` is 'mech' or 'coup'; sigma holds the mechanical Cauchy stress."""

    kind: np.ndarray
    path: np.ndarray
    step: np.ndarray
    F: np.ndarray
    B: np.ndarray
    sigma: np.ndarray
    m: np.ndarray
    train_paths: dict = field(default_factory=dict)  # kind -> sorted list of training path ids
    dropped: list = field(default_factory=list)

    def __len__(self):
        return self.F.shape[0]

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask)
        return Dataset(
            self.kind[mask], self.path[mask], self.step[mask], self.F[mask], self.B[mask],
            self.sigma[mask], self.m[mask], dict(self.train_paths), list(self.dropped),
        )

    def split_mask(self, split):
        train = np.array(
            [int(p) in set(self.train_paths.get(k, ())) for k, p in zip(self.kind, self.path)], dtype=bool
        )
        if split == "train":
            return train
        if split == "test":
            return ~train
        raise ContractViolation("split is 'train' or 'test'")

    def select(self, kind=None, split=None) -> "Dataset":
        mask = np.ones(len(self), dtype=bool)
        if kind is not None:
            mask &= self.kind == kind
        if split is not None:
            mask &= self.split_mask(split)
        return self.subset(mask)

    @staticmethod
    def concatenate(parts) -> "Dataset":
        parts = list(parts)
        tp, dropped = {}, []
        for p in parts:
            tp.update(p.train_paths)
            dropped.extend(p.dropped)
        return Dataset(
            *(np.concatenate([getattr(p, a) for p in parts]) for a in ("kind", "path", "step", "F", "B", "sigma", "m")),
            train_paths=tp,
            dropped=dropped,
        )

    def to_csv(self, comment: str | None = None) -> str:
        """CSV text; an optional ``# comment`` line precedes the header."""
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(len(self)):
            nums = np.concatenate([self.F[i].ravel(), self.B[i], self.sigma[i].ravel(), self.m[i]])
            w.writerow([self.kind[i], int(self.path[i]), int(self.step[i])] + [format(float(x), ".17g") for x in nums])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, train_paths=None) -> "Dataset":
        rows = list(csv.reader(_strip_comments(text)))
        if not rows or rows[0] != CSV_HEADER:
            raise ConfigurationError("dataset CSV header does not match the expected columns")
        body = rows[1:]
        if not body:
            raise ConfigurationError("dataset CSV has no rows")
        num = np.array([[float(x) for x in r[3:]] for r in body])
        return cls(
            np.array([r[0] for r in body]),
            np.array([int(r[1]) for r in body]),
            np.array([int(r[2]) for r in body]),
            num[:, 0:9].reshape(-1, 3, 3),
            num[:, 9:12],
            num[:, 12:21].reshape(-1, 3, 3),
            num[:, 21:24],
            dict(train_paths or {}),
        )


def _strip_comments(text):
    return io.StringIO("".join(line for line in io.StringIO(text) if not line.startswith("#")))


PATHS_HEADER = CSV_HEADER[:15]


def paths_to_csv(paths: LoadPaths, kind: str, comment: str | None = None) -> str:
    """Load paths as rows ``kind,path,step,F11..F33,B1..B3`` (step counts from 1)."""
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PATHS_HEADER)
    N, M = paths.F.shape[:2]
    for i in range(N):
        for k in range(M):
            nums = np.concatenate([paths.F[i, k].ravel(), paths.B[i, k]])
            w.writerow([kind, i, k + 1] + [format(float(x), ".17g") for x in nums])
    return buf.getvalue()


def paths_from_csv(text: str) -> dict:
    """kind -> LoadPaths from :func:`paths_to_csv` output (several kinds may be concatenated)."""
    rows = [r for r in csv.reader(_strip_comments(text)) if r and r != PATHS_HEADER]
    if not rows:
        raise ConfigurationError("load-path CSV has no rows")
    out = {}
    for kind in sorted({r[0] for r in rows}):
        sel = [r for r in rows if r[0] == kind]
        path = np.array([int(r[1]) for r in sel])
        step = np.array([int(r[2]) for r in sel])
        N, M = path.max() + 1, step.max()
        if len(sel) != N * M:
            raise ConfigurationError(f"load paths of kind {kind!r} are not a full N x M grid")
        num = np.array([[float(x) for x in r[3:15]] for r in sel])
        order = np.lexsort((step, path))
        num = num[order]
        out[kind] = LoadPaths(num[:, :9].reshape(N, M, 3, 3), num[:, 9:12].reshape(N, M, 3))
    return out


def split_paths(n_paths, seed, train_fraction=0.7):
    """Path-level split; returns the sorted training path ids."""
    rng = np.random.default_rng(seed)
    n_train = int(round(train_fraction * n_paths))
    return sorted(int(i) for i in rng.permutation(n_paths)[:n_train])


def generate_dataset(paths: LoadPaths, oracle: OracleParams, split_seed, kind) -> Dataset:
    """Evaluate the oracle on every increment; B = 0 paths yield elastic stress only."""
    if kind not in ("mech", "coup"):
        raise ContractViolation("kind is 'mech' or 'coup'")
    model = OracleModel(oracle)
    N, M = paths.F.shape[:2]
    F = paths.F.reshape(-1, 3, 3)
    B = paths.B.reshape(-1, 3)
    if kind == "mech":
        B = np.zeros_like(B)
    path_id = np.repeat(np.arange(N), M)
    step = np.tile(np.arange(1, M + 1), N)
    dropped = []
    keep = np.ones(F.shape[0], dtype=bool)
    sig = np.zeros_like(F)
    mag = np.zeros_like(B)
    try:
        fs = derived_fields(model, F, B)
        sig, mag = fs.sigma, fs.m
        bad = ~(np.all(np.isfinite(sig), axis=(1, 2)) & np.all(np.isfinite(mag), axis=1))
    except (InvalidDeformationError, FloatingPointError):
        bad = np.ones(F.shape[0], dtype=bool)
        for i in range(F.shape[0]):
            try:
                fs = derived_fields(model, F[i : i + 1], B[i : i + 1])
                sig[i], mag[i] = fs.sigma[0], fs.m[0]
                bad[i] = False
            except (InvalidDeformationError, FloatingPointError):
                pass
    for i in np.flatnonzero(bad):
        dropped.append({"kind": kind, "path": int(path_id[i]), "step": int(step[i]), "reason": "oracle evaluation failed"})
        log.warning("dropping %s tuple path=%d step=%d", kind, path_id[i], step[i])
    keep &= ~bad
    if kind == "mech":
        mag = np.zeros_like(mag)
    return Dataset(
        np.full(int(keep.sum()), kind),
        path_id[keep],
        step[keep],
        F[keep],
        B[keep],
        sig[keep],
        mag[keep],
        {kind: split_paths(N, split_seed)},
        dropped,
    )


# ---------------------------------------------------------------------------
# additional purely magnetic states


@dataclass(frozen=True)
class AdditionalSetConfig:
    n_phi: int = 6
    n_b: int = 9
    b_min: float = 2.0
    b_max: float = 4.0

    def __post_init__(self):
        if self.n_phi < 1 or self.n_b < 1 or not self.b_max >= self.b_min:
            raise ConfigurationError("invalid additional-set configuration")

    @property
    def delta_b(self):
        return (self.b_max - self.b_min) / (self.n_b - 1) if self.n_b > 1 else 0.0

    @property
    def magnitudes(self):
        return np.linspace(self.b_min, self.b_max, self.n_b)

    @property
    def angles(self):
        return np.linspace(0.0, 0.5 * np.pi, self.n_phi)


def in_plane_reference(S):
    """Unit vector normal to S in the plane of S and e1 (e2 if S is parallel to e1)."""
    S = np.asarray(S)
    for e in (E1, E2):
        t = e - np.sum(e * S) * S
        n2 = np.sum(t * t)
        if abs(n2.real) > 1e-16:
            return t / np.sqrt(n2)
    raise ContractViolation("degenerate preferred direction")


def build_additional_set(S, config: AdditionalSetConfig = AdditionalSetConfig()):
    """States B_ij = b_j (S cos phi_i + t sin phi_i) with F = 1, shape (n_phi, n_b, 3).

    phi_i is the angle to S; the set of directions is the same as with the
    roles of sine and cosine exchanged because the angle grid is symmetric on [0, pi/2].
    """
    S = np.asarray(S)
    t = in_plane_reference(S)
    phi = config.angles
    d = np.cos(phi)[:, None] * S[None, :] + np.sin(phi)[:, None] * t[None, :]
    return config.magnitudes[None, :, None] * d[:, None, :]
