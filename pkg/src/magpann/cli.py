"""Command-line pipeline: sample -> generate -> train -> eval -> surface/magcurve/validate, plus predict.

Usage: ``magpann <subcommand> --config run.json [--out DIR] [--threads N] [--seed S]``.
Exit status 0 on success, 1 on numerical/domain failures, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import time

import numpy as np

from . import analysis as A
from .config import KEY_SAMPLE, KEY_SPLIT, KIND_INDEX, RunConfig, derive_seed, load_config
from .errors import ConfigurationError
from .materials import derived_fields
from .pann import PANNModel, direction_from_angles
from .sampling import Dataset, generate_dataset, paths_from_csv, paths_to_csv, sample_paths
from .training import TrainingDiverged, angle_to, loss_table, multi_restart_select, prepare, r2_table

log = logging.getLogger("magpann")

COMMANDS = ("sample", "generate", "train", "eval", "surface", "magcurve", "validate", "predict")
SUCCESS_DEG = 2.0


class RunWriter:
    """Writes outputs into the run directory and keeps their sha256 for the manifest."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.dir = cfg.out
        self.hash = cfg.sha256()
        self.files = {}
        os.makedirs(self.dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.dir, name)

    def text(self, name, text, track=True):
        data = text.encode()
        with open(self.path(name), "wb") as fh:
            fh.write(data)
        if track:
            self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name, obj, track=True):
        obj = {"config_sha256": self.hash, **obj}
        self.text(name, json.dumps(obj, indent=1, sort_keys=True) + "\n", track)

    def csv(self, name, header, rows):
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.hash}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(float(v), ".17g") for v in r])
        self.text(name, buf.getvalue())

    def finish(self, timing):
        self.text("config.json", json.dumps(self.cfg.to_dict(), indent=1, sort_keys=True) + "\n", track=False)
        # timing changes between runs; it is kept out of the manifest
        self.text("timing.json", json.dumps(timing, indent=1, sort_keys=True) + "\n", track=False)
        inputs = {}
        for k, path in sorted(self.cfg.inputs.items()):
            if os.path.exists(path):
                with open(path, "rb") as fh:
                    inputs[k] = hashlib.sha256(fh.read()).hexdigest()
        manifest = {
            "command": self.command,
            "seed": int(self.cfg.seed),
            "files": dict(sorted(self.files.items())),
            "inputs": inputs,
        }
        self.json("manifest.json", manifest, track=False)


# ---------------------------------------------------------------------------
# data plumbing


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise ConfigurationError(f"input file not found: {path}") from None


def _sample(cfg: RunConfig):
    paths, counts = {}, {}
    for kind, ranges in (("mech", cfg.mechanical), ("coup", cfg.coupled)):
        p = sample_paths(ranges, derive_seed(cfg.seed, KEY_SAMPLE, KIND_INDEX[kind]))
        paths[kind] = p
        counts[kind] = p.counts
    return paths, counts


def _generate(cfg: RunConfig, paths) -> Dataset:
    parts = [
        generate_dataset(paths[k], cfg.oracle, derive_seed(cfg.seed, KEY_SPLIT, KIND_INDEX[k]), k)
        for k in ("mech", "coup")
        if k in paths
    ]
    return Dataset.concatenate(parts)


def _dataset_meta(ds: Dataset):
    return {
        "train_paths": {k: list(v) for k, v in sorted(ds.train_paths.items())},
        "dropped": ds.dropped,
        "tuples": {k: int(np.sum(ds.kind == k)) for k in ("mech", "coup")},
    }


def load_dataset(cfg: RunConfig) -> Dataset:
    """Dataset from ``inputs.dataset`` (CSV + sidecar JSON with the split) or regenerated."""
    src = cfg.inputs.get("dataset")
    if src is None:
        paths, _ = _sample(cfg)
        return _generate(cfg, paths)
    meta_path = os.path.splitext(src)[0] + ".json"
    meta = json.loads(_read(meta_path))
    if "train_paths" not in meta:
        raise ConfigurationError(f"{meta_path}: missing key train_paths")
    return Dataset.from_csv(_read(src), {k: list(v) for k, v in meta["train_paths"].items()})


def load_model(cfg: RunConfig) -> PANNModel:
    src = cfg.inputs.get("model", os.path.join(cfg.out, "model.json"))
    try:
        d = json.loads(_read(src))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{src}: not valid JSON ({exc})") from None
    return PANNModel.from_dict(d)


def _true_direction(cfg):
    return cfg.oracle.direction


# ---------------------------------------------------------------------------
# commands


def cmd_sample(cfg, w: RunWriter, threads):
    paths, counts = _sample(cfg)
    mech = paths_to_csv(paths["mech"], "mech", f"config_sha256={w.hash}")
    coup = paths_to_csv(paths["coup"], "coup").split("\n", 1)[1]  # drop the repeated header
    w.text("paths.csv", mech + coup)
    w.json("sampling.json", {"counts": counts})


def cmd_generate(cfg, w: RunWriter, threads):
    src = cfg.inputs.get("paths")
    if src is not None:
        paths, counts = paths_from_csv(_read(src)), {}
    else:
        paths, counts = _sample(cfg)
    ds = _generate(cfg, paths)
    w.text("dataset.csv", ds.to_csv(f"config_sha256={w.hash}"))
    w.json("dataset.json", {**_dataset_meta(ds), "sampling_counts": counts})


def _recovery(reports, S_true):
    rows = []
    for r in reports:
        init = angle_to(direction_from_angles(*r["phi_init"]), S_true)
        final = angle_to(np.asarray(r["direction"]), S_true) if not r.get("diverged") else None
        rows.append(
            {
                "restart": r["restart"],
                "initial_angle_deg": init,
                "final_angle_deg": final,
                "success": final is not None and final < SUCCESS_DEG,
            }
        )
    edges = np.arange(0.0, 91.0, 10.0)
    hist = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = [x for x in rows if lo <= x["initial_angle_deg"] < hi or (hi == 90.0 and x["initial_angle_deg"] == 90.0)]
        hist.append({"bin_deg": [lo, hi], "success": sum(x["success"] for x in sel), "failure": sum(not x["success"] for x in sel)})
    return {"threshold_deg": SUCCESS_DEG, "restarts": rows, "histogram": hist}


def _split_timing(reports):
    timing = []
    for r in reports:
        timing.append({"restart": r["restart"], "wall_time": r.pop("wall_time", None)})
    return timing


def cmd_train(cfg, w: RunWriter, threads):
    ds = load_dataset(cfg)
    data = prepare(ds)
    best, best_rep, reports = multi_restart_select(data, cfg.training, threads=threads)
    best.provenance = {**best.provenance, "config_sha256": w.hash}
    timing = _split_timing(reports)
    r2 = {
        "train": r2_table(best, ds.select(split="train")),
        "test": r2_table(best, ds.select(split="test")),
    }
    w.text("model.json", best.to_json())
    w.json(
        "report.json",
        {
            "seed": int(cfg.seed),
            "selected_restart": int(best_rep["restart"]),
            "final": best_rep["final"],
            "r2": r2,
            "phi": best.phi.tolist(),
            "direction": best.direction.tolist(),
            "angle_to_oracle_deg": angle_to(best.direction, _true_direction(cfg)),
            "direction_recovery": _recovery(reports, _true_direction(cfg)),
            "restarts": reports,
            "model_sha256": best.fingerprint(),
        },
    )
    return {"restarts": timing}


def cmd_eval(cfg, w: RunWriter, threads):
    model = load_model(cfg)
    ds = load_dataset(cfg)
    data = prepare(ds)
    out = {
        "r2": {
            "all": r2_table(model, ds),
            "train": r2_table(model, ds.select(split="train")),
            "test": r2_table(model, ds.select(split="test")),
        },
        "losses": loss_table(model, data, cfg.training),
        "model_sha256": model.fingerprint(),
    }
    w.json("eval.json", out)


def cmd_surface(cfg, w: RunWriter, threads):
    model = load_model(cfg)
    d = A.fibonacci_sphere(cfg.analysis.n_directions)
    summary = {}
    for kind, fn in (("E", A.elastic_surface), ("chi", A.magnetic_surface)):
        s = fn(model, d)
        w.csv(f"surface_{kind}.csv", s.header(), s.to_rows())
        polar = np.radians(np.arange(0.0, 90.01, 1.0))
        prof = A.polar_profile(model, kind, polar)
        k, interior = A.interior_maximum(polar, prof)
        summary[kind] = {
            "info": s.info,
            "profile_polar_deg": np.degrees(polar).tolist(),
            "profile": prof.tolist(),
            "argmax_polar_deg": float(np.degrees(polar[k])),
            "interior_maximum": interior,
            "azimuthal_variation": {
                f"{deg:g}": A.azimuthal_variation(model, kind, np.radians(deg)) for deg in (30.0, 52.0, 75.0)
            },
        }
    w.json("surface.json", summary)


def cmd_magcurve(cfg, w: RunWriter, threads):
    model = load_model(cfg)
    ac = cfg.analysis
    grid = np.arange(0.0, ac.curve_b_max + 0.5 * ac.curve_step, ac.curve_step)
    curves, counts = {}, {}
    for deg in ac.curve_polar_deg:
        n = A.directions_at(model.direction, np.radians(deg), 0.0)
        c = A.magnetization_curve(model, n, grid, cfg.training.m_s_mre)
        curves[deg] = c
        counts[f"{deg:g}"] = {"[0,2.2]T": c.counts(0.0, 2.2), "[2,4]T": c.counts(2.0, 4.0), "(4,max]T": c.counts(4.0 + 1e-12)}
    w.csv("magcurve.csv", ["polar_deg", "B", "m"], [[deg, b, m] for deg, c in curves.items() for b, m in zip(c.b, c.m)])
    pol = np.radians(ac.angle_polar_deg)
    ang = A.mh_angle_map(model, pol, ac.angle_magnitudes)
    w.csv(
        "mh_angle.csv",
        ["polar", "B", "angle"],
        [[p, b, ang[i, j]] for i, p in enumerate(pol) for j, b in enumerate(ac.angle_magnitudes)],
    )
    w.json("magcurve.json", {"violations": counts, "tolerance": 1e-6 * cfg.training.m_s_mre})


def cmd_validate(cfg, w: RunWriter, threads):
    model = load_model(cfg)
    rep = A.validate_model(model, cfg.analysis.scan)
    w.json("validation.json", rep.to_dict())


STATE_HEADER = [f"F{i}{j}" for i in range(1, 4) for j in range(1, 4)] + [f"B{i}" for i in range(1, 4)]


def _read_states(text):
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if not rows or rows[0][:12] != STATE_HEADER:
        raise ConfigurationError("states CSV must start with columns " + ",".join(STATE_HEADER))
    num = np.array([[float(x) for x in r[:12]] for r in rows[1:]], dtype=float)
    if num.size == 0:
        raise ConfigurationError("states CSV has no rows")
    return num[:, :9].reshape(-1, 3, 3), num[:, 9:12]


def cmd_predict(cfg, w: RunWriter, threads):
    model = load_model(cfg)
    src = cfg.inputs.get("states")
    if src is None:
        raise ConfigurationError("inputs.states: required for predict")
    F, B = _read_states(_read(src))
    fs = derived_fields(model, F, B)
    t9 = [f"{i}{j}" for i in range(1, 4) for j in range(1, 4)]
    v3 = ["1", "2", "3"]
    header = (
        ["psi"]
        + ["P" + c for c in t9]
        + ["H" + c for c in v3]
        + ["sigma_tot" + c for c in t9]
        + ["b" + c for c in v3]
        + ["h" + c for c in v3]
        + ["m" + c for c in v3]
        + ["sigma_pon" + c for c in t9]
        + ["sigma" + c for c in t9]
    )
    n = F.shape[0]
    cols = [
        fs.psi.reshape(n, 1),
        fs.P_tot.reshape(n, 9),
        fs.H,
        fs.sigma_tot.reshape(n, 9),
        fs.b,
        fs.h,
        fs.m,
        fs.sigma_pon.reshape(n, 9),
        fs.sigma.reshape(n, 9),
    ]
    w.csv("fields.csv", header, np.concatenate(cols, axis=1))


HANDLERS = {
    "sample": cmd_sample,
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "surface": cmd_surface,
    "magcurve": cmd_magcurve,
    "validate": cmd_validate,
    "predict": cmd_predict,
}


def build_parser():
    p = argparse.ArgumentParser(prog="magpann", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--out", help="output directory (overrides config and environment)")
    p.add_argument("--threads", type=int, default=1, help="worker processes for restarts")
    p.add_argument("--seed", type=int, help="global 64-bit seed (overrides config)")
    p.add_argument("--log-level", default="WARNING")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    t0 = time.perf_counter()
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigurationError("--seed must be an unsigned 64-bit integer")
        cfg = load_config(args.config).with_overrides(out=args.out, seed=args.seed)
        log.info("seed %d, config %s", cfg.seed, cfg.sha256())
        w = RunWriter(cfg, args.command)
        extra = HANDLERS[args.command](cfg, w, args.threads) or {}
        w.finish({"command": args.command, "wall_time": time.perf_counter() - t0, **extra})
    except (ConfigurationError, KeyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDiverged, ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
