"""Recovery of the preferred direction as a function of the initial angle to the true axis.

Each run starts the two-stage training from a fixed initial direction at a chosen
angle to S (the network weights come from the same seed every time), so the only
varied quantity is the starting angle. Writes one CSV row per start angle.

    python scripts/direction_threshold.py --angles 10 30 45 50 55 70 85 --out threshold.csv
"""

from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass, field, replace

import numpy as np

from magpann.analysis import directions_at
from magpann.config import load_config
from magpann.cli import load_dataset
from magpann.pann import PANNModel, direction_from_angles
from magpann.training import angle_to, fit_model_scales, prepare, restart_seed, train_two_stage


@dataclass
class ThresholdConfig:
    config: str = "configs/default.json"
    angles_deg: list = field(default_factory=lambda: [10.0, 30.0, 45.0, 50.0, 55.0, 70.0, 85.0])
    azimuth_deg: float = 30.0
    adam_iters: int | None = None  # None keeps the run config's budget
    lbfgs_iters: int | None = None
    weight_seed: int = 0
    out: str = "direction_threshold.csv"


def angles_for(S, polar_deg, azimuth_deg):
    """(phi1, phi2) of the unit vector at the given polar angle to S."""
    d = directions_at(S, np.radians(polar_deg), np.radians(azimuth_deg))
    d = d if d[2] >= 0 else -d  # phi1 lives in [0, pi/2]
    return float(np.arccos(np.clip(d[2], -1, 1))), float(np.mod(np.arctan2(d[1], d[0]), 2 * np.pi))


def run(cfg: ThresholdConfig):
    run_cfg = load_config(cfg.config).with_overrides()
    tc = run_cfg.training
    if cfg.adam_iters is not None:
        tc = replace(tc, adam_iters=cfg.adam_iters)
    if cfg.lbfgs_iters is not None:
        tc = replace(tc, lbfgs_iters=cfg.lbfgs_iters)
    data = prepare(load_dataset(run_cfg))
    S = run_cfg.oracle.direction
    norm_el, norm_cmv, lam = fit_model_scales(data, tc)
    rows = []
    for deg in cfg.angles_deg:
        rng = np.random.default_rng(restart_seed(tc.seed, cfg.weight_seed))
        phi = angles_for(S, deg, cfg.azimuth_deg)
        model = PANNModel.initialize(rng, norm_el, norm_cmv, phi=phi, lambda_gro=lam)
        model, rep = train_two_stage(data, tc, cfg.weight_seed, model=model)
        final = None if rep["diverged"] else angle_to(model.direction, S)
        train_loss = None if rep["diverged"] else rep["final"]["train"]["cmv"]
        rows.append([deg, angle_to(direction_from_angles(*phi), S), final, train_loss])
        print(f"start {deg:5.1f} deg -> final {final if final is None else round(final, 3)} deg", flush=True)
    with open(cfg.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["requested_deg", "initial_deg", "final_deg", "train_loss"])
        w.writerows(rows)
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=ThresholdConfig.config)
    p.add_argument("--angles", type=float, nargs="+")
    p.add_argument("--adam-iters", type=int)
    p.add_argument("--lbfgs-iters", type=int)
    p.add_argument("--out", default=ThresholdConfig.out)
    a = p.parse_args()
    cfg = ThresholdConfig(config=a.config, adam_iters=a.adam_iters, lbfgs_iters=a.lbfgs_iters, out=a.out)
    if a.angles:
        cfg.angles_deg = a.angles
    run(cfg)


if __name__ == "__main__":
    main()
