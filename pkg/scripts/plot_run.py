"""Figures from a run directory's CSV outputs (needs matplotlib; the package itself does not).

    python scripts/plot_run.py runs/default --out figures
"""

from __future__ import annotations

import argparse
import os
from dataclasses import dataclass

import numpy as np


@dataclass
class PlotConfig:
    run_dir: str
    out: str = "figures"
    dpi: int = 150


def _table(path):
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]])
    return {h: data[:, i] for i, h in enumerate(header)}


def plot(cfg: PlotConfig):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(cfg.out, exist_ok=True)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, kind in zip(axes, ("E", "chi")):
        t = _table(os.path.join(cfg.run_dir, f"surface_{kind}.csv"))
        ax.scatter(np.degrees(t["polar"]), t[kind], s=6)
        ax.set_xlabel("angle to preferred direction [deg]")
        ax.set_ylabel(kind)
    fig.tight_layout()
    fig.savefig(os.path.join(cfg.out, "surfaces.png"), dpi=cfg.dpi)

    t = _table(os.path.join(cfg.run_dir, "magcurve.csv"))
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for deg in np.unique(t["polar_deg"]):
        sel = t["polar_deg"] == deg
        ax.plot(t["B"][sel], t["m"][sel] / 1e3, label=f"{deg:g} deg")
    ax.axvspan(0, 2.2, color="0.9")
    ax.set_xlabel("|B| [T]")
    ax.set_ylabel("|m| [kA/m]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(cfg.out, "magnetization.png"), dpi=cfg.dpi)

    t = _table(os.path.join(cfg.run_dir, "mh_angle.csv"))
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    for b in np.unique(t["B"]):
        sel = t["B"] == b
        ax.plot(np.degrees(t["polar"][sel]), np.degrees(t["angle"][sel]), marker="o", label=f"{b:g} T")
    ax.set_xlabel("angle of B to preferred direction [deg]")
    ax.set_ylabel("angle(m, h) [deg]")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(os.path.join(cfg.out, "mh_angle.png"), dpi=cfg.dpi)
    plt.close("all")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("run_dir")
    p.add_argument("--out", default="figures")
    a = p.parse_args()
    plot(PlotConfig(a.run_dir, a.out))


if __name__ == "__main__":
    main()
