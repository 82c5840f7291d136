"""Test-set R^2 against the quasi-Newton iteration budget for one restart.

    python scripts/iteration_budget.py --budgets 500 1000 2000 5000
"""

from __future__ import annotations

import argparse
import json
from dataclasses import asdict, dataclass, field, replace

from magpann.cli import load_dataset
from magpann.config import load_config
from magpann.training import prepare, r2_table, train_two_stage


@dataclass
class BudgetConfig:
    config: str = "configs/default.json"
    budgets: list = field(default_factory=lambda: [500, 1000, 2000, 5000])
    restart: int = 0
    out: str = "iteration_budget.json"


def run(cfg: BudgetConfig):
    run_cfg = load_config(cfg.config).with_overrides()
    ds = load_dataset(run_cfg)
    data = prepare(ds)
    test = ds.select(split="test")
    results = []
    for n in cfg.budgets:
        tc = replace(run_cfg.training, lbfgs_iters=int(n))
        model, rep = train_two_stage(data, tc, cfg.restart)
        r2 = None if rep["diverged"] else r2_table(model, test)
        results.append({"lbfgs_iters": int(n), "wall_time": rep["wall_time"], "r2_test": r2})
        print(json.dumps(results[-1]), flush=True)
    with open(cfg.out, "w") as fh:
        json.dump({"config": asdict(cfg), "results": results}, fh, indent=1)
    return results


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default=BudgetConfig.config)
    p.add_argument("--budgets", type=int, nargs="+")
    p.add_argument("--restart", type=int, default=0)
    p.add_argument("--out", default=BudgetConfig.out)
    a = p.parse_args()
    cfg = BudgetConfig(config=a.config, restart=a.restart, out=a.out)
    if a.budgets:
        cfg.budgets = a.budgets
    run(cfg)


if __name__ == "__main__":
    main()
