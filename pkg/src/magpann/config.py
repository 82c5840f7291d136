"""Run configuration: one JSON file, validated section by section."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .analysis import ScanConfig
from .errors import ConfigurationError
from .materials import OracleParams
from .sampling import SamplingRanges
from .training import TrainConfig

OUT_ENV = "MAGPANN_OUT"

# spawn-key namespaces of the global seed
KEY_SAMPLE, KEY_SPLIT = 1, 2
KIND_INDEX = {"mech": 0, "coup": 1}


def derive_seed(seed: int, *key: int) -> np.random.SeedSequence:
    """Counter-based child of the global seed; independent of call order."""
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


@dataclass(frozen=True)
class AnalysisConfig:
    n_directions: int = 512
    curve_step: float = 0.05
    curve_b_max: float = 20.0
    curve_polar_deg: tuple = (0.0, 45.0, 90.0)
    angle_polar_deg: tuple = (0.0, 15.0, 30.0, 45.0, 60.0, 75.0, 90.0)
    angle_magnitudes: tuple = (0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0)
    scan: ScanConfig = field(default_factory=ScanConfig)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    out: str = "run"
    mechanical: SamplingRanges = field(default_factory=SamplingRanges.mechanical_default)
    coupled: SamplingRanges = field(default_factory=SamplingRanges.coupled_default)
    oracle: OracleParams = field(default_factory=OracleParams)
    training: TrainConfig = field(default_factory=TrainConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    inputs: dict = field(default_factory=dict)  # dataset, model, paths, states (file paths)

    def to_dict(self) -> dict:
        return {
            "seed": int(self.seed),
            "out": self.out,
            "mechanical": self.mechanical.to_dict(),
            "coupled": self.coupled.to_dict(),
            "oracle": self.oracle.to_dict(),
            "training": self.training.to_dict(),
            "analysis": self.analysis.to_dict(),
            "inputs": dict(self.inputs),
        }

    def canonical_json(self) -> str:
        """Hashed content: everything that determines results (not where files live)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("inputs")
        return json.dumps(_plain(d), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def with_overrides(self, out=None, seed=None) -> "RunConfig":
        cfg = self
        if seed is not None:
            cfg = replace(cfg, seed=int(seed))
        env = os.environ.get(OUT_ENV)
        if env:
            cfg = replace(cfg, out=env)
        if out is not None:
            cfg = replace(cfg, out=out)
        # training restarts draw from the same global seed
        return replace(cfg, training=replace(cfg.training, seed=int(cfg.seed)))


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def _section(cls, data, path, base=None):
    """Build dataclass ``cls`` from a dict; unknown keys and bad values name their key path."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected an object")
    known = {f.name for f in fields(cls)}
    for k in data:
        if k not in known:
            raise ConfigurationError(f"{path}.{k}: unknown key")
    kw = {}
    for k, v in data.items():
        if isinstance(v, list):
            v = tuple(v)
        kw[k] = v
    try:
        return replace(base, **kw) if base is not None else cls(**kw)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{path}: invalid value ({exc})") from None


_TOP = {"seed", "out", "mechanical", "coupled", "oracle", "training", "analysis", "inputs"}


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}") from None
    cfg = config_from_dict(raw)
    # relative input paths are taken relative to the config file
    base = os.path.dirname(os.path.abspath(path))
    inputs = {k: v if os.path.isabs(v) else os.path.normpath(os.path.join(base, v)) for k, v in cfg.inputs.items()}
    return replace(cfg, inputs=inputs)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("config: expected a JSON object")
    for k in raw:
        if k not in _TOP:
            raise ConfigurationError(f"{k}: unknown key")
    kw = {}
    if "seed" in raw:
        s = raw["seed"]
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2**64:
            raise ConfigurationError("seed: expected an unsigned 64-bit integer")
        kw["seed"] = s
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigurationError("out: expected a string")
        kw["out"] = raw["out"]
    if "mechanical" in raw:
        kw["mechanical"] = _section(SamplingRanges, raw["mechanical"], "mechanical", SamplingRanges.mechanical_default())
    if "coupled" in raw:
        kw["coupled"] = _section(SamplingRanges, raw["coupled"], "coupled", SamplingRanges.coupled_default())
    if "oracle" in raw:
        kw["oracle"] = _section(OracleParams, raw["oracle"], "oracle", OracleParams())
    if "training" in raw:
        kw["training"] = _section(TrainConfig, raw["training"], "training", TrainConfig())
    if "analysis" in raw:
        a = dict(raw["analysis"]) if isinstance(raw["analysis"], dict) else raw["analysis"]
        scan = None
        if isinstance(a, dict) and "scan" in a:
            scan = _section(ScanConfig, a.pop("scan"), "analysis.scan", ScanConfig())
        base = AnalysisConfig() if scan is None else AnalysisConfig(scan=scan)
        kw["analysis"] = _section(AnalysisConfig, a, "analysis", base)
    if "inputs" in raw:
        if not isinstance(raw["inputs"], dict) or not all(isinstance(v, str) for v in raw["inputs"].values()):
            raise ConfigurationError("inputs: expected an object of file paths")
        unknown = set(raw["inputs"]) - {"dataset", "model", "paths", "states"}
        if unknown:
            raise ConfigurationError(f"inputs.{sorted(unknown)[0]}: unknown key")
        kw["inputs"] = dict(raw["inputs"])
    return RunConfig(**kw)
