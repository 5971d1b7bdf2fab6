"""Experiment configuration: strict JSON with defaults filled on load."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import jsonschema

from ..diagnostics import BIAS_THRESHOLD, MODE_WINDOW
from ..proposals import ProposalError, RepulsiveConfig
from ..samplers import Budget, SamplerError, SamplerSpec

PMC_NAMES = ("pmc", "pmc-r")

DEFAULTS: dict[str, Any] = {
    "name": "experiment",
    "target": {"kind": "toy"},
    "particles": 10,
    "burn_in": 500,
    "pmc_burn_in": 100,
    "replicates": 20,
    "base_seed": 0,
    "thresholds": {"mode_window": MODE_WINDOW, "pmc_mode_window": 5, "bias": BIAS_THRESHOLD},
    "init": {"kind": "balanced", "mode": 0, "jitter": 1.0},
    "xi_grid": [],
    "aerosol": None,
    "workers": None,
    "lockstep": False,
    "timing": True,
    "out": "results",
}

AEROSOL_DEFAULTS: dict[str, Any] = {
    "data": None,
    "subsample_size": 2000,
    "subsample_seed": 0,
    "synth": {"n": 2000, "lambda": 0.4, "mu1": 1.0, "mu2": 3.0, "sigma1": 0.4, "sigma2": 0.6, "seed": 0},
    "blocks": {
        "mu": {"s": 25e-4, "h": 4e-4, "xi": 1e-48},
        "sigma": {"s": 2.25e-4, "h": 2.25e-4, "xi": 1e-48},
        "lambda": {"s": 1e-4, "h": 1e-4},
    },
}


class ConfigError(ValueError):
    pass


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    text = resources.files("hybridmc.schemas").joinpath(f"{name}.schema.json").read_text()
    return json.loads(text)


def schema_path(name: str) -> Path:
    return Path(str(resources.files("hybridmc.schemas").joinpath(f"{name}.schema.json")))


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in given.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass(frozen=True)
class AlgorithmConfig:
    """One algorithm entry: a chain sampler or a PMC variant."""

    name: str
    label: str = ""
    s: Any = None
    h: Any = None
    s2: Any = None
    xi: float = 0.0
    k: Optional[float] = None
    nu: float = 0.0
    M: Optional[int] = None

    def __post_init__(self):
        if not self.label:
            object.__setattr__(self, "label", self.name)

    @property
    def is_pmc(self) -> bool:
        return self.name in PMC_NAMES

    def sampler_spec(self) -> SamplerSpec:
        return SamplerSpec(self.name, s=self.s, h=self.h, xi=self.xi, s2=self.s2)

    def repulsion(self) -> RepulsiveConfig:
        return RepulsiveConfig(xi=self.xi, nu=self.nu if self.name == "pmc-r" else 0.0)

    def to_dict(self) -> dict:
        out = {"name": self.name, "label": self.label}
        for key in ("s", "h", "s2", "k", "M"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.xi:
            out["xi"] = self.xi
        if self.nu:
            out["nu"] = self.nu
        return out


@dataclass
class ExperimentConfig:
    """Validated experiment settings. Build with ``from_dict`` or ``load_config``."""

    algorithms: list
    budget: Budget
    name: str = "experiment"
    target: dict = field(default_factory=lambda: {"kind": "toy"})
    particles: int = 10
    burn_in: int = 500
    pmc_burn_in: int = 100
    replicates: int = 20
    base_seed: int = 0
    mode_window: int = MODE_WINDOW
    pmc_mode_window: int = 5
    bias_threshold: float = BIAS_THRESHOLD
    init: dict = field(default_factory=lambda: dict(DEFAULTS["init"]))
    xi_grid: list = field(default_factory=list)
    aerosol: Optional[dict] = None
    workers: Optional[int] = None
    lockstep: bool = False
    timing: bool = True
    out: str = "results"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        validator = jsonschema.Draft202012Validator(load_schema("config"))
        errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
        if errors:
            e = errors[0]
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            raise ConfigError(f"config key {where!r}: {e.message} (constraint {e.validator!r})")
        d = _merge(DEFAULTS, raw)
        if d["aerosol"] is not None:
            d["aerosol"] = _merge(AEROSOL_DEFAULTS, d["aerosol"])
        algos = []
        for i, a in enumerate(d["algorithms"]):
            algo = AlgorithmConfig(**a)
            try:
                if algo.is_pmc:
                    if algo.k is None:
                        raise ConfigError("PMC needs the bandwidth multiplier 'k'")
                    algo.repulsion()
                elif d["aerosol"] is None:
                    # aerosol runs take their scales from the block settings
                    algo.sampler_spec()
            except (SamplerError, ProposalError) as exc:
                raise ConfigError(f"config key 'algorithms/{i}': {exc}") from None
            algos.append(algo)
        labels = [a.label for a in algos]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"config key 'algorithms': duplicate labels {labels}")
        if "dim" in d and d["target"].get("dim", d["dim"]) != d["dim"]:
            raise ConfigError("config key 'dim': disagrees with target dim")
        th = d["thresholds"]
        return cls(
            algorithms=algos,
            budget=Budget(**d["budget"]),
            name=d["name"],
            target=d["target"],
            particles=d["particles"],
            burn_in=d["burn_in"],
            pmc_burn_in=d["pmc_burn_in"],
            replicates=d["replicates"],
            base_seed=d["base_seed"],
            mode_window=th["mode_window"],
            pmc_mode_window=th["pmc_mode_window"],
            bias_threshold=th["bias"],
            init=d["init"],
            xi_grid=list(d["xi_grid"]),
            aerosol=d["aerosol"],
            workers=d["workers"],
            lockstep=d["lockstep"],
            timing=d["timing"],
            out=d["out"],
        )

    def to_dict(self) -> dict:
        budget = {k: v for k, v in (("iterations", self.budget.iterations), ("seconds", self.budget.seconds)) if v is not None}
        return {
            "name": self.name,
            "target": copy.deepcopy(self.target),
            "algorithms": [a.to_dict() for a in self.algorithms],
            "particles": self.particles,
            "budget": budget,
            "burn_in": self.burn_in,
            "pmc_burn_in": self.pmc_burn_in,
            "replicates": self.replicates,
            "base_seed": self.base_seed,
            "thresholds": {"mode_window": self.mode_window, "pmc_mode_window": self.pmc_mode_window, "bias": self.bias_threshold},
            "init": copy.deepcopy(self.init),
            "xi_grid": list(self.xi_grid),
            "workers": self.workers,
            "lockstep": self.lockstep,
            "timing": self.timing,
            "out": self.out,
            **({"aerosol": copy.deepcopy(self.aerosol)} if self.aerosol is not None else {}),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def with_overrides(self, seed=None, iterations=None, seconds=None, out=None, workers=None) -> "ExperimentConfig":
        d = self.to_dict()
        if seed is not None:
            d["base_seed"] = seed
        if iterations is not None or seconds is not None:
            d["budget"] = {k: v for k, v in (("iterations", iterations), ("seconds", seconds)) if v is not None}
        if out is not None:
            d["out"] = out
        if workers is not None:
            d["workers"] = workers
        return ExperimentConfig.from_dict(d)


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {str(path)!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {str(path)!r} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(raw)
