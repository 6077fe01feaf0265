"""Experiment configuration read from a flat TOML file.

Every key is optional; see :class:`ExperimentConfig` for defaults. Example::

    a = [1.4142, 1.7320]
    kappa = 1.0
    mass = 1.0
    g_coeffs = [1.0]
    s = 6
    epsilons = [1e-3, 5e-4]
    J_max = 8
    grid = 32
    T_max = 1e4
    seeds = [0]
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dispersion import ModelParams
from .lattice import TorusShape

__all__ = ["ExperimentConfig", "load_config", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    """All knobs of the command line experiments.

    Attributes
    ----------
    a : anisotropy vector ``a = nu^2`` (its length fixes the dimension).
    integrator : ``"reduced"`` (Lawson RK4 on the ``w`` ball) or ``"strang"``
        (split step on the wave function).
    h : step of the reduced integrator.
    dt : Strang step; ``None`` selects ``0.1 / omega`` at the largest grid mode.
    sample_dt : time between recorded samples.
    drift_T_factor : drift runs integrate up to ``drift_T_factor / epsilon``.
    N : cutoff override; ``None`` selects ``epsilon^(-1/(d-1))``.
    nonlinear : switch the nonlinearity off for control runs.
    """

    a: tuple[float, ...] = (2.0, 3.0)
    kappa: float = 1.0
    mass: float = 1.0
    g_coeffs: tuple[float, ...] = (1.0,)
    s: float | None = None
    epsilons: tuple[float, ...] = (1e-3, 5e-4)
    J_max: int = 8
    grid: int = 32
    integrator: str = "reduced"
    h: float = 0.02
    dt: float | None = None
    T_max: float = 1e4
    sample_dt: float = 1.0
    drift_T_factor: float = 10.0
    N: float | None = None
    seeds: tuple[int, ...] = (0,)
    profile_J0: int = 2
    profile_decay: float = 0.0
    nonlinear: bool = True
    modified_energy: bool = True
    guard_factor: float = 100.0
    # divisor campaign
    divisor_J_max: int = 40
    divisor_shapes: int = 20
    divisor_seed: int = 0
    report_threshold: float | None = None
    mc_samples: int = 100_000
    mc_triple: tuple = ((1, -1, -1), (2, 0), (1, 1), (1, -1))
    mc_decades: float = 6.0
    mc_points: int = 25
    out_dir: str = "results"
    threads: int = 1

    def __post_init__(self):
        self.a = tuple(float(v) for v in self.a)
        self.g_coeffs = tuple(float(v) for v in self.g_coeffs)
        self.epsilons = tuple(float(v) for v in self.epsilons)
        self.seeds = tuple(int(v) for v in self.seeds)
        self.mc_triple = (tuple(int(v) for v in self.mc_triple[0]),) + tuple(
            tuple(int(v) for v in j) for j in self.mc_triple[1:]
        )
        if self.s is None:
            self.s = 6.0 if self.d <= 2 else 8.0
        self.validate()

    @property
    def d(self) -> int:
        return len(self.a)

    @property
    def shape(self) -> TorusShape:
        return TorusShape(self.a)

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.kappa, self.mass, self.g_coeffs)

    def validate(self) -> None:
        self.shape
        self.params
        if self.grid < 4 * self.J_max:
            raise ValueError(f"grid={self.grid} must be at least 4*J_max={4 * self.J_max}")
        if self.grid & (self.grid - 1):
            raise ValueError("grid size must be a power of two")
        if self.integrator not in ("reduced", "strang"):
            raise ValueError("integrator must be 'reduced' or 'strang'")
        if any(not (e > 0) for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if not self.h > 0 or not self.sample_dt > 0 or not self.T_max > 0:
            raise ValueError("h, sample_dt and T_max must be positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def cutoff(self, epsilon: float) -> float:
        if self.N is not None:
            return float(self.N)
        return float(epsilon ** (-1.0 / (self.d - 1))) if self.d > 1 else math.inf

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) and f.name != "mc_triple" else v
        out["mc_triple"] = [list(t) for t in self.mc_triple]
        return out

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read a TOML file (flat keys) and apply keyword overrides."""
    data: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    if "dim" in data:
        dim = int(data.pop("dim"))
        if "a" in data and len(data["a"]) != dim:
            raise ValueError("dim does not match the length of a")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)
