"""Experiment configuration: YAML files with key-value groups, CLI flags win."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

ENGINES = ("closed", "lindblad", "sa")

DEFAULT_POINTS_PER_DECADE = 24


def default_dt(engine: str, t_f: float, n_spins: int) -> float:
    """Engine step-size rules; callers may override with anything tighter."""
    if engine == "closed":
        return min(t_f / 100, 1e-3)
    if engine == "lindblad":
        return min(t_f / 2000, 1e-2)
    if engine == "sa":
        return min(t_f / 2000, 0.1 / n_spins)
    raise ValueError(f"unknown engine {engine!r}")


def log_grid(start: float, stop: float, per_decade: int = DEFAULT_POINTS_PER_DECADE) -> list[float]:
    """Log-spaced t_f grid with a fixed density of points per decade."""
    if not 0 < start < stop:
        raise ValueError(f"need 0 < start < stop, got {start}, {stop}")
    decades = math.log10(stop / start)
    n = max(2, int(round(decades * per_decade)) + 1)
    return [start * 10 ** (decades * i / (n - 1)) for i in range(n)]


@dataclass(frozen=True)
class RunTask:
    """One independent annealing run; picklable for the worker pool."""

    engine: str
    n_spins: int
    p: int
    gamma: float
    t_f: float
    dt: float
    n_samples: int
    beta: float | None = None
    eta_g2: float | None = None
    omega_c: float | None = None
    nu: float | None = None
    lamb_shift: bool | None = None
    bin_tol: float | None = None
    t0_temperature: float | None = None
    tf_temperature: float | None = None


@dataclass
class ExperimentConfig:
    engine: str = "closed"
    n_spins: int = 8
    p: int = 2
    gamma: float = 1.0
    t_f: list[float] = field(default_factory=list)
    beta: list[float] = field(default_factory=lambda: [10.0])
    eta_g2: list[float] = field(default_factory=lambda: [0.0])
    omega_c: float = 10.0
    nu: float = 1.0
    lamb_shift: bool = True
    t0_temperature: float = 2.0
    tf_temperature: float = 0.1
    dt: float | None = None
    bin_tol: float = 1e-9
    n_samples: int = 200
    out: str = "results.csv"
    workers: int | None = None
    seed: int | None = None

    def validate(self) -> None:
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.n_spins < 1:
            raise ValueError(f"n_spins must be >= 1, got {self.n_spins}")
        if self.p < 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.t_f:
            raise ValueError("t_f grid is empty; give schedule.t_f or schedule.t_f_range")
        if any(t <= 0 for t in self.t_f):
            raise ValueError("t_f values must be positive")
        if sorted(self.t_f) != list(self.t_f):
            raise ValueError("t_f grid must be sorted ascending")
        if self.engine == "lindblad":
            if not self.beta or any(not b > 0 for b in self.beta):
                raise ValueError("lindblad runs need beta > 0 (inf allowed)")
            if not self.eta_g2 or any(g < 0 for g in self.eta_g2):
                raise ValueError("lindblad runs need eta_g2 >= 0")
            if self.omega_c <= 0:
                raise ValueError(f"omega_c must be positive, got {self.omega_c}")
        if self.engine == "sa":
            if self.tf_temperature < 0 or self.t0_temperature <= self.tf_temperature:
                raise ValueError(
                    f"sa runs need T0 > Tf >= 0, got T0={self.t0_temperature}, "
                    f"Tf={self.tf_temperature}"
                )
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.bin_tol <= 0:
            raise ValueError(f"bin_tol must be positive, got {self.bin_tol}")
        if self.n_samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.n_samples}")

    def tasks(self) -> list[RunTask]:
        """Expand the (beta, eta_g2, t_f) grid into independent runs."""
        self.validate()
        runs: list[RunTask] = []
        if self.engine == "closed":
            for t_f in self.t_f:
                runs.append(self._task(t_f))
        elif self.engine == "lindblad":
            for beta in self.beta:
                for eta_g2 in self.eta_g2:
                    for t_f in self.t_f:
                        runs.append(self._task(t_f, beta=beta, eta_g2=eta_g2))
        else:
            for t_f in self.t_f:
                runs.append(self._task(t_f))
        return runs

    def _task(self, t_f: float, beta: float | None = None, eta_g2: float | None = None) -> RunTask:
        dt = self.dt if self.dt is not None else default_dt(self.engine, t_f, self.n_spins)
        common = dict(
            engine=self.engine, n_spins=self.n_spins, p=self.p, gamma=self.gamma,
            t_f=t_f, dt=dt, n_samples=self.n_samples,
        )
        if self.engine == "lindblad":
            return RunTask(
                **common, beta=beta, eta_g2=eta_g2, omega_c=self.omega_c, nu=self.nu,
                lamb_shift=self.lamb_shift, bin_tol=self.bin_tol,
            )
        if self.engine == "sa":
            return RunTask(
                **common, t0_temperature=self.t0_temperature,
                tf_temperature=self.tf_temperature,
            )
        return RunTask(**common)


def _parse_beta(value: Any) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        return float(value)
    return float(value)


def _as_list(value: Any, parse=float) -> list:
    if isinstance(value, (list, tuple)):
        return [parse(v) for v in value]
    return [parse(value)]


def _parse_flag(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        if value.lower() in ("on", "true", "yes", "1"):
            return True
        if value.lower() in ("off", "false", "no", "0"):
            return False
    raise ValueError(f"expected on/off, got {value!r}")


def config_from_mapping(data: dict[str, Any]) -> ExperimentConfig:
    """Build a config from the nested key-value groups of a YAML file."""
    cfg = ExperimentConfig()
    if "engine" in data:
        cfg.engine = str(data["engine"])
    model = data.get("model", {})
    cfg.n_spins = int(model.get("n_spins", cfg.n_spins))
    cfg.p = int(model.get("p", cfg.p))
    cfg.gamma = float(model.get("gamma", cfg.gamma))
    schedule = data.get("schedule", {})
    if "t_f" in schedule:
        cfg.t_f = _as_list(schedule["t_f"])
    elif "t_f_range" in schedule:
        rng = schedule["t_f_range"]
        cfg.t_f = log_grid(
            float(rng["start"]), float(rng["stop"]),
            int(rng.get("per_decade", DEFAULT_POINTS_PER_DECADE)),
        )
    bath = data.get("bath", {})
    if "beta" in bath:
        cfg.beta = _as_list(bath["beta"], _parse_beta)
    if "eta_g2" in bath:
        cfg.eta_g2 = _as_list(bath["eta_g2"])
    cfg.omega_c = float(bath.get("omega_c", cfg.omega_c))
    cfg.nu = float(bath.get("nu", cfg.nu))
    if "lamb_shift" in bath:
        cfg.lamb_shift = _parse_flag(bath["lamb_shift"])
    sa_group = data.get("sa", {})
    cfg.t0_temperature = float(sa_group.get("T0", cfg.t0_temperature))
    cfg.tf_temperature = float(sa_group.get("Tf", cfg.tf_temperature))
    numerics = data.get("numerics", {})
    if numerics.get("dt") is not None:
        cfg.dt = float(numerics["dt"])
    cfg.bin_tol = float(numerics.get("bin_tol", cfg.bin_tol))
    cfg.n_samples = int(numerics.get("samples", cfg.n_samples))
    output = data.get("output", {})
    cfg.out = str(output.get("csv", cfg.out))
    if data.get("workers") is not None:
        cfg.workers = int(data["workers"])
    if data.get("seed") is not None:
        cfg.seed = int(data["seed"])
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config root must be a mapping, got {type(data).__name__}")
    return config_from_mapping(data)


def apply_overrides(cfg: ExperimentConfig, overrides: dict[str, Any]) -> ExperimentConfig:
    """Apply CLI flag overrides on top of a loaded config; flags win."""
    out = replace(cfg)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == "t_f":
            if isinstance(value, str):
                out.t_f = [float(v) for v in value.split(",")]
            else:
                out.t_f = _as_list(value)
        elif key == "t_f_range":
            start, stop, per_decade = str(value).split(":")
            out.t_f = log_grid(float(start), float(stop), int(per_decade))
        elif key == "beta":
            out.beta = [_parse_beta(v) for v in str(value).split(",")]
        elif key == "eta_g2":
            out.eta_g2 = [float(v) for v in str(value).split(",")]
        elif key == "lamb_shift":
            out.lamb_shift = _parse_flag(value)
        elif hasattr(out, key):
            current = getattr(out, key)
            if isinstance(current, bool):
                setattr(out, key, _parse_flag(value))
            elif key in ("workers", "seed", "n_spins", "p", "n_samples"):
                setattr(out, key, int(value))
            elif key in ("engine", "out"):
                setattr(out, key, str(value))
            else:
                setattr(out, key, float(value))
        else:
            raise ValueError(f"unknown override {key!r}")
    return out
