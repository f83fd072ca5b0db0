"""Experiment configuration: YAML ingestion, canonical parameter names, fingerprints."""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from ..errors import ConfigError, ModelError, ThresholdError
from ..network import NetworkSpec, Permutation, chain_loss

TASKS = ("steady", "evolve", "verify", "gap")

# canonical parameter names accepted in the `spec` section and as sweep axes
PARAMS = {
    "model": "effective | full | bidirectional | lossy_effective",
    "N": "number of qubit pairs",
    "r": "two-mode squeezing parameter",
    "g": "amplifier gain (requires kappa or beta)",
    "beta": "amplifier bandwidth kappa/gamma (sets kappa_A = kappa_B)",
    "kappa": "symmetric amplifier decay rate",
    "kappa_A": "amplifier decay rate into waveguide A",
    "kappa_B": "amplifier decay rate into waveguide B",
    "Delta": "detuning step, delta_A,i = (i-1) Delta",
    "Delta_over_kappa": "detuning step in units of kappa",
    "delta_A": "explicit detuning vector of waveguide A (a scalar applies to every qubit)",
    "delta_A_over_kappa": "detuning vector of waveguide A in units of kappa",
    "delta_B": "explicit detuning vector of waveguide B (overrides pattern)",
    "pattern": "parallel | reversed | explicit image list of P, delta_B = -P delta_A",
    "gamma": "qubit decay rate (all qubits)",
    "gamma_A": "per-qubit decay rates in A",
    "gamma_B": "per-qubit decay rates in B",
    "gamma_phi": "dephasing rate",
    "gamma_prime": "decay rate into non-guided modes",
    "gamma_R": "right-moving emission rate",
    "gamma_L": "left-moving emission rate",
    "gamma_L_over_gamma_R": "chirality ratio",
    "epsilon": "chain loss, epsilon_ij = epsilon |i - j| in both waveguides",
    "epsilon_A": "loss matrix of waveguide A",
    "epsilon_B": "loss matrix of waveguide B",
    "n_max": "photon cutoff of the full model",
}


@dataclass(frozen=True)
class SolverOptions:
    rtol: float = 1e-8
    atol: float = 1e-10
    t_max: float = 1e4
    steady_tol: float = 1e-9
    steady_method: str = "auto"  # auto | nullspace | residual_iter | longtime | analytic
    t_end: float = 150.0
    record: int = 1501
    method: str = "krylov"
    n_max: int | None = None
    block_convention: str = "rungs"
    entropies: bool = True
    memory_cap_gib: float = 4.0
    leak_limit: float = 1e-3

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverOptions":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown solver options {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ExperimentConfig:
    spec: dict
    task: str = "steady"
    axes: tuple = ()  # ((name, (v1, v2, ...)), ...)
    out_dir: str = "results"
    formats: tuple = ("csv", "json")
    solver: SolverOptions = field(default_factory=SolverOptions)
    workers: int = 1
    name: str = "experiment"
    description: str = ""

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        for key in self.spec:
            if key not in PARAMS:
                raise ConfigError(f"unknown spec field {key!r}")
        for name, grid in self.axes:
            if name not in PARAMS:
                raise ConfigError(f"sweep axis {name!r} is not a spec field")
            if len(grid) == 0:
                raise ConfigError(f"sweep axis {name!r} has an empty grid")
        for f in self.formats:
            if f not in ("csv", "json"):
                raise ConfigError(f"unknown output format {f!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def points(self) -> list[dict]:
        """Cartesian product of the sweep axes applied to the base spec (first axis slowest)."""
        if not self.axes:
            return [dict(self.spec)]
        names = [a for a, _ in self.axes]
        out = []
        for combo in itertools.product(*(grid for _, grid in self.axes)):
            p = dict(self.spec)
            p.update(zip(names, combo))
            out.append(p)
        return out

    def canonical(self) -> dict:
        return {
            "spec": self.spec,
            "task": self.task,
            "axes": [[a, list(g)] for a, g in self.axes],
            "solver": asdict(self.solver),
        }

    def fingerprint(self) -> str:
        return fingerprint(self.canonical())

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _canon(x):
    if isinstance(x, dict):
        return {str(k): _canon(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_canon(v) for v in x]
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return float(x)
    if hasattr(x, "item"):
        return _canon(x.item())
    return x


def fingerprint(obj) -> str:
    text = json.dumps(_canon(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def point_fingerprint(params: dict, task: str, solver: SolverOptions) -> str:
    return fingerprint({"params": params, "task": task, "solver": asdict(solver)})


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(raw or {})


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    known = {"name", "description", "task", "spec", "sweep", "solver", "outputs", "workers"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    spec = dict(raw.get("spec") or {})
    sweep = raw.get("sweep") or {}
    if not isinstance(sweep, dict):
        raise ConfigError("sweep must map parameter names to value lists")
    axes = []
    for name, grid in sweep.items():
        if isinstance(grid, dict):  # {start, stop, num}
            try:
                n = int(grid["num"])
                a, b = float(grid["start"]), float(grid["stop"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"range for {name!r} needs start, stop, num") from exc
            grid = [a + (b - a) * k / (n - 1) for k in range(n)] if n > 1 else [a]
        if not isinstance(grid, (list, tuple)):
            grid = [grid]
        axes.append((name, tuple(grid)))
    outputs = raw.get("outputs") or {}
    fmts = outputs.get("formats", ["csv", "json"])
    if isinstance(fmts, str):
        fmts = [fmts]
    return ExperimentConfig(
        spec=spec,
        task=raw.get("task", "steady"),
        axes=tuple(axes),
        out_dir=str(outputs.get("dir", "results")),
        formats=tuple(fmts),
        solver=SolverOptions.from_dict(raw.get("solver")),
        workers=int(raw.get("workers", 1)),
        name=str(raw.get("name", "experiment")),
        description=str(raw.get("description", "")),
    )


def dump_config(cfg: ExperimentConfig) -> str:
    raw = {
        "name": cfg.name,
        "description": cfg.description,
        "task": cfg.task,
        "spec": cfg.spec,
        "sweep": {a: list(g) for a, g in cfg.axes},
        "solver": asdict(cfg.solver),
        "outputs": {"dir": cfg.out_dir, "formats": list(cfg.formats)},
        "workers": cfg.workers,
    }
    return yaml.safe_dump(_canon(raw), sort_keys=False)


# parameter resolution -------------------------------------------------------------


def _vector(x, n, name):
    if x is None:
        return None
    if isinstance(x, (int, float)):
        return tuple([float(x)] * n)
    v = tuple(float(e) for e in x)
    if len(v) != n:
        raise ConfigError(f"{name} must have length N = {n}")
    return v


def spec_from_params(params: dict, solver: SolverOptions | None = None) -> NetworkSpec:
    """Resolve canonical parameters into a NetworkSpec."""
    p = dict(params)
    try:
        N = int(p.get("N", 1))
        model = p.get("model", "effective")
        gamma = float(p.get("gamma", 1.0))
        kw: dict = {"N": N, "model": model}
        kap_a = p.get("kappa_A", p.get("kappa"))
        kap_b = p.get("kappa_B", p.get("kappa"))
        if "beta" in p:
            kap_a = kap_b = float(p["beta"]) * gamma
        if kap_a is not None:
            kw["kappa_A"], kw["kappa_B"] = float(kap_a), float(kap_b)
        if "g" in p:
            kw["g"] = float(p["g"])
        else:
            kw["r"] = float(p.get("r", 1.0))
        if "delta_A" in p:
            kw["delta_A"] = _vector(p["delta_A"], N, "delta_A")
        elif "delta_A_over_kappa" in p:
            if kap_a is None:
                raise ConfigError("delta_A_over_kappa requires kappa or beta")
            kap = math.sqrt(float(kap_a) * float(kap_b))
            kw["delta_A"] = tuple(kap * x for x in _vector(p["delta_A_over_kappa"], N, "delta_A"))
        else:
            step = float(p.get("Delta", 0.0))
            if "Delta_over_kappa" in p:
                if kap_a is None:
                    raise ConfigError("Delta_over_kappa requires kappa or beta")
                step = float(p["Delta_over_kappa"]) * math.sqrt(kw["kappa_A"] * kw["kappa_B"])
            kw["delta_A"] = tuple(i * step for i in range(N))
        pattern = p.get("pattern", "parallel")
        if "delta_B" in p:
            kw["delta_B"] = _vector(p["delta_B"], N, "delta_B")
        elif pattern in ("parallel", "identity", None):
            pass
        elif pattern in ("reversed", "reversal"):
            kw["permutation"] = Permutation.reversal(N)
        else:
            kw["permutation"] = Permutation(tuple(pattern))
        kw["gamma_A"] = _vector(p.get("gamma_A", gamma), N, "gamma_A")
        kw["gamma_B"] = _vector(p.get("gamma_B", gamma), N, "gamma_B")
        for key in ("gamma_phi", "gamma_prime"):
            if key in p:
                kw[key] = float(p[key])
        gr = float(p.get("gamma_R", gamma))
        kw["gamma_R"] = gr
        if "gamma_L_over_gamma_R" in p:
            kw["gamma_L"] = float(p["gamma_L_over_gamma_R"]) * gr
        elif "gamma_L" in p:
            kw["gamma_L"] = float(p["gamma_L"])
        if "epsilon" in p:
            kw["epsilon_A"] = kw["epsilon_B"] = chain_loss(float(p["epsilon"]), N)
        for key in ("epsilon_A", "epsilon_B"):
            if key in p:
                kw[key] = p[key]
        n_max = p.get("n_max")
        if solver is not None and solver.n_max is not None:
            n_max = solver.n_max
        if n_max is not None:
            kw["n_max"] = int(n_max)
        if model == "full" and n_max is None:
            from ..liouvillian import default_n_max

            probe = NetworkSpec(**{**kw, "model": "effective"})
            kw["n_max"] = default_n_max(probe)
        return NetworkSpec(**kw)
    except ThresholdError:
        raise
    except (ModelError, ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid network parameters: {exc}") from exc
