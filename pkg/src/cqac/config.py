"""Run configuration: YAML file -> validated, fully resolved :class:`RunConfig`.

Every block is optional and falls back to the defaults used for the reference
runs (50 x 45 grid on [-1, 1] x [-0.9, 0.9], sigma_tilde = 5, additive noise,
BiCGSTAB with tol 1e-4 and maxit 200). Unknown keys are rejected so that typos
do not silently fall back to defaults.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .analysis import NORM_FIELDS
from .detcont import ContinuationSettings
from .errors import CqacError
from .lyapunov import METHODS, LinearSolverConfig
from .noise import G_KINDS, NoiseSpec, spec_from_rule
from .workflows import branch_index

__all__ = [
    "ConfigError",
    "RUN_KINDS",
    "GridConfig",
    "ContinuationConfig",
    "SampleConfig",
    "NoiseConfig",
    "SolverConfig",
    "MCConfig",
    "FitConfig",
    "RunConfig",
    "load_config",
    "parse_config",
    "parse_method",
]

RUN_KINDS = ("det-continue", "cov-continue", "mc-validate", "fit-scaling", "solver-bench")


class ConfigError(CqacError, ValueError):
    """Invalid configuration; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _key(where: str, key: str) -> str:
    return f"{where}.{key}" if where else key


def _check_keys(block: Mapping, allowed, where: str):
    if not isinstance(block, Mapping):
        raise ConfigError(where, f"expected a mapping, got {type(block).__name__}")
    for k in block:
        if k not in allowed:
            raise ConfigError(_key(where, str(k)), "unknown key")


def _num(block: Mapping, key: str, where: str, default, kind=float):
    if key not in block or block[key] is None:
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        if isinstance(v, str):
            try:
                v = float(v)
            except ValueError:
                raise ConfigError(_key(where, key), f"expected a number, got {v!r}") from None
        else:
            raise ConfigError(_key(where, key), f"expected a number, got {v!r}")
    if kind is int:
        if float(v) != int(v):
            raise ConfigError(_key(where, key), f"expected an integer, got {v!r}")
        return int(v)
    return float(v)


def _bool(block: Mapping, key: str, where: str, default: bool) -> bool:
    v = block.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(_key(where, key), f"expected true/false, got {v!r}")
    return v


@dataclass(frozen=True)
class GridConfig:
    Lx: float = 1.0
    Ly: float = 0.9
    M: int = 50
    N: int = 45

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "GridConfig":
        d = d or {}
        _check_keys(d, {"Lx", "Ly", "M", "N"}, "grid")
        out = cls(
            Lx=_num(d, "Lx", "grid", 1.0),
            Ly=_num(d, "Ly", "grid", 0.9),
            M=_num(d, "M", "grid", 50, int),
            N=_num(d, "N", "grid", 45, int),
        )
        for k in ("Lx", "Ly"):
            if not getattr(out, k) > 0:
                raise ConfigError(f"grid.{k}", "must be positive")
        for k in ("M", "N"):
            if getattr(out, k) < 2:
                raise ConfigError(f"grid.{k}", "must be >= 2")
        return out


@dataclass(frozen=True)
class SampleConfig:
    """Parameter values at which a branch is sampled.

    Either an explicit ``mu`` list or ``linspace`` segments ``[start, stop, num]``;
    with ``relative: true`` the values are offsets from the branch's critical
    parameter (first branch point on Gamma0, first fold elsewhere).
    """

    mu: tuple[float, ...] = ()
    relative: bool = False

    @classmethod
    def from_dict(cls, d, where: str) -> "SampleConfig | None":
        if d is None:
            return None
        if isinstance(d, (list, tuple)):
            d = {"mu": list(d)}
        _check_keys(d, {"mu", "linspace", "relative"}, where)
        vals: list[float] = []
        if "mu" in d:
            if not isinstance(d["mu"], (list, tuple)) or not d["mu"]:
                raise ConfigError(f"{where}.mu", "expected a non-empty list of numbers")
            for i, v in enumerate(d["mu"]):
                vals.append(_num({"v": v}, "v", f"{where}.mu[{i}]", None))
        if "linspace" in d:
            segs = d["linspace"]
            if segs and not isinstance(segs[0], (list, tuple)):
                segs = [segs]
            for i, seg in enumerate(segs):
                if len(seg) != 3 or float(seg[2]) != int(seg[2]) or int(seg[2]) < 1:
                    raise ConfigError(f"{where}.linspace[{i}]", "expected [start, stop, num] with integer num >= 1")
                pts = np.linspace(float(seg[0]), float(seg[1]), int(seg[2]))
                for v in pts:
                    if not vals or abs(vals[-1] - v) > 1e-14:
                        vals.append(float(v))
        if not vals:
            raise ConfigError(where, "give 'mu' or 'linspace'")
        return cls(mu=tuple(vals), relative=_bool(d, "relative", where, False))


_SETTINGS_FIELDS = {f.name: f for f in fields(ContinuationSettings)}


@dataclass(frozen=True)
class ContinuationConfig:
    settings: ContinuationSettings = field(default_factory=lambda: ContinuationSettings(mu_min=-0.1, mu_max=4.0))
    branches: tuple[str, ...] = ("Gamma0", "Gamma1", "Gamma2", "Gamma3")
    branch: str = "Gamma0"
    mu_start: float = 0.0
    samples: SampleConfig | None = None

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "ContinuationConfig":
        d = d or {}
        _check_keys(d, {"settings", "branches", "branch", "mu_start", "mu_range", "samples"}, "continuation")
        s = dict(d.get("settings") or {})
        _check_keys(s, _SETTINGS_FIELDS, "continuation.settings")
        kw: dict[str, Any] = {"mu_min": -0.1, "mu_max": 4.0}
        for k, v in s.items():
            kind = int if _SETTINGS_FIELDS[k].type in ("int", int) else float
            if _SETTINGS_FIELDS[k].type in ("bool", bool):
                kw[k] = _bool(s, k, "continuation.settings", True)
            else:
                kw[k] = _num(s, k, "continuation.settings", None, kind)
        if "mu_range" in d:
            r = d["mu_range"]
            if not isinstance(r, (list, tuple)) or len(r) != 2:
                raise ConfigError("continuation.mu_range", "expected [mu_min, mu_max]")
            kw["mu_min"], kw["mu_max"] = float(r[0]), float(r[1])
            if kw["mu_min"] >= kw["mu_max"]:
                raise ConfigError("continuation.mu_range", "mu_min must be below mu_max")
        try:
            settings = ContinuationSettings(**kw)
        except ValueError as exc:
            raise ConfigError("continuation.settings", str(exc)) from None
        branches = d.get("branches", ["Gamma0", "Gamma1", "Gamma2", "Gamma3"])
        if isinstance(branches, str) or not isinstance(branches, (list, tuple)) or not branches:
            raise ConfigError("continuation.branches", "expected a non-empty list of labels")
        for i, b in enumerate(branches):
            try:
                branch_index(str(b))
            except ValueError as exc:
                raise ConfigError(f"continuation.branches[{i}]", str(exc)) from None
        branch = str(d.get("branch", "Gamma0"))
        try:
            branch_index(branch)
        except ValueError as exc:
            raise ConfigError("continuation.branch", str(exc)) from None
        return cls(
            settings=settings,
            branches=tuple(str(b) for b in branches),
            branch=branch,
            mu_start=_num(d, "mu_start", "continuation", 0.0),
            samples=SampleConfig.from_dict(d.get("samples"), "continuation.samples"),
        )


@dataclass(frozen=True)
class NoiseConfig:
    sigma_tilde: float = 5.0
    K: int = 8
    phi_rule: Any = "linear_k"
    g_kind: str = "additive"
    name: str | None = None

    @classmethod
    def from_dict(cls, d: Mapping, where: str) -> "NoiseConfig":
        _check_keys(d, {"sigma_tilde", "K", "phi_rule", "g_kind", "name"}, where)
        cfg = cls(
            sigma_tilde=_num(d, "sigma_tilde", where, 5.0),
            K=_num(d, "K", where, 8, int),
            phi_rule=d.get("phi_rule", "linear_k"),
            g_kind=str(d.get("g_kind", "additive")),
            name=None if d.get("name") is None else str(d["name"]),
        )
        if cfg.K < 1:
            raise ConfigError(f"{where}.K", "must be >= 1")
        if cfg.g_kind not in G_KINDS:
            raise ConfigError(f"{where}.g_kind", f"must be one of {G_KINDS}")
        try:
            cfg.spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}.phi_rule", str(exc)) from None
        return cfg

    def spec(self) -> NoiseSpec:
        return spec_from_rule(self.sigma_tilde, self.K, self.phi_rule, self.g_kind)

    @property
    def tag(self) -> str:
        if self.name:
            return self.name
        return f"K{self.K}_{self.g_kind}_s{self.sigma_tilde:g}"

    def as_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["phi_rule"], tuple):
            d["phi_rule"] = list(d["phi_rule"])
        return d


def parse_method(text: str, where: str) -> LinearSolverConfig:
    """``"bicgstab"``, ``"qmr"``, ``"gmres"`` or ``"gmres(<restart>)"``."""
    text = str(text).strip()
    restart = 10
    method = text
    if text.startswith("gmres(") and text.endswith(")"):
        method = "gmres"
        try:
            restart = int(text[6:-1])
        except ValueError:
            raise ConfigError(where, f"bad gmres restart in {text!r}") from None
    if method not in METHODS:
        raise ConfigError(where, f"unknown solver {text!r}; expected one of {METHODS} or gmres(<restart>)")
    return LinearSolverConfig(method=method, gmres_restart=restart)


@dataclass(frozen=True)
class SolverConfig:
    linear: LinearSolverConfig = field(default_factory=LinearSolverConfig)
    warm_start: bool = True
    methods: tuple[str, ...] = ("bicgstab", "gmres(10)", "gmres(0)", "qmr")

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "SolverConfig":
        d = d or {}
        _check_keys(d, {"method", "tol", "maxit", "gmres_restart", "warm_start", "methods"}, "solver")
        method = str(d.get("method", "bicgstab"))
        if method not in METHODS:
            raise ConfigError("solver.method", f"must be one of {METHODS}")
        tol = _num(d, "tol", "solver", 1e-4)
        maxit = _num(d, "maxit", "solver", 200, int)
        restart = _num(d, "gmres_restart", "solver", 10, int)
        if not tol > 0:
            raise ConfigError("solver.tol", "must be positive")
        if maxit < 1:
            raise ConfigError("solver.maxit", "must be >= 1")
        if restart < 0:
            raise ConfigError("solver.gmres_restart", "must be >= 0")
        methods = d.get("methods", ["bicgstab", "gmres(10)", "gmres(0)", "qmr"])
        if isinstance(methods, str) or not isinstance(methods, (list, tuple)) or not methods:
            raise ConfigError("solver.methods", "expected a non-empty list")
        for i, m in enumerate(methods):
            parse_method(m, f"solver.methods[{i}]")
        return cls(
            linear=LinearSolverConfig(method=method, tol=tol, maxit=maxit, gmres_restart=restart),
            warm_start=_bool(d, "warm_start", "solver", True),
            methods=tuple(str(m) for m in methods),
        )

    def bench_configs(self) -> list[LinearSolverConfig]:
        out = []
        for i, m in enumerate(self.methods):
            base = parse_method(m, f"solver.methods[{i}]")
            out.append(LinearSolverConfig(base.method, self.linear.tol, self.linear.maxit, base.gmres_restart))
        return out


@dataclass(frozen=True)
class MCConfig:
    mu: float = 1.0
    dt: float = 1e-5
    T: float = 1.0
    seeds: tuple[int, ...] = (0,)
    paths: int = 1
    transient_fraction: float = 0.1
    probe: int | None = None
    drift: str = "full"

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "MCConfig":
        d = d or {}
        _check_keys(d, {"mu", "dt", "T", "seeds", "paths", "transient_fraction", "probe", "drift"}, "mc")
        seeds = d.get("seeds", [0])
        if isinstance(seeds, int) and not isinstance(seeds, bool):
            seeds = [seeds]
        if not isinstance(seeds, (list, tuple)) or not seeds or not all(
            isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds
        ):
            raise ConfigError("mc.seeds", "expected a non-empty list of non-negative integers")
        cfg = cls(
            mu=_num(d, "mu", "mc", 1.0),
            dt=_num(d, "dt", "mc", 1e-5),
            T=_num(d, "T", "mc", 1.0),
            seeds=tuple(seeds),
            paths=_num(d, "paths", "mc", 1, int),
            transient_fraction=_num(d, "transient_fraction", "mc", 0.1),
            probe=_num(d, "probe", "mc", None, int),
            drift=str(d.get("drift", "full")),
        )
        if not cfg.dt > 0:
            raise ConfigError("mc.dt", "must be positive")
        if not cfg.T > 0:
            raise ConfigError("mc.T", "must be positive")
        if cfg.paths < 1:
            raise ConfigError("mc.paths", "must be >= 1")
        if not 0 <= cfg.transient_fraction < 1:
            raise ConfigError("mc.transient_fraction", "must lie in [0, 1)")
        if cfg.drift not in ("full", "linear"):
            raise ConfigError("mc.drift", "must be 'full' or 'linear'")
        return cfg


@dataclass(frozen=True)
class FitConfig:
    norm: str = "max_norm"
    window: tuple[float, float] | None = None
    exclude_closest: int = 2
    mu_crit: float | None = None

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "FitConfig":
        d = d or {}
        _check_keys(d, {"norm", "window", "exclude_closest", "mu_crit"}, "fit")
        norm = str(d.get("norm", "max_norm"))
        if norm not in NORM_FIELDS:
            raise ConfigError("fit.norm", f"must be one of {NORM_FIELDS}")
        window = d.get("window")
        if window is not None:
            if not isinstance(window, (list, tuple)) or len(window) != 2:
                raise ConfigError("fit.window", "expected [mu_lo, mu_hi]")
            window = (float(window[0]), float(window[1]))
        ex = _num(d, "exclude_closest", "fit", 2, int)
        if ex < 0:
            raise ConfigError("fit.exclude_closest", "must be >= 0")
        return cls(norm=norm, window=window, exclude_closest=ex, mu_crit=_num(d, "mu_crit", "fit", None))


def _default_noise(run: str) -> tuple[NoiseConfig, ...]:
    if run == "mc-validate":
        return (NoiseConfig(sigma_tilde=5.0, K=11, phi_rule=("affine", 0.4, 0.0)),)
    return (NoiseConfig(),)


@dataclass(frozen=True)
class RunConfig:
    run: str
    output: Path
    grid: GridConfig = field(default_factory=GridConfig)
    continuation: ContinuationConfig = field(default_factory=ContinuationConfig)
    noise: tuple[NoiseConfig, ...] = (NoiseConfig(),)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mc: MCConfig = field(default_factory=MCConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    dump_diag: bool = False
    determinism: bool = True

    def resolved(self) -> dict:
        """Plain-data view of every setting, defaults included (JSON-serializable)."""

        def clean(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf" if v > 0 else "-inf"
            if isinstance(v, Path):
                return str(v)
            if isinstance(v, tuple):
                return [clean(x) for x in v]
            if isinstance(v, list):
                return [clean(x) for x in v]
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v

        d = {
            "run": self.run,
            "output": str(self.output),
            "grid": asdict(self.grid),
            "continuation": {
                "settings": asdict(self.continuation.settings),
                "branches": list(self.continuation.branches),
                "branch": self.continuation.branch,
                "mu_start": self.continuation.mu_start,
                "samples": None if self.continuation.samples is None else asdict(self.continuation.samples),
            },
            "noise": [n.as_dict() for n in self.noise],
            "solver": {**asdict(self.solver.linear), "warm_start": self.solver.warm_start, "methods": list(self.solver.methods)},
            "mc": asdict(self.mc),
            "fit": asdict(self.fit),
            "dump_diag": self.dump_diag,
            "determinism": self.determinism,
        }
        return clean(d)


TOP_KEYS = {"run", "output", "grid", "continuation", "noise", "solver", "mc", "fit", "dump_diag", "determinism"}


def parse_config(data: Mapping | None, base_dir: Path | None = None) -> RunConfig:
    if data is None:
        raise ConfigError("run", "configuration is empty")
    _check_keys(data, TOP_KEYS, "")
    run = data.get("run")
    if run not in RUN_KINDS:
        raise ConfigError("run", f"must be one of {RUN_KINDS}, got {run!r}")
    out = data.get("output", "results")
    if not isinstance(out, str) or not out:
        raise ConfigError("output", "expected a directory path")
    out_path = Path(out)
    if base_dir is not None and not out_path.is_absolute():
        out_path = base_dir / out_path
    noise_raw = data.get("noise")
    if noise_raw is None:
        noise = _default_noise(run)
    else:
        items = noise_raw if isinstance(noise_raw, list) else [noise_raw]
        if not items:
            raise ConfigError("noise", "empty list")
        noise = tuple(
            NoiseConfig.from_dict(item, f"noise[{i}]" if isinstance(noise_raw, list) else "noise")
            for i, item in enumerate(items)
        )
    return RunConfig(
        run=run,
        output=out_path,
        grid=GridConfig.from_dict(data.get("grid")),
        continuation=ContinuationConfig.from_dict(data.get("continuation")),
        noise=noise,
        solver=SolverConfig.from_dict(data.get("solver")),
        mc=MCConfig.from_dict(data.get("mc")),
        fit=FitConfig.from_dict(data.get("fit")),
        dump_diag=_bool(data, "dump_diag", "", False),
        determinism=_bool(data, "determinism", "", True),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML: {exc}") from None
    return parse_config(data, base_dir=path.parent)
