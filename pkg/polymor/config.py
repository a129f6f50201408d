"""Global configuration defaults for polymor."""

from __future__ import annotations

import json
import os
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple


class ConfigError(ValueError):
    """Raised when a configuration value or file is invalid."""


@dataclass
class UnfoldingConfig:
    """Limits for materializing explicit Kronecker unfoldings."""

    max_columns: int = 1_000_000


@dataclass
class TransferConfig:
    """Resolvent solves and their factorization cache."""

    # LU factorizations kept per solver (least recently used evicted first)
    cache_size: int = 32
    workers: int = 1


@dataclass
class InterpolationConfig:
    """Raw basis construction."""

    orth_tol: float = 1e-10
    # Enumerate every frequency tuple instead of the diagonal ones
    full_tuples: bool = False
    realify_tol: float = 1e-13
    seed: int = 0


@dataclass
class ReductionConfig:
    """Loewner pencil, order selection and reduced model assembly."""

    threshold: float = 1e-8
    normalize_columns: bool = True
    condition_limit: float = 1e12
    orthonormality_tol: float = 1e-10


@dataclass
class HyperConfig:
    """CUR hyper-reduction of reduced nonlinear terms."""

    method: str = "greedy"
    pinv_rtol: float = 1e-12
    # n_c = n_r = min(oversampling * r, r**xi) when not given
    oversampling: int = 6
    max_columns: int = 1_000_000
    seed: int = 0


@dataclass
class SimulationConfig:
    """Implicit time integration."""

    rtol: float = 1e-8
    atol: float = 1e-8
    samples: int = 500
    divergence_norm: float = 1e12
    newton_max_iter: int = 8
    newton_tol: float = 0.03
    max_steps: int = 2_000_000
    min_step_ratio: float = 1e-14


@dataclass
class BenchmarkConfig:
    """Physical constants and default experiment settings of the benchmarks."""

    chafee_length: float = 1.0
    chafee_end_time: float = 5.0
    chafee_param_box: Tuple[float, float] = (0.25, 2.0)
    chafee_param_sweep: Tuple[float, ...] = (0.25, 1.0, 2.0)
    fhn_epsilon: float = 0.015
    fhn_recovery: float = 0.05
    fhn_gamma: float = 2.0
    fhn_source: float = 0.05
    fhn_length: float = 0.1
    fhn_end_time: float = 10.0
    points: int = 200


@dataclass
class PolymorConfig:
    """Top-level configuration values."""

    unfolding: UnfoldingConfig = field(default_factory=UnfoldingConfig)
    transfer: TransferConfig = field(default_factory=TransferConfig)
    interpolation: InterpolationConfig = field(default_factory=InterpolationConfig)
    reduction: ReductionConfig = field(default_factory=ReductionConfig)
    hyper: HyperConfig = field(default_factory=HyperConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    benchmarks: BenchmarkConfig = field(default_factory=BenchmarkConfig)


DEFAULT_CONFIG = PolymorConfig()


@dataclass
class RunConfig:
    """Everything a CLI run depends on; written verbatim next to its outputs."""

    command: str = ""
    benchmark: Optional[str] = None
    system: Optional[str] = None
    rom: List[str] = field(default_factory=list)
    grid: int = 100
    freq: Tuple[float, float] = (1e-3, 1e3)
    points: int = DEFAULT_CONFIG.benchmarks.points
    param_box: Optional[List[Tuple[float, float]]] = None
    param_points: int = DEFAULT_CONFIG.benchmarks.points
    params: List[float] = field(default_factory=list)
    order: Optional[int] = None
    threshold: float = DEFAULT_CONFIG.reduction.threshold
    one_sided: bool = False
    lift_qb: bool = False
    cur: Optional[Tuple[int, int]] = None
    cur_method: str = DEFAULT_CONFIG.hyper.method
    with_qb: bool = False
    # None picks the benchmark default (u1, or fhn-i0 for fhn)
    input: Optional[str] = None
    end_time: Optional[float] = None
    rtol: float = DEFAULT_CONFIG.simulation.rtol
    atol: float = DEFAULT_CONFIG.simulation.atol
    seed: int = DEFAULT_CONFIG.interpolation.seed
    epsilon: float = DEFAULT_CONFIG.benchmarks.fhn_epsilon
    kind: str = "L"
    tf_tuple: List[str] = field(default_factory=list)
    workers: int = DEFAULT_CONFIG.transfer.workers
    interpolation_csv: Optional[str] = None
    out: str = "output"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        values = dict(data)
        for key in ("freq", "cur"):
            if values.get(key) is not None:
                values[key] = tuple(values[key])
        if values.get("param_box") is not None:
            values["param_box"] = [tuple(bounds) for bounds in values["param_box"]]
        return cls(**values)

    def validate(self) -> None:
        """Reject inconsistent settings before any work starts."""

        if self.benchmark and self.system:
            raise ConfigError("give either a benchmark or a system path, not both")
        if self.grid < 3:
            raise ConfigError(f"grid must be >= 3, got {self.grid}")
        low, high = self.freq
        if not 0 < low < high:
            raise ConfigError(f"frequency range must satisfy 0 < a < b, got {self.freq}")
        if self.points < 1 or self.param_points < 1:
            raise ConfigError("point counts must be positive")
        if self.order is not None and self.order < 1:
            raise ConfigError(f"order must be positive, got {self.order}")
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.cur is not None and min(self.cur) < 1:
            raise ConfigError(f"CUR sizes must be positive, got {self.cur}")
        if self.rtol <= 0 or self.atol <= 0:
            raise ConfigError("tolerances must be positive")
        if self.end_time is not None and self.end_time <= 0:
            raise ConfigError("end time must be positive")
        if self.cur_method not in ("greedy", "leverage"):
            raise ConfigError(f"CUR selection must be greedy or leverage, got {self.cur_method!r}")
        if not re.fullmatch(r"L|[HN]\d+", self.kind):
            raise ConfigError(f"transfer function kind must be L, H<degree> or N<degree>, got {self.kind!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")

    def write(self, directory: Path) -> Path:
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / "run_config.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
        return path


def _coerce(raw: str) -> Any:
    text = raw.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a JSON object or ``key: value`` lines into a plain dict."""

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            data = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        return {key.replace("-", "_"): value for key, value in data.items()}

    data: Dict[str, Any] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if ":" not in line:
            raise ConfigError(f"{path}:{number}: expected 'key: value'")
        key, value = line.split(":", 1)
        data[key.strip().replace("-", "_")] = _coerce(value)
    return data


def env_defaults() -> Dict[str, Any]:
    """Run settings taken from the environment (after ``.env`` loading)."""

    values: Dict[str, Any] = {}
    workers = os.getenv("POLYMOR_WORKERS")
    if workers:
        try:
            values["workers"] = int(workers)
        except ValueError as exc:
            raise ConfigError(f"POLYMOR_WORKERS must be an integer, got {workers!r}") from exc
    return values
