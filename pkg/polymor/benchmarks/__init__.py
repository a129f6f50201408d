"""Benchmark systems and their registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, Union

from polymor.benchmarks.chafee import make_chafee, make_chafee_parametric
from polymor.benchmarks.fitzhugh_nagumo import make_fhn
from polymor.benchmarks.fixtures import make_exp_fixture
from polymor.config import DEFAULT_CONFIG
from polymor.models.parametric import AffineParametricSystem
from polymor.models.system import PolynomialSystem, SystemDefinitionError

AnySystem = Union[PolynomialSystem, AffineParametricSystem]


@dataclass(frozen=True)
class BenchmarkSpec:
    """Name, grid and physical parameters of a benchmark instance."""

    name: str
    grid: int = 100
    length: Optional[float] = None
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in BENCHMARKS:
            raise SystemDefinitionError(f"unknown benchmark {self.name!r}; expected one of {sorted(BENCHMARKS)}")
        if self.grid < 3:
            raise SystemDefinitionError(f"grid must be >= 3, got {self.grid}")

    def build(self) -> AnySystem:
        return BENCHMARKS[self.name](self)

    @property
    def end_time(self) -> float:
        cfg = DEFAULT_CONFIG.benchmarks
        return cfg.fhn_end_time if self.name == "fhn" else cfg.chafee_end_time

    @property
    def default_input(self) -> str:
        return "fhn-i0" if self.name == "fhn" else "u1"

    @property
    def constant_channels(self) -> Tuple[int, ...]:
        return (1,) if self.name == "fhn" else ()


BENCHMARKS: Dict[str, Callable[[BenchmarkSpec], AnySystem]] = {
    "chafee": lambda spec: make_chafee(spec.grid, spec.length),
    "chafee-param": lambda spec: make_chafee_parametric(spec.grid, spec.length),
    "fhn": lambda spec: make_fhn(spec.grid, spec.params.get("epsilon"), spec.length),
    "exp-fixture": lambda spec: make_exp_fixture(),
}

__all__ = [
    "BENCHMARKS",
    "BenchmarkSpec",
    "make_chafee",
    "make_chafee_parametric",
    "make_exp_fixture",
    "make_fhn",
]
