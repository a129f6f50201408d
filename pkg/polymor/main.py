"""CLI entrypoint: benchmark generation, reduction, simulation and comparison."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from polymor.assembly.artifacts import (
    load_hyper_models,
    load_reduction_bases,
    save_reduction,
    write_error_csv,
    write_json,
    write_singular_values_csv,
    write_trajectory_csv,
    write_transfer_csv,
)
from polymor.benchmarks import BENCHMARKS, BenchmarkSpec
from polymor.config import DEFAULT_CONFIG, ConfigError, HyperConfig, RunConfig, env_defaults, load_config_file
from polymor.core.kron import KroneckerError
from polymor.core.linalg import FactorizationError
from polymor.hyper.cur import CurSelectionError, build_hyper, hyper_from_bases, with_hyper
from polymor.models.lifting import UnsupportedLiftError, lift_cubic_to_qb
from polymor.models.parametric import AffineParametricSystem, assemble_at_parameter
from polymor.models.system import (
    PolynomialSystem,
    SingularSystemError,
    SystemDefinitionError,
    UnfoldingTooLargeError,
)
from polymor.processing.interpolation import (
    EmptyBasisError,
    InterpolationError,
    InterpolationSet,
    build_bases,
    default_directions,
    load_interpolation_csv,
    logspace_points,
    random_parameters,
    tangential_set,
)
from polymor.processing.loewner import (
    CoincidentPointsError,
    OrderSelectionError,
    prepare_pencil,
    reduce,
)
from polymor.services.system_store import MANIFEST, SystemStoreError, load_system, save_system
from polymor.simulation.compare import GridMismatchError, compare
from polymor.simulation.inputs import InputError, InputSignal, parse_input
from polymor.simulation.integrator import IntegrationError, Trajectory, integrate
from polymor.transfer.evaluation import (
    MissingTermError,
    ParametricEvaluator,
    ResolventSolver,
    SingularPencilError,
    evaluate,
)

try:
    from dotenv import load_dotenv
except ImportError:  # pragma: no cover - optional dependency
    load_dotenv = None

if load_dotenv:
    load_dotenv()
    load_dotenv(Path(__file__).resolve().parent / ".env")

LOGGER = logging.getLogger("polymor")

AnySystem = Union[PolynomialSystem, AffineParametricSystem]

LIBRARY_ERRORS = (
    ConfigError,
    KroneckerError,
    FactorizationError,
    SystemDefinitionError,
    SingularSystemError,
    UnsupportedLiftError,
    UnfoldingTooLargeError,
    SystemStoreError,
    SingularPencilError,
    MissingTermError,
    InterpolationError,
    EmptyBasisError,
    CoincidentPointsError,
    OrderSelectionError,
    CurSelectionError,
    GridMismatchError,
    IntegrationError,
    InputError,
)

_NOT_CONFIG = {"config", "log_level", "handler"}


def _add_source(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("system")
    group.add_argument("--benchmark", choices=sorted(BENCHMARKS), help="Built-in benchmark to generate")
    group.add_argument("--system", help="Directory written by 'benchmark gen' or 'reduce'")
    group.add_argument("--grid", type=int, help="Benchmark grid size k (default: 100)")
    group.add_argument("--epsilon", type=float, help="FitzHugh-Nagumo epsilon (default: 0.015)")
    group.add_argument("--lift-qb", action="store_true", help="Lift the cubic system to quadratic-bilinear form")


def _add_interpolation(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("interpolation")
    group.add_argument("--freq", type=float, nargs=2, metavar=("A", "B"), help="Frequency range (log-spaced)")
    group.add_argument("--points", type=int, help="Number of frequency points (default: 200)")
    group.add_argument(
        "--param-box",
        type=float,
        nargs=2,
        action="append",
        metavar=("LO", "HI"),
        help="Parameter interval; repeat per parameter (default: the system's box)",
    )
    group.add_argument("--param-points", type=int, help="Number of sampled parameters (default: 200)")
    group.add_argument("--seed", type=int, help="Seed for parameter sampling and leverage CUR")
    group.add_argument("--interpolation-csv", help="CSV of sigma_re, sigma_im[, p_*, b_*, c_*] rows")
    group.add_argument("--workers", type=int, help="Threads for point-parallel solves")


def _add_reduction(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("reduction")
    group.add_argument("--order", type=int, help="Reduced order r (default: threshold selection)")
    group.add_argument("--threshold", type=float, help="Relative singular value threshold (default: 1e-8)")
    group.add_argument("--one-sided", action="store_true", help="Galerkin projection with W = V")


def _add_cur(parser: argparse.ArgumentParser, seed: bool = False) -> None:
    group = parser.add_argument_group("hyper-reduction")
    group.add_argument("--cur", type=int, nargs=2, metavar=("NC", "NR"), help="CUR columns and rows")
    group.add_argument("--cur-method", choices=["greedy", "leverage"], help="CUR index selection")
    if seed:
        group.add_argument("--seed", type=int, help="Seed for leverage CUR")


def _add_simulation(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("simulation")
    group.add_argument("--input", help="u1, u2, fhn-i0, zero, constant:<v> or table:<csv>")
    group.add_argument("--end-time", type=float, help="Final time (default: per benchmark)")
    group.add_argument("--rtol", type=float, help="Relative tolerance (default: 1e-8)")
    group.add_argument("--atol", type=float, help="Absolute tolerance (default: 1e-8)")
    group.add_argument(
        "--param", dest="params", type=float, action="append", help="Parameter value; repeat for sweeps"
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", help="Output directory (default: output)")
    parser.add_argument("--config", help="JSON or 'key: value' file with run settings")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polymor",
        description="Loewner model reduction of polynomial systems",
        argument_default=argparse.SUPPRESS,
    )
    commands = parser.add_subparsers(dest="command", required=True)

    bench = commands.add_parser("benchmark", help="Benchmark systems", argument_default=argparse.SUPPRESS)
    bench_commands = bench.add_subparsers(dest="action", required=True)
    gen = bench_commands.add_parser("gen", help="Write a benchmark system", argument_default=argparse.SUPPRESS)
    gen.add_argument("--name", dest="benchmark", required=True, choices=sorted(BENCHMARKS))
    gen.add_argument("--grid", type=int)
    gen.add_argument("--epsilon", type=float)
    gen.add_argument("--lift-qb", action="store_true")
    _add_common(gen)
    gen.set_defaults(handler=cmd_benchmark_gen, command="benchmark-gen")

    red = commands.add_parser("reduce", help="Reduce a system", argument_default=argparse.SUPPRESS)
    _add_source(red)
    _add_interpolation(red)
    _add_reduction(red)
    _add_cur(red)
    _add_common(red)
    red.set_defaults(handler=cmd_reduce)

    sim = commands.add_parser("simulate", help="Simulate a system or ROM", argument_default=argparse.SUPPRESS)
    _add_source(sim)
    sim.add_argument("--rom", action="append", help="Reduction directory to simulate instead of the source")
    _add_simulation(sim)
    _add_cur(sim, seed=True)
    _add_common(sim)
    sim.set_defaults(handler=cmd_simulate)

    cmp_ = commands.add_parser("compare", help="Compare full and reduced outputs", argument_default=argparse.SUPPRESS)
    _add_source(cmp_)
    cmp_.add_argument("--rom", action="append", required=True, help="Reduction directory; repeat for several")
    _add_simulation(cmp_)
    _add_cur(cmp_, seed=True)
    _add_common(cmp_)
    cmp_.set_defaults(handler=cmd_compare)

    svd = commands.add_parser("svd", help="Pencil singular values", argument_default=argparse.SUPPRESS)
    _add_source(svd)
    _add_interpolation(svd)
    svd.add_argument("--one-sided", action="store_true")
    svd.add_argument("--with-qb", action="store_true", help="Also write the curve of the lifted QB system")
    _add_common(svd)
    svd.set_defaults(handler=cmd_svd)

    tf = commands.add_parser("tf", help="Evaluate transfer functions", argument_default=argparse.SUPPRESS)
    _add_source(tf)
    tf.add_argument("--kind", help="L, H<degree> or N<degree> (default: L)")
    tf.add_argument("--freq", type=float, nargs=2, metavar=("A", "B"))
    tf.add_argument("--points", type=int)
    tf.add_argument("--tuple", dest="tf_tuple", nargs="+", help="Explicit frequency tuple, e.g. 1 2+1j 3")
    tf.add_argument("--param", dest="params", type=float, action="append")
    _add_common(tf)
    tf.set_defaults(handler=cmd_tf)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Flags override the config file, which overrides the environment and defaults."""

    values: Dict[str, Any] = dict(env_defaults())
    config_path = getattr(args, "config", None)
    if config_path:
        values.update(load_config_file(Path(config_path)))
    values.update({k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and k != "action"})
    config = RunConfig.from_dict(values)
    config.validate()
    return config


def load_source(cfg: RunConfig) -> AnySystem:
    if cfg.benchmark:
        system = BenchmarkSpec(cfg.benchmark, cfg.grid, params={"epsilon": cfg.epsilon}).build()
    elif cfg.system:
        system = load_system(_system_dir(Path(cfg.system)))
    else:
        raise ConfigError("give --benchmark or --system")
    if cfg.lift_qb:
        if isinstance(system, AffineParametricSystem):
            raise UnsupportedLiftError("parametric systems cannot be lifted")
        system = lift_cubic_to_qb(system)
    return system


def _system_dir(path: Path) -> Path:
    # a reduction directory stores its ROM under rom/
    if not (path / MANIFEST).exists() and (path / "rom" / MANIFEST).exists():
        return path / "rom"
    return path


def _parametric_directions(
    psys: AffineParametricSystem, sigma: np.ndarray, p: np.ndarray
) -> Tuple[Optional[np.ndarray], Optional[np.ndarray]]:
    if psys.m == 1 and psys.q == 1:
        return None, None
    pairs = [default_directions(assemble_at_parameter(psys, p_i), [s]) for s, p_i in zip(sigma, p)]
    return np.vstack([b for b, _ in pairs]), np.vstack([c for _, c in pairs])


def build_interpolation_set(system: AnySystem, cfg: RunConfig) -> InterpolationSet:
    """Log-spaced real frequencies, paired with seeded parameters for families."""

    parametric = isinstance(system, AffineParametricSystem)
    if cfg.interpolation_csv:
        n_params = system.n_params if parametric else 0
        return load_interpolation_csv(Path(cfg.interpolation_csv), system.m, system.q, n_params)
    sigma = logspace_points(cfg.freq[0], cfg.freq[1], cfg.points)
    if not parametric:
        return tangential_set(system, sigma)
    box = cfg.param_box or list(system.parameter_box)
    if not box:
        raise ConfigError("parametric reduction needs --param-box or a system with a parameter box")
    p = random_parameters(box, cfg.param_points, cfg.seed)
    if cfg.param_points != cfg.points:
        LOGGER.warning("Pairing %d frequencies with %d parameters cyclically", cfg.points, cfg.param_points)
        p = np.resize(p, (cfg.points, p.shape[1]))
    b, c = _parametric_directions(system, sigma, p)
    return InterpolationSet(sigma=sigma, p=p, b=b, c=c, mode="parametric-tangential")


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out)
    return out


def cmd_benchmark_gen(cfg: RunConfig) -> None:
    out = _output_dir(cfg)
    system = load_source(cfg)
    save_system(system, out)
    LOGGER.info("Benchmark %s (n=%d) written to %s", cfg.benchmark, system.n, out)


def _cur_sizes(cfg: RunConfig, r: int, degree: int, n: int) -> Tuple[Optional[int], Optional[int]]:
    if cfg.cur is None:
        return None, None
    return min(cfg.cur[0], r**degree), min(cfg.cur[1], n)


def _hyper_config(cfg: RunConfig) -> HyperConfig:
    return dataclasses.replace(DEFAULT_CONFIG.hyper, method=cfg.cur_method, seed=cfg.seed)


def cmd_reduce(cfg: RunConfig) -> None:
    out = _output_dir(cfg)
    system = load_source(cfg)
    iset = build_interpolation_set(system, cfg)
    result = reduce(system, iset, order=cfg.order, threshold=cfg.threshold, one_sided=cfg.one_sided,
                    workers=cfg.workers)
    hyper = []
    if cfg.cur is not None:
        if isinstance(system, AffineParametricSystem):
            raise CurSelectionError("hyper-reduction is available for non-parametric systems only")
        for degree in sorted(system.H):
            n_c, n_r = _cur_sizes(cfg, result.order, degree, system.n)
            hyper.append(build_hyper(result, degree, n_c, n_r, config=_hyper_config(cfg)))
    save_reduction(result, out, hyper)
    if result.diagnostics.get("E_singular"):
        LOGGER.warning("Reduced E is singular or ill-conditioned; see %s", out / "timings.json")
    LOGGER.info("ROM of order %d written to %s", result.order, out)


def cmd_svd(cfg: RunConfig) -> None:
    out = _output_dir(cfg)
    system = load_source(cfg)
    iset = build_interpolation_set(system, cfg)
    _, _, pencil = prepare_pencil(system, build_bases(system, iset, workers=cfg.workers), cfg.one_sided)
    write_singular_values_csv(out / "singular_values.csv", pencil)
    if cfg.with_qb:
        lifted = lift_cubic_to_qb(system)
        lifted_set = tangential_set(lifted, iset.sigma)
        _, _, qb_pencil = prepare_pencil(lifted, build_bases(lifted, lifted_set, workers=cfg.workers), cfg.one_sided)
        write_singular_values_csv(out / "singular_values_qb.csv", qb_pencil)
    LOGGER.info("Singular values written to %s", out)


def _signal(cfg: RunConfig, system: AnySystem) -> InputSignal:
    metadata = system.metadata
    tag = cfg.input or metadata.get("default_input", "u1")
    constant = tuple(int(v) for v in metadata.get("constant_inputs", "").split(",") if v.strip())
    return parse_input(tag, system.m, constant)


def _end_time(cfg: RunConfig, system: AnySystem) -> float:
    if cfg.end_time is not None:
        return cfg.end_time
    return float(system.metadata.get("end_time", DEFAULT_CONFIG.benchmarks.chafee_end_time))


def _parameter_values(cfg: RunConfig, system: AnySystem) -> List[Optional[float]]:
    if not isinstance(system, AffineParametricSystem):
        if cfg.params:
            LOGGER.warning("Ignoring --param for a non-parametric system")
        return [None]
    if cfg.params:
        return list(cfg.params)
    if system.metadata.get("benchmark") == "chafee-param":
        return list(DEFAULT_CONFIG.benchmarks.chafee_param_sweep)
    return [float(np.mean(bounds)) for bounds in system.parameter_box[:1]]


def _frozen(system: AnySystem, p: Optional[float]) -> PolynomialSystem:
    if p is None:
        return system
    if not isinstance(system, AffineParametricSystem):
        return system
    return assemble_at_parameter(system, [p])


def _suffix(p: Optional[float]) -> str:
    return "" if p is None else f"_p{p:g}"


def _rom_variants(cfg: RunConfig, source: Optional[AnySystem]) -> List[Tuple[str, AnySystem]]:
    """ROMs named by directory, each followed by its CUR variant when available."""

    variants: List[Tuple[str, AnySystem]] = []
    seen: Dict[str, int] = {}
    for entry in cfg.rom:
        path = Path(entry)
        rom = load_system(_system_dir(path))
        name = path.name or "rom"
        seen[name] = seen.get(name, 0) + 1
        if seen[name] > 1:
            name = f"{name}{seen[name]}"
        variants.append((name, rom))
        if isinstance(rom, AffineParametricSystem):
            continue
        models = []
        if cfg.cur is not None:
            if source is None or isinstance(source, AffineParametricSystem):
                raise ConfigError("--cur needs the non-parametric source system (--benchmark or --system)")
            full = source
            if rom.metadata.get("lifted") == "qb" and "lifted" not in source.metadata:
                full = lift_cubic_to_qb(source)
            V, W = load_reduction_bases(path)
            for degree in sorted(rom.H):
                n_c, n_r = _cur_sizes(cfg, rom.n, degree, full.n)
                models.append(hyper_from_bases(full, V, W, degree, n_c, n_r, config=_hyper_config(cfg)))
        else:
            models = load_hyper_models(path)
        if models:
            variants.append((f"{name}+cur", with_hyper(rom, *models)))
    return variants


def _simulate(system: PolynomialSystem, cfg: RunConfig, signal: InputSignal, end_time: float, label: str) -> Trajectory:
    return integrate(system, signal, end_time, rtol=cfg.rtol, atol=cfg.atol, label=label)


def cmd_simulate(cfg: RunConfig) -> None:
    out = _output_dir(cfg)
    source = load_source(cfg) if (cfg.benchmark or cfg.system) else None
    if cfg.rom:
        models = _rom_variants(cfg, source)
    elif source is not None:
        models = [("system", source)]
    else:
        raise ConfigError("give --benchmark, --system or --rom")

    summary: Dict[str, Any] = {}
    for label, model in models:
        signal = _signal(cfg, model)
        end_time = _end_time(cfg, model)
        for p in _parameter_values(cfg, model):
            name = f"{label}{_suffix(p)}"
            trajectory = _simulate(_frozen(model, p), cfg, signal, end_time, name)
            write_trajectory_csv(out / f"trajectory_{name}.csv", trajectory)
            summary[name] = trajectory.stats()
    write_json(out / "summary.json", summary)


def cmd_compare(cfg: RunConfig) -> None:
    out = _output_dir(cfg)
    source = load_source(cfg)
    variants = _rom_variants(cfg, source)
    signal = _signal(cfg, source)
    end_time = _end_time(cfg, source)

    summary: Dict[str, Any] = {"input": signal.tag, "end_time": end_time, "runs": []}
    for p in _parameter_values(cfg, source):
        reference = _simulate(_frozen(source, p), cfg, signal, end_time, f"reference{_suffix(p)}")
        write_trajectory_csv(out / f"trajectory_reference{_suffix(p)}.csv", reference)
        for name, rom in variants:
            label = f"{name}{_suffix(p)}"
            reduced = _simulate(_frozen(rom, p), cfg, signal, end_time, label)
            report = compare(reference, reduced, label=label)
            write_trajectory_csv(out / f"trajectory_{label}.csv", reduced)
            write_error_csv(out / f"errors_{label}.csv", report)
            entry = report.summary()
            entry.update({"parameter": p, "reference": reference.stats(), "reduced": reduced.stats()})
            summary["runs"].append(entry)
    write_json(out / "summary.json", summary)
    LOGGER.info("Comparison of %d model variants written to %s", len(variants), out)


def _parse_kind(kind: str) -> Tuple[str, int]:
    return ("L", 1) if kind == "L" else (kind[0], int(kind[1:]))


def cmd_tf(cfg: RunConfig) -> None:
    out = _output_dir(cfg)
    system = load_source(cfg)
    kind, degree = _parse_kind(cfg.kind)
    width = 1 if kind == "L" else degree + 1
    if isinstance(system, AffineParametricSystem):
        p = cfg.params[0] if cfg.params else float(np.mean(system.parameter_box[0]))
        solver = ParametricEvaluator(system).solver([p])
    else:
        solver = ResolventSolver(system)
    if cfg.tf_tuple:
        try:
            points = np.array([[complex(s.replace(" ", "")) for s in cfg.tf_tuple]])
        except ValueError as exc:
            raise ConfigError(f"cannot parse frequency tuple {cfg.tf_tuple}") from exc
        if points.shape[1] != width:
            raise ConfigError(f"{cfg.kind} needs {width} frequencies, got {points.shape[1]}")
    else:
        sigma = logspace_points(cfg.freq[0], cfg.freq[1], cfg.points)
        points = np.repeat(sigma[:, None].astype(complex), width, axis=1)
    values = np.array([evaluate(solver.system, kind, degree, list(row), solver) for row in points])
    write_transfer_csv(out / "tf.csv", points, values)
    LOGGER.info("Transfer function %s at %d tuples written to %s", cfg.kind, len(points), out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    level = getattr(args, "log_level", None) or os.getenv("POLYMOR_LOG_LEVEL", "INFO")
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    handler: Callable[[RunConfig], None] = args.handler
    try:
        cfg = resolve_config(args)
        handler(cfg)
    except LIBRARY_ERRORS as exc:
        LOGGER.error("%s failed: %s", args.command, exc)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
