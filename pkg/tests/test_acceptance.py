"""End-to-end reproductions on the benchmark problems (slow; run with ``-m slow``)."""

from __future__ import annotations

import numpy as np
import pytest

from polymor.benchmarks import make_chafee, make_chafee_parametric, make_fhn
from polymor.hyper.cur import build_hyper, with_hyper
from polymor.models.lifting import lift_cubic_to_qb
from polymor.models.parametric import assemble_at_parameter
from polymor.processing.interpolation import (
    InterpolationSet,
    build_bases,
    logspace_points,
    random_parameters,
    tangential_set,
)
from polymor.processing.loewner import prepare_pencil, reduce
from polymor.simulation.compare import compare
from polymor.simulation.inputs import make_input
from polymor.simulation.integrator import integrate

pytestmark = pytest.mark.slow

CHAFEE_T = 5.0
FHN_T = 10.0


@pytest.fixture(scope="module")
def chafee():
    system = make_chafee(100)
    iset = tangential_set(system, logspace_points(1e-3, 1e3, 200))
    references = {tag: integrate(system, make_input(tag, 1), CHAFEE_T) for tag in ("u1", "u2")}
    return system, iset, references


@pytest.fixture(scope="module")
def fhn():
    system = make_fhn(100)
    sigma = logspace_points(1e-2, 1e2, 200)
    signal = make_input("fhn-i0", 2, constant_channels=(1,))
    return system, sigma, signal, integrate(system, signal, FHN_T)


def _error(reference, rom, signal, end_time):
    return compare(reference, integrate(rom, signal, end_time))


def _upward_crossings(values: np.ndarray) -> int:
    level = 0.5 * (np.max(values) + np.min(values))
    return int(np.sum((values[:-1] < level) & (values[1:] >= level)))


def test_chafee_rom_error_and_monotone_decay(chafee):
    system, iset, references = chafee
    errors = []
    for r in (2, 6, 10):
        rom = reduce(system, iset, order=r).rom
        errors.append(_error(references["u1"], rom, make_input("u1", 1), CHAFEE_T).linf_max)
    assert errors[-1] <= 1e-2
    assert errors[1] <= errors[0] and errors[2] <= errors[1]


def test_cubic_rom_beats_lifted_rom(chafee):
    system, iset, references = chafee
    cubic = reduce(system, iset, order=10).rom
    lifted = lift_cubic_to_qb(system)
    qb = reduce(lifted, tangential_set(lifted, iset.sigma), order=10).rom
    for tag in ("u1", "u2"):
        signal = make_input(tag, 1)
        cubic_error = _error(references[tag], cubic, signal, CHAFEE_T).l2_max
        qb_error = _error(references[tag], qb, signal, CHAFEE_T).l2_max
        assert 10 * cubic_error <= qb_error, tag


def test_cur_rom_tracks_exact_rom(chafee):
    system, iset, _ = chafee
    result = reduce(system, iset, order=10)
    signal = make_input("u1", 1)
    exact = integrate(result.rom, signal, CHAFEE_T)

    full = with_hyper(result.rom, build_hyper(result, 3, n_c=1000, n_r=100))
    assert compare(exact, integrate(full, signal, CHAFEE_T)).linf_max <= 1e-10

    model = build_hyper(result, 3, n_c=60, n_r=60)
    assert model.Psi.shape == (10, 60)
    assert compare(exact, integrate(with_hyper(result.rom, model), signal, CHAFEE_T)).linf_max <= 1e-2


def test_cur_fidelity_improves_with_samples(chafee):
    system, iset, _ = chafee
    result = reduce(system, iset, order=10)
    exact = result.rom.H[3]
    states = np.random.default_rng(0).standard_normal((50, 10))
    medians = []
    for size in (10, 20, 40, 60):
        model = build_hyper(result, 3, n_c=size, n_r=size)
        operator = model.operator()
        medians.append(
            np.median([np.linalg.norm(operator.apply(x) - exact.apply(x)) / np.linalg.norm(exact.apply(x)) for x in states])
        )
    assert all(later <= earlier * (1 + 1e-6) for earlier, later in zip(medians, medians[1:]))


def test_fhn_one_sided_rom_oscillates(fhn):
    system, sigma, signal, reference = fhn
    assert _upward_crossings(reference.outputs[0, reference.times > 2.0]) >= 2
    rom = reduce(system, tangential_set(system, sigma), order=20, one_sided=True).rom
    run = integrate(rom, signal, FHN_T)
    assert not run.diverged
    assert _upward_crossings(run.outputs[0, run.times > 2.0]) >= 2


def test_fhn_cubic_singular_values_decay_faster(fhn):
    system, sigma, _, _ = fhn
    lifted = lift_cubic_to_qb(system)
    _, _, cubic = prepare_pencil(system, build_bases(system, tangential_set(system, sigma)))
    _, _, qb = prepare_pencil(lifted, build_bases(lifted, tangential_set(lifted, sigma)))
    cubic_rel = cubic.singular_values_row / cubic.singular_values_row[0]
    qb_rel = qb.singular_values_row / qb.singular_values_row[0]
    size = min(len(cubic_rel), len(qb_rel))
    window = (cubic_rel[:size] >= 1e-12) & (cubic_rel[:size] <= 1e-2)
    assert window.any()
    assert np.all(cubic_rel[:size][window] <= qb_rel[:size][window])


def test_fhn_small_cubic_rom_matches_larger_lifted_rom(fhn):
    system, sigma, signal, reference = fhn
    cubic = reduce(system, tangential_set(system, sigma), order=6).rom
    lifted = lift_cubic_to_qb(system)
    qb = reduce(lifted, tangential_set(lifted, sigma), order=20, one_sided=True).rom
    assert _error(reference, cubic, signal, FHN_T).l2_max <= _error(reference, qb, signal, FHN_T).l2_max


def test_parametric_chafee_rom_across_parameters():
    family = make_chafee_parametric(100)
    sigma = logspace_points(1e-3, 1e3, 200)
    p = random_parameters(family.parameter_box, 200, seed=0)
    result = reduce(family, InterpolationSet(sigma=sigma, p=p, mode="parametric-tangential"), order=5)
    for value in (0.25, 1.0, 2.0):
        full = assemble_at_parameter(family, [value])
        reduced = assemble_at_parameter(result.rom, [value])
        for tag in ("u1", "u2"):
            signal = make_input(tag, 1)
            run = integrate(reduced, signal, CHAFEE_T)
            assert not run.diverged
            assert compare(integrate(full, signal, CHAFEE_T), run).linf_max <= 5e-2, (value, tag)
