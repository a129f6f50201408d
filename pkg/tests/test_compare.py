from __future__ import annotations

import numpy as np
import pytest

from polymor.simulation.compare import GridMismatchError, compare
from polymor.simulation.integrator import Trajectory


def _run(outputs, end_time=1.0, **kwargs) -> Trajectory:
    outputs = np.atleast_2d(np.asarray(outputs, dtype=float))
    return Trajectory(times=np.linspace(0.0, end_time, outputs.shape[1]), outputs=outputs, **kwargs)


def test_relative_errors_against_peak_reference():
    reference = _run([[0.0, 2.0, -4.0, 1.0]])
    reduced = _run([[0.0, 2.2, -4.0, 0.6]])
    report = compare(reference, reduced, label="rom")
    assert np.allclose(report.relative_errors, [[0.0, 0.05, 0.0, 0.1]])
    assert np.isclose(report.linf_max, 0.1)
    expected_l2 = np.sqrt(0.2**2 + 0.4**2) / np.sqrt(4 + 16 + 1)
    assert np.isclose(report.l2_max, expected_l2)
    assert not report.diverged
    summary = report.summary()
    assert summary["label"] == "rom"
    assert summary["relative_linf"] == pytest.approx([0.1])


def test_outputs_are_scaled_per_channel():
    reference = _run([[1.0, 2.0], [100.0, 200.0]])
    reduced = _run([[1.0, 2.1], [100.0, 210.0]])
    report = compare(reference, reduced)
    assert np.allclose(report.linf, [0.05, 0.05])


def test_zero_reference_uses_absolute_error():
    report = compare(_run([[0.0, 0.0, 0.0]]), _run([[0.0, 1e-3, 0.0]]))
    assert np.isclose(report.linf_max, 1e-3)


def test_divergence_gives_infinite_summaries():
    reference = _run([[1.0, 2.0, 3.0]])
    reduced = _run([[1.0, 2.0, np.nan]], diverged=True, divergence_time=0.6, reason="state norm")
    report = compare(reference, reduced)
    assert report.diverged and report.reduced_diverged and not report.reference_diverged
    assert np.isinf(report.linf_max) and np.isinf(report.l2_max)
    assert np.isnan(report.relative_errors[0, -1])
    assert report.summary()["reduced_diverged"] is True


def test_grid_mismatch_is_rejected():
    with pytest.raises(GridMismatchError):
        compare(_run([[1.0, 2.0, 3.0]]), _run([[1.0, 2.0]]))
    with pytest.raises(GridMismatchError):
        compare(_run([[1.0, 2.0]], end_time=1.0), _run([[1.0, 2.0]], end_time=2.0))
    with pytest.raises(GridMismatchError):
        compare(_run([[1.0, 2.0]]), _run([[1.0, 2.0], [0.0, 0.0]]))
