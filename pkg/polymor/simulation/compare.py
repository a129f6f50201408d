"""Output error metrics between a reference and a reduced trajectory."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict

import numpy as np

from polymor.simulation.integrator import Trajectory

LOGGER = logging.getLogger(__name__)


class GridMismatchError(ValueError):
    """Raised when two trajectories are sampled on different grids."""


@dataclass(frozen=True)
class ErrorReport:
    """Pointwise relative errors ``|y - y_hat| / max_t |y|`` with summaries.

    Summaries are ``inf`` when either run diverged; the pointwise errors are
    then NaN after the divergence.
    """

    times: np.ndarray
    relative_errors: np.ndarray
    linf: np.ndarray
    l2: np.ndarray
    reference_diverged: bool
    reduced_diverged: bool
    label: str = ""

    @property
    def diverged(self) -> bool:
        return self.reference_diverged or self.reduced_diverged

    @property
    def linf_max(self) -> float:
        return float(np.max(self.linf))

    @property
    def l2_max(self) -> float:
        return float(np.max(self.l2))

    def summary(self) -> Dict[str, object]:
        return {
            "label": self.label,
            "relative_linf": [float(v) for v in self.linf],
            "relative_l2": [float(v) for v in self.l2],
            "relative_linf_max": self.linf_max,
            "relative_l2_max": self.l2_max,
            "reference_diverged": self.reference_diverged,
            "reduced_diverged": self.reduced_diverged,
        }


def _safe_scale(values: np.ndarray) -> np.ndarray:
    # identically zero reference outputs fall back to absolute errors
    return np.where(values > 0, values, 1.0)


def compare(reference: Trajectory, reduced: Trajectory, label: str = "") -> ErrorReport:
    """Compare two trajectories sampled on one grid."""

    if reference.times.shape != reduced.times.shape or not np.allclose(
        reference.times, reduced.times, rtol=0.0, atol=1e-12 * max(1.0, abs(reference.times[-1]))
    ):
        raise GridMismatchError(
            f"time grids differ: {reference.times.size} samples on [0, {reference.times[-1]:g}] vs "
            f"{reduced.times.size} samples on [0, {reduced.times[-1]:g}]"
        )
    if reference.outputs.shape != reduced.outputs.shape:
        raise GridMismatchError(f"output shapes differ: {reference.outputs.shape} vs {reduced.outputs.shape}")

    y, y_hat = reference.outputs, reduced.outputs
    difference = np.abs(y - y_hat)
    peak = _safe_scale(np.nanmax(np.abs(y), axis=1, initial=0.0))
    relative = difference / peak[:, None]

    if reference.diverged or reduced.diverged:
        linf = np.full(y.shape[0], np.inf)
        l2 = np.full(y.shape[0], np.inf)
        LOGGER.warning("Comparison %s: %s diverged; summaries reported as inf", label or "run",
                       "reference" if reference.diverged else "reduced model")
    else:
        linf = np.max(relative, axis=1)
        l2 = np.linalg.norm(y - y_hat, axis=1) / _safe_scale(np.linalg.norm(y, axis=1))
    LOGGER.info("Comparison %s: relative Linf %s, L2 %s", label or "run", np.array2string(linf, precision=3),
                np.array2string(l2, precision=3))
    return ErrorReport(
        times=reference.times,
        relative_errors=relative,
        linf=linf,
        l2=l2,
        reference_diverged=reference.diverged,
        reduced_diverged=reduced.diverged,
        label=label,
    )
