"""Adaptive TR-BDF2 integration of ``E x' = f(x, u)`` from ``x(0) = 0``.

One step from ``t`` to ``t + h``:

    stage 1 (trapezoid):  E (z - x) = d h (f(x) + f(z))            at t + gamma h
    stage 2 (BDF2):       E (y - b z + a x) = d h f(y)             at t + h

with ``gamma = 2 - sqrt(2)`` and ``d = gamma / 2``. Both stages share the
iteration matrix ``E - d h J``. The embedded third-order weights give the
local error estimate; it is controlled per unit step.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from polymor.config import DEFAULT_CONFIG, SimulationConfig
from polymor.core.linalg import Factorization, FactorizationError, factorize
from polymor.models.system import PolynomialSystem, jacobian, rhs
from polymor.simulation.inputs import InputSignal

LOGGER = logging.getLogger(__name__)

GAMMA = 2.0 - np.sqrt(2.0)
D = GAMMA / 2.0
STAGE2_A = (1.0 - GAMMA) ** 2 / (GAMMA * (2.0 - GAMMA))
STAGE2_B = 1.0 / (GAMMA * (2.0 - GAMMA))
ERROR_WEIGHTS = ((1.0 - np.sqrt(2.0) / 4.0) / 3.0, (3.0 * np.sqrt(2.0) / 4.0 + 1.0) / 3.0, D / 3.0)


class IntegrationError(RuntimeError):
    """Raised when the mass matrix cannot be factorized."""


@dataclass
class Trajectory:
    """Sampled outputs of one simulation run."""

    times: np.ndarray
    outputs: np.ndarray
    diverged: bool = False
    divergence_time: Optional[float] = None
    reason: str = ""
    steps: int = 0
    rejected: int = 0
    wall_time: float = 0.0
    label: str = ""
    final_state: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def q(self) -> int:
        return self.outputs.shape[0]

    def stats(self) -> dict:
        return {
            "steps": self.steps,
            "rejected": self.rejected,
            "wall_time": self.wall_time,
            "diverged": self.diverged,
            "divergence_time": self.divergence_time,
            "reason": self.reason,
        }


def _scaled_norm(v: np.ndarray, scale: np.ndarray) -> float:
    return float(np.sqrt(np.mean((v / scale) ** 2)))


def _iteration_matrix(E, J, c: float):
    if sp.issparse(E) and not sp.issparse(J):
        return E.toarray() - c * np.asarray(J)
    if sp.issparse(J) and not sp.issparse(E):
        return np.asarray(E) - c * J.toarray()
    return E - c * J


def _hermite(t0: float, t1: float, x0, x1, dx0, dx1, t: float) -> np.ndarray:
    h = t1 - t0
    s = (t - t0) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * x0 + h10 * h * dx0 + h01 * x1 + h11 * h * dx1


class _Newton:
    """Simplified Newton iteration with a frozen iteration matrix."""

    def __init__(self, system: PolynomialSystem, matrix: Factorization, cfg: SimulationConfig) -> None:
        self.system = system
        self.matrix = matrix
        self.cfg = cfg

    def solve(
        self,
        residual: Callable[[np.ndarray, np.ndarray], np.ndarray],
        guess: np.ndarray,
        u: np.ndarray,
        scale: np.ndarray,
        tol: float,
    ) -> Tuple[bool, np.ndarray, np.ndarray]:
        """Return ``(converged, state, f(state))``."""

        state = guess
        for _ in range(self.cfg.newton_max_iter):
            f_state = rhs(self.system, state, u)
            correction = self.matrix.solve(-residual(state, f_state))
            if not np.all(np.isfinite(correction)):
                return False, state, f_state
            state = state + correction
            if _scaled_norm(correction, scale) <= tol:
                return True, state, rhs(self.system, state, u)
        return False, state, rhs(self.system, state, u)


def integrate(
    system: PolynomialSystem,
    signal: InputSignal,
    end_time: float,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    samples: Optional[int] = None,
    config: Optional[SimulationConfig] = None,
    label: str = "",
) -> Trajectory:
    """Simulate on ``[0, end_time]`` and sample ``C x`` at equidistant times.

    Divergence (state norm above the limit, non-finite state or step size
    underflow) stops the run; the remaining samples are NaN.
    """

    cfg = config or DEFAULT_CONFIG.simulation
    rtol = cfg.rtol if rtol is None else rtol
    atol = cfg.atol if atol is None else atol
    samples = cfg.samples if samples is None else samples
    if signal.m != system.m:
        raise ValueError(f"input has {signal.m} channels, system expects {system.m}")
    started = time.perf_counter()

    E = system.E
    try:
        mass = factorize(E)
    except FactorizationError as exc:
        raise IntegrationError(f"E cannot be factorized: {exc}") from exc

    grid = np.linspace(0.0, end_time, samples)
    outputs = np.full((system.q, samples), np.nan)
    x = np.zeros(system.n)
    t = 0.0
    u_now = signal(t)
    f_now = rhs(system, x, u_now)
    dx = mass.solve(f_now)
    outputs[:, 0] = np.asarray(system.C @ x).ravel()
    next_sample = 1

    h = min(end_time / samples, 1e-3)
    h_min = cfg.min_step_ratio * end_time
    steps = rejected = 0
    diverged, reason, divergence_time = False, "", None

    while t < end_time and next_sample < samples:
        if steps + rejected >= cfg.max_steps:
            diverged, reason, divergence_time = True, "step limit reached", t
            break
        h = min(h, end_time - t)
        if h < h_min and t + h < end_time:
            diverged, reason, divergence_time = True, "step size underflow", t
            break

        try:
            matrix = factorize(_iteration_matrix(E, jacobian(system, x, u_now), D * h))
        except FactorizationError:
            rejected += 1
            h *= 0.25
            continue
        newton = _Newton(system, matrix, cfg)
        scale = atol + rtol * np.abs(x)
        newton_tol = cfg.newton_tol * min(h, 1.0)

        u_mid = signal(t + GAMMA * h)
        ok, z, f_mid = newton.solve(
            lambda s, f_s: E @ (s - x) - D * h * (f_now + f_s), x + GAMMA * h * dx, u_mid, scale, newton_tol
        )
        if ok:
            u_next = signal(t + h)
            ok, y, f_next = newton.solve(
                lambda s, f_s: E @ (s - STAGE2_B * z + STAGE2_A * x) - D * h * f_s,
                x + (z - x) / GAMMA,
                u_next,
                scale,
                newton_tol,
            )
        if not ok:
            rejected += 1
            h *= 0.25
            LOGGER.debug("Newton failed at t=%.6g; retrying with h=%.3g", t, h)
            continue

        w0, w_mid, w1 = ERROR_WEIGHTS
        estimate = h * (w0 * f_now + w_mid * f_mid + w1 * f_next) - E @ (y - x)
        error = matrix.solve(estimate)
        scale = atol + rtol * np.maximum(np.abs(x), np.abs(y))
        error_norm = _scaled_norm(error, scale) / min(h, 1.0)
        factor = 5.0 if error_norm == 0 else float(np.clip(0.9 * error_norm**-0.5, 0.2, 5.0))
        if error_norm > 1.0 or not np.isfinite(error_norm):
            rejected += 1
            h *= factor if np.isfinite(error_norm) else 0.25
            continue

        dy = (y - STAGE2_B * z + STAGE2_A * x) / (D * h)
        t_next = t + h
        while next_sample < samples and grid[next_sample] <= t_next * (1 + 1e-14):
            state = _hermite(t, t_next, x, y, dx, dy, grid[next_sample])
            outputs[:, next_sample] = np.asarray(system.C @ state).ravel()
            next_sample += 1
        steps += 1
        t, x, dx, f_now, u_now = t_next, y, dy, f_next, u_next
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > cfg.divergence_norm:
            diverged, reason, divergence_time = True, "state norm exceeded the divergence limit", t
            break
        h *= factor

    if diverged:
        outputs[:, next_sample:] = np.nan
        LOGGER.warning("Simulation %s diverged at t=%.6g: %s", label or "run", divergence_time, reason)
    wall = time.perf_counter() - started
    LOGGER.info(
        "Integrated %s (n=%d) to T=%g: %d steps, %d rejected, %.2fs", label or "system", system.n, end_time, steps,
        rejected, wall,
    )
    return Trajectory(
        times=grid,
        outputs=outputs,
        diverged=diverged,
        divergence_time=divergence_time,
        reason=reason,
        steps=steps,
        rejected=rejected,
        wall_time=wall,
        label=label,
        final_state=x,
    )
