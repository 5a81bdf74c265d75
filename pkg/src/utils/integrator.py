"""Adaptive Dormand-Prince 5(4) integration with per-step constraint projection."""

from typing import Callable, Optional
import logging

import numpy as np

from ..core.errors import StepFailure

logger = logging.getLogger(__name__)

# Dormand-Prince tableau (DOPRI5)
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# fifth minus fourth order weights, local truncation error estimate
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

Rhs = Callable[[float, np.ndarray], np.ndarray]


class DormandPrince54:
    """Embedded 5(4) Runge-Kutta pair with step-size control.

    Steps are clipped so that every requested output time is hit exactly; an
    optional ``project`` callback maps each accepted state back onto the
    constraint manifold.
    """

    def __init__(self, rhs: Rhs, rtol: float = 1e-9, atol: float = 1e-11,
                 project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 max_steps: int = 200000, h_min: float = 1e-14):
        self.rhs = rhs
        self.rtol = rtol
        self.atol = atol
        self.project = project
        self.max_steps = max_steps
        self.h_min = h_min
        self.n_accepted = 0
        self.n_rejected = 0

    def step(self, t: float, y: np.ndarray, h: float):
        """One trial step.

        Returns:
            (fifth-order state, scaled error norm)
        """
        k = np.empty((7,) + y.shape)
        for i in range(7):
            yi = y + h * np.tensordot(_A[i], k[:i], axes=1) if i else y
            k[i] = self.rhs(t + _C[i] * h, yi)
        y_new = y + h * np.tensordot(_B5, k, axes=1)
        err = h * np.tensordot(_E, k, axes=1)
        scale = self.atol + self.rtol * np.maximum(np.abs(y), np.abs(y_new))
        return y_new, float(np.sqrt(np.mean((err / scale) ** 2)))

    def _initial_step(self, t: float, y: np.ndarray, span: float) -> float:
        f0 = self.rhs(t, y)
        scale = self.atol + self.rtol * np.abs(y)
        d0 = np.sqrt(np.mean((y / scale) ** 2))
        d1 = np.sqrt(np.mean((f0 / scale) ** 2))
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        return float(min(h, span))

    def integrate(self, y0: np.ndarray, t_eval: np.ndarray) -> np.ndarray:
        """Integrate from t_eval[0] and return the states at every t_eval.

        Raises:
            StepFailure: step size underflow, too many steps or non-finite state
        """
        t_eval = np.asarray(t_eval, dtype=float)
        y = np.array(y0, dtype=float)
        if self.project is not None:
            y = self.project(y)
        out = np.empty((t_eval.size,) + y.shape)
        out[0] = y
        t = float(t_eval[0])
        h = self._initial_step(t, y, max(t_eval[-1] - t, 1e-300))
        steps = 0
        for idx in range(1, t_eval.size):
            target = float(t_eval[idx])
            while t < target:
                if steps >= self.max_steps:
                    raise StepFailure(f"exceeded {self.max_steps} steps at t={t:.6g}")
                steps += 1
                h_try = min(h, target - t)
                y_new, err = self.step(t, y, h_try)
                if not np.all(np.isfinite(y_new)):
                    err = np.inf
                if err <= 1.0:
                    t = target if h_try == target - t else t + h_try
                    y = self.project(y_new) if self.project is not None else y_new
                    self.n_accepted += 1
                    factor = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
                    # a step clipped to the grid keeps the previous proposal
                    h = max(h, h_try * factor) if h_try < h else h_try * factor
                else:
                    self.n_rejected += 1
                    h = h_try * max(0.1, 0.9 * err ** -0.2) if np.isfinite(err) else h_try * 0.1
                    logger.debug(f"step rejected at t={t:.6g}, err={err:.3g}, new h={h:.3g}")
                    if h < self.h_min:
                        raise StepFailure(f"step size underflow at t={t:.6g}")
            out[idx] = y
        logger.debug(f"integration done: {self.n_accepted} accepted, {self.n_rejected} rejected")
        return out
