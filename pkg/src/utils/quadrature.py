"""Quadrature rules over boxes with a two-level error estimate."""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple
import logging

import numpy as np
from scipy.special import roots_hermite, roots_legendre
from scipy.stats import qmc

from ..core.errors import QuadratureNotConverged

logger = logging.getLogger(__name__)

# tensor Gauss-Legendre up to this many dimensions, Sobol points above
MAX_TENSOR_DIM = 4
CHUNK = 20000
# relative error floor of the two-level estimate
ERROR_FLOOR = 1e-12


@dataclass
class QuadratureSpec:
    """Rule parameters.

    order is the Gauss-Legendre order per dimension of the coarse level (the
    fine level doubles it) or, above MAX_TENSOR_DIM, log2 of the number of
    Sobol points of the coarse level.
    """
    order: int = 24
    levels: int = 2
    tol: float = 1e-8
    seed: int = 0


@dataclass
class QuadratureResult:
    value: complex
    error: float
    n_points: int

    @property
    def relative_error(self) -> float:
        return self.error / max(abs(self.value), np.finfo(float).tiny)


def gauss_legendre(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    knots, weights = roots_legendre(n)
    return 0.5 * (b - a) * knots + 0.5 * (b + a), 0.5 * (b - a) * weights


def gauss_hermite(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Physicists' Gauss-Hermite rule for the weight exp(-x^2)."""
    return roots_hermite(n)


def tensor_rule(lows, highs, order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Product Gauss-Legendre rule on a box, nodes of shape (n^d, d)."""
    rules = [gauss_legendre(a, b, order) for a, b in zip(lows, highs)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wgrids], axis=-1), axis=-1)
    return nodes, weights


def sobol_rule(lows, highs, m: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """2^m scrambled Sobol points with equal weights on a box."""
    lows, highs = np.asarray(lows, dtype=float), np.asarray(highs, dtype=float)
    sampler = qmc.Sobol(d=lows.size, scramble=True, seed=seed)
    nodes = qmc.scale(sampler.random_base2(m), lows, highs)
    volume = float(np.prod(highs - lows))
    return nodes, np.full(nodes.shape[0], volume / nodes.shape[0])


def _rule(lows, highs, spec: QuadratureSpec, level: int):
    if len(lows) <= MAX_TENSOR_DIM:
        return tensor_rule(lows, highs, spec.order * 2 ** level)
    return sobol_rule(lows, highs, spec.order + level, spec.seed)


def _apply(fn: Callable[[np.ndarray], np.ndarray], nodes: np.ndarray, weights: np.ndarray) -> complex:
    total = 0.0
    for start in range(0, nodes.shape[0], CHUNK):
        block = slice(start, start + CHUNK)
        total = total + np.sum(weights[block] * fn(nodes[block]))
    return complex(total)


def integrate_box(fn: Callable[[np.ndarray], np.ndarray], lows, highs, spec: Optional[QuadratureSpec] = None,
                  strict: bool = True) -> QuadratureResult:
    """Integrate fn over a box with two refinement levels.

    Args:
        fn: Vectorized integrand, points (P, d) -> values (P,)
        lows: Lower box corner
        highs: Upper box corner
        spec: Rule parameters
        strict: Raise when the two levels disagree by more than spec.tol

    Returns:
        QuadratureResult of the finest level, error = level difference

    Raises:
        QuadratureNotConverged: in strict mode, when the estimate exceeds tol
    """
    spec = spec or QuadratureSpec()
    values = []
    n_points = 0
    for level in range(max(spec.levels, 2)):
        nodes, weights = _rule(lows, highs, spec, level)
        values.append(_apply(fn, nodes, weights))
        n_points = nodes.shape[0]
        logger.debug(f"quadrature level {level}: {n_points} points, value {values[-1]:.12g}")
    value = values[-1]
    error = max(abs(values[-1] - values[-2]), ERROR_FLOOR * abs(value))
    result = QuadratureResult(value, float(error), n_points)
    if strict and result.relative_error > spec.tol and error > spec.tol:
        raise QuadratureNotConverged(
            f"levels differ by {error:.3e} (value {abs(value):.3e}, tol {spec.tol:.1e})")
    return result
