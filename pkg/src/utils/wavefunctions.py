"""Wave functions with analytic derivatives, evaluated on batches of points."""

from dataclasses import dataclass
from typing import Callable, Optional, Tuple
import logging

import numpy as np

logger = logging.getLogger(__name__)

# step for the finite-difference Hessian fallback, relative to the point scale
FD_STEP = np.finfo(float).eps ** 0.2


@dataclass
class WaveFunction:
    """A complex function of body coordinates with its gradient.

    Points are arrays of shape (P, 2N). ``jacobian_absorbed`` marks the
    representation multiplied by the square root of the Faddeev-Popov weight.
    """
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian_absorbed: bool = False
    name: str = ""
    # (center, widths) in body coordinates for localized functions
    support: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __call__(self, x) -> np.ndarray:
        return self.value(np.atleast_2d(np.asarray(x)))

    def grad(self, x) -> np.ndarray:
        return self.gradient(np.atleast_2d(np.asarray(x)))

    def hess(self, x) -> np.ndarray:
        """Analytic Hessian when available, else fourth-order central differences of the gradient."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.hessian is not None:
            return self.hessian(x)
        dim = x.shape[-1]
        h = FD_STEP * max(1.0, float(np.max(np.abs(x))))
        out = np.empty(x.shape + (dim,), dtype=complex)
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            out[..., j] = (-self.gradient(x + 2 * e) + 8 * self.gradient(x + e)
                           - 8 * self.gradient(x - e) + self.gradient(x - 2 * e)) / (12 * h)
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def conjugate(self) -> "WaveFunction":
        hess = None if self.hessian is None else (lambda x: np.conj(self.hessian(x)))
        return WaveFunction(lambda x: np.conj(self.value(x)), lambda x: np.conj(self.gradient(x)),
                            hess, self.jacobian_absorbed, f"conj({self.name})", self.support)


def gaussian_bump(center, widths, slope=None, wave_vector=None, amplitude: complex = 1.0) -> WaveFunction:
    """(1 + b.u) exp(-sum u^2 / 2w^2) exp(i k.u) with u = x - center.

    Args:
        center: Bump center, length 2N
        widths: Per-coordinate widths (scalar or length 2N)
        slope: Polynomial factor b, defaults to zero
        wave_vector: Plane-wave factor k, defaults to zero
        amplitude: Overall constant

    Returns:
        WaveFunction with analytic gradient and Hessian
    """
    c = np.asarray(center, dtype=float)
    w2 = np.broadcast_to(np.asarray(widths, dtype=float), c.shape) ** 2
    b = np.zeros_like(c) if slope is None else np.asarray(slope, dtype=float)
    k = np.zeros_like(c) if wave_vector is None else np.asarray(wave_vector, dtype=float)

    def parts(x):
        u = x - c
        env = amplitude * np.exp(-0.5 * np.sum(u ** 2 / w2, axis=-1) + 1j * (u @ k))
        return u, env, 1.0 + u @ b, -u / w2 + 1j * k

    def value(x):
        _, env, poly, _ = parts(x)
        return poly * env

    def gradient(x):
        _, env, poly, h = parts(x)
        return env[..., None] * (b + poly[..., None] * h)

    def hessian(x):
        _, env, poly, h = parts(x)
        hb = h[..., :, None] * b
        hh = h[..., :, None] * h[..., None, :]
        curvature = hb + np.swapaxes(hb, -1, -2) + poly[..., None, None] * (hh - np.diag(1.0 / w2))
        return env[..., None, None] * curvature

    return WaveFunction(value, gradient, hessian, name="gaussian_bump",
                        support=(c, np.sqrt(w2)))


def product(f: WaveFunction, g: Callable, g_grad: Callable, g_hess: Optional[Callable] = None,
            name: str = "") -> WaveFunction:
    """Pointwise product f * g with a real or complex factor g given with its derivatives."""

    def value(x):
        return f.value(x) * g(x)

    def gradient(x):
        return f.gradient(x) * g(x)[..., None] + f.value(x)[..., None] * g_grad(x)

    hessian = None
    if g_hess is not None:
        def hessian(x):
            fg = f.gradient(x)[..., :, None] * g_grad(x)[..., None, :]
            return (f.hess(x) * g(x)[..., None, None] + fg + np.swapaxes(fg, -1, -2)
                    + f.value(x)[..., None, None] * g_hess(x))

    return WaveFunction(value, gradient, hessian, f.jacobian_absorbed, name or f.name, f.support)
