"""Physical system, shape functionals and conserved quantities.

Coordinates are flat arrays with the interleaved layout
(x_1, y_1, ..., x_N, y_N). Every function accepts a single configuration of
shape (2N,) or a batch of shape (P, 2N); leading axes are carried through.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union
import logging

import numpy as np

from .errors import CoincidentParticles

logger = logging.getLogger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RadialPotential:
    """A central potential f(d) with its analytic derivative.

    When ``mass_weighted`` is set the potential felt by particle alpha is
    m_alpha * f(r); this is how a harmonic trap with a common frequency is
    expressed.
    """
    name: str
    value: ArrayFn
    derivative: ArrayFn
    singular_at_zero: bool = False
    mass_weighted: bool = False
    params: dict = field(default_factory=dict)


def spring_potential(k: float, a: float) -> RadialPotential:
    """Spring with stiffness k and rest length a: V = k/2 (d - a)^2."""
    return RadialPotential(
        name="spring",
        value=lambda d: 0.5 * k * (d - a) ** 2,
        derivative=lambda d: k * (d - a),
        params={"k": k, "a": a},
    )


def coulomb2d_potential(g: float) -> RadialPotential:
    """Planar Coulomb interaction V = g log d."""
    return RadialPotential(
        name="coulomb2d",
        value=lambda d: g * np.log(d),
        derivative=lambda d: g / d,
        singular_at_zero=True,
        params={"g": g},
    )


def harmonic_trap(omega: float) -> RadialPotential:
    """One-body trap U_alpha = m_alpha omega^2 r^2 / 2."""
    return RadialPotential(
        name="harmonic_trap",
        value=lambda r: 0.5 * omega ** 2 * r ** 2,
        derivative=lambda r: omega ** 2 * r,
        mass_weighted=True,
        params={"omega": omega},
    )


@dataclass(frozen=True)
class ParticleSystem:
    """N point particles in the plane.

    Args:
        masses: Positive mass per particle
        pair_potential: Central two-body potential V(d), optional
        body_potential: One-body central potential U(r), optional
        hbar: Planck constant in the chosen units
    """
    masses: np.ndarray
    pair_potential: Optional[RadialPotential] = None
    body_potential: Optional[RadialPotential] = None
    hbar: float = 1.0

    def __post_init__(self):
        masses = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if masses.ndim != 1 or masses.size < 1:
            raise ValueError("masses must be a non-empty list")
        if np.any(masses <= 0) or not np.all(np.isfinite(masses)):
            raise ValueError(f"masses must be positive, got {masses.tolist()}")
        if self.hbar <= 0:
            raise ValueError(f"hbar must be positive, got {self.hbar}")
        object.__setattr__(self, "masses", masses)

    @property
    def n_particles(self) -> int:
        return int(self.masses.size)

    @property
    def dim(self) -> int:
        return 2 * self.n_particles

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def mass_vector(self) -> np.ndarray:
        """Masses repeated per coordinate, length 2N."""
        return np.repeat(self.masses, 2)

    def with_masses(self, masses) -> "ParticleSystem":
        return ParticleSystem(np.asarray(masses, dtype=float), self.pair_potential,
                              self.body_potential, self.hbar)


@dataclass(frozen=True)
class Configuration:
    """Coordinates tagged with the frame they are expressed in."""
    coords: np.ndarray
    frame: str = "lab"

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.shape[-1] % 2:
            raise ValueError("configuration must have an even number of coordinates")
        if not np.all(np.isfinite(coords)):
            raise ValueError("configuration entries must be finite")
        object.__setattr__(self, "coords", coords)

    @property
    def x(self) -> np.ndarray:
        return self.coords[..., 0::2]

    @property
    def y(self) -> np.ndarray:
        return self.coords[..., 1::2]


@dataclass(frozen=True)
class LinearChart:
    """Coefficients of the linear gauge functional.

    S = sum m (A x + B y), Q = sum m (B x - A y). ``with_cm`` adds the
    center-of-mass condition.
    """
    A: np.ndarray
    B: np.ndarray
    with_cm: bool = False

    def __post_init__(self):
        A = np.atleast_1d(np.asarray(self.A, dtype=float))
        B = np.atleast_1d(np.asarray(self.B, dtype=float))
        if A.shape != B.shape or A.ndim != 1:
            raise ValueError("chart coefficients A and B must be equal-length lists")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def coeffs(self) -> np.ndarray:
        """Interleaved (A_1, B_1, ..., A_N, B_N)."""
        out = np.empty(2 * self.A.size)
        out[0::2] = self.A
        out[1::2] = self.B
        return out

    @property
    def dual_coeffs(self) -> np.ndarray:
        """Interleaved (B_1, -A_1, ...), the coefficients of Q."""
        out = np.empty(2 * self.A.size)
        out[0::2] = self.B
        out[1::2] = -self.A
        return out

    def r2(self, sys: ParticleSystem) -> float:
        return float(np.sum(sys.masses * (self.A ** 2 + self.B ** 2)))

    def translation_defect(self, sys: ParticleSystem) -> float:
        """max(|sum m A|, |sum m B|); zero for translation invariant charts."""
        return float(max(abs(np.dot(sys.masses, self.A)), abs(np.dot(sys.masses, self.B))))

    def validate(self, sys: ParticleSystem) -> None:
        if self.A.size != sys.n_particles:
            raise ValueError(f"chart has {self.A.size} coefficients for {sys.n_particles} particles")
        if self.r2(sys) <= 0:
            raise ValueError("chart has vanishing R^2 = sum m (A^2 + B^2)")


@dataclass(frozen=True)
class PrincipalAxesChart:
    """Quadratic gauge S = sum m x y = 0."""
    with_cm: bool = False


GaugeChart = Union[LinearChart, PrincipalAxesChart]


@dataclass(frozen=True)
class ShapeValuesLinear:
    s: np.ndarray
    q: np.ndarray
    r2: float


@dataclass(frozen=True)
class ShapeValuesQuadratic:
    S: np.ndarray
    Q: np.ndarray
    R2: np.ndarray


@dataclass(frozen=True)
class EquilibriumShape:
    """Reference positions Z satisfying sum m Zx Zy = 0 and sum m Z = 0."""
    Z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Z", np.asarray(self.Z, dtype=float))

    def validate(self, sys: ParticleSystem, tol: float = 1e-10) -> None:
        Z = self.Z
        scale = max(float(np.sum(sys.mass_vector * Z ** 2)), 1.0)
        if abs(float(np.sum(sys.masses * Z[0::2] * Z[1::2]))) > tol * scale:
            raise ValueError("equilibrium shape is not on principal axes")
        if np.max(np.abs(center_of_mass(sys, Z))) > tol * np.sqrt(scale):
            raise ValueError("equilibrium shape is not centered at the center of mass")
        pos = Z.reshape(-1, 2)
        if np.all(np.abs(pos - pos[0]) <= tol * np.sqrt(scale)):
            raise ValueError("equilibrium shape needs at least two distinct positions")


def as_coords(cfg) -> np.ndarray:
    """Accept a Configuration or a raw array and return the float array."""
    if isinstance(cfg, Configuration):
        return cfg.coords
    arr = np.asarray(cfg)
    # complex input is kept for complex-step differentiation
    return arr if np.iscomplexobj(arr) else arr.astype(float, copy=False)


def z_cross(cfg: np.ndarray) -> np.ndarray:
    """Per particle z^r = (-y, x)."""
    cfg = as_coords(cfg)
    out = np.empty_like(cfg)
    out[..., 0::2] = -cfg[..., 1::2]
    out[..., 1::2] = cfg[..., 0::2]
    return out


def wedge(sys: ParticleSystem, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """z . sum m a^b."""
    a, b = as_coords(a), as_coords(b)
    return np.sum(sys.masses * (a[..., 0::2] * b[..., 1::2] - a[..., 1::2] * b[..., 0::2]), axis=-1)


def shape_linear(sys: ParticleSystem, cfg, chart: LinearChart) -> ShapeValuesLinear:
    cfg = as_coords(cfg)
    mv = sys.mass_vector
    s = cfg @ (mv * chart.coeffs)
    q = cfg @ (mv * chart.dual_coeffs)
    return ShapeValuesLinear(s=s, q=q, r2=chart.r2(sys))


def shape_quadratic(sys: ParticleSystem, cfg) -> ShapeValuesQuadratic:
    cfg = as_coords(cfg)
    x, y = cfg[..., 0::2], cfg[..., 1::2]
    m = sys.masses
    return ShapeValuesQuadratic(
        S=np.sum(m * x * y, axis=-1),
        Q=0.5 * np.sum(m * (x ** 2 - y ** 2), axis=-1),
        R2=np.sum(m * (x ** 2 + y ** 2), axis=-1),
    )


def center_of_mass(sys: ParticleSystem, cfg) -> np.ndarray:
    cfg = as_coords(cfg)
    m = sys.masses
    return np.stack([cfg[..., 0::2] @ m, cfg[..., 1::2] @ m], axis=-1) / sys.total_mass


def inertia_trace(sys: ParticleSystem, cfg) -> np.ndarray:
    """sum m r^2."""
    cfg = as_coords(cfg)
    return cfg ** 2 @ sys.mass_vector


def _radial_force_factor(pot: RadialPotential, d: np.ndarray, what: str) -> np.ndarray:
    """V'(d)/d with the d = 0 case resolved or rejected."""
    zero = d == 0
    if np.any(zero):
        if pot.singular_at_zero or np.any(pot.derivative(np.zeros(1)) != 0):
            raise CoincidentParticles(f"{what} at zero separation with {pot.name} potential")
    safe = np.where(zero, 1.0, d)
    return np.where(zero, 0.0, pot.derivative(safe) / safe)


def _pair_geometry(sys: ParticleSystem, cfg: np.ndarray):
    pos = cfg.reshape(cfg.shape[:-1] + (sys.n_particles, 2))
    i, j = np.triu_indices(sys.n_particles, k=1)
    diff = pos[..., i, :] - pos[..., j, :]
    return pos, i, j, diff, np.linalg.norm(diff, axis=-1)


def potential_energy(sys: ParticleSystem, cfg) -> np.ndarray:
    cfg = as_coords(cfg)
    total = np.zeros(cfg.shape[:-1])
    if sys.pair_potential is not None and sys.n_particles > 1:
        _, _, _, _, d = _pair_geometry(sys, cfg)
        if sys.pair_potential.singular_at_zero and np.any(d == 0):
            raise CoincidentParticles("coincident particles with singular pair potential")
        total = total + np.sum(sys.pair_potential.value(d), axis=-1)
    if sys.body_potential is not None:
        r = np.hypot(cfg[..., 0::2], cfg[..., 1::2])
        u = sys.body_potential.value(r)
        if sys.body_potential.mass_weighted:
            u = u * sys.masses
        total = total + np.sum(u, axis=-1)
    return total


def potential_gradient(sys: ParticleSystem, cfg) -> np.ndarray:
    cfg = as_coords(cfg)
    grad = np.zeros_like(cfg)
    if sys.pair_potential is not None and sys.n_particles > 1:
        pos, i, j, diff, d = _pair_geometry(sys, cfg)
        f = _radial_force_factor(sys.pair_potential, d, "pair")[..., None] * diff
        g = np.zeros_like(pos)
        for k, (a, b) in enumerate(zip(i, j)):
            g[..., a, :] += f[..., k, :]
            g[..., b, :] -= f[..., k, :]
        grad = grad + g.reshape(cfg.shape)
    if sys.body_potential is not None:
        pos = cfg.reshape(cfg.shape[:-1] + (sys.n_particles, 2))
        r = np.linalg.norm(pos, axis=-1)
        factor = _radial_force_factor(sys.body_potential, r, "body")
        if sys.body_potential.mass_weighted:
            factor = factor * sys.masses
        grad = grad + (factor[..., None] * pos).reshape(cfg.shape)
    return grad


def angular_momentum_lab(sys: ParticleSystem, cfg, vel) -> np.ndarray:
    return wedge(sys, cfg, vel)


def total_momentum_lab(sys: ParticleSystem, vel) -> np.ndarray:
    vel = as_coords(vel)
    return np.stack([vel[..., 0::2] @ sys.masses, vel[..., 1::2] @ sys.masses], axis=-1)


def covariant_velocity(cfg, vel, xi) -> np.ndarray:
    """D_t r = r_dot - xi z^r."""
    xi = np.asarray(xi, dtype=float)
    return as_coords(vel) - xi[..., None] * z_cross(cfg)


def angular_momentum_rotating(sys: ParticleSystem, cfg, vel, xi) -> np.ndarray:
    """z . sum m r^D_t r, the quantity the xi equation pins to ell_z."""
    return wedge(sys, cfg, covariant_velocity(cfg, vel, xi))


def spread_pair(sys: ParticleSystem, vec2) -> np.ndarray:
    """Repeat a planar vector (..., 2) for every particle, giving (..., 2N)."""
    vec2 = np.asarray(vec2, dtype=float)
    return np.tile(vec2, (1,) * (vec2.ndim - 1) + (sys.n_particles,))
