"""Gauge-surface charts, Faddeev-Popov inner products and gauge-fixed Hamiltonians.

A surface chart parametrizes the gauge surface by free coordinates u and
splits the Faddeev-Popov weight into

    weight(x) = base_density(x) * jacobian(x)

where ``jacobian`` is the function appearing in the kinetic operator
(Q for linear charts, 2Q/R on the principal axes) and ``base_density``
comes from the delta function of the gauge condition (1/|det C_e| for the
linear solve, R/(2|m_e X_e|) for the principal axes with the factor 1/2 of
the half-period angle range folded in). Absorbed wave functions
psi~ = jacobian^(1/2) psi are integrated against the base density alone.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple
import logging

import numpy as np
from scipy import linalg

from .errors import DegenerateJacobian, NoEliminableCoordinate, QuadratureNotConverged
from .gauge import (
    constraint_matrix,
    eckart_chart,
    fix_linear,
    fix_principal_axes,
    mass_projector,
)
from .model import (
    LinearChart,
    ParticleSystem,
    potential_energy,
    shape_linear,
    shape_quadratic,
)
from .operators import (
    FirstOrderOperator,
    lambda_linear,
    lambda_quadratic,
    pi_linear,
    pi_linear_cm,
    pi_quadratic,
)
from ..utils.quadrature import ERROR_FLOOR, QuadratureResult, QuadratureSpec, integrate_box, tensor_rule
from ..utils.wavefunctions import WaveFunction, gaussian_bump, product

logger = logging.getLogger(__name__)

SURFACE_KINDS = ("linear", "linear_cm", "eckart", "principal_axes")
# half-width of integration boxes in units of the bump widths
BOX_SIGMAS = 8.0
PIVOT_TOL = 1e-12


@dataclass
class SurfaceChart:
    """Parametrization of one gauge surface.

    For linear kinds the eliminated coordinates are a fixed linear function
    of the free ones (``embed_matrix``); on the principal axes Y of particle
    ``pivot`` is solved from S = 0.
    """
    sys: ParticleSystem
    gauge_kind: str
    free: np.ndarray
    eliminated: np.ndarray
    chart: Optional[LinearChart] = None
    embed_matrix: Optional[np.ndarray] = None
    det_eliminated: float = 1.0
    pivot: int = 0
    _ops: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def is_linear(self) -> bool:
        return self.gauge_kind != "principal_axes"

    @property
    def n_free(self) -> int:
        return int(self.free.size)

    def embed(self, u) -> np.ndarray:
        """Free coordinates (P, n_free) to surface configurations (P, 2N)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        x = np.empty(u.shape[:-1] + (self.sys.dim,))
        x[..., self.free] = u
        if self.is_linear:
            x[..., self.eliminated] = u @ self.embed_matrix.T
            return x
        e = self.pivot
        x[..., 2 * e + 1] = 0.0
        m = self.sys.masses
        rest = np.sum(m * x[..., 0::2] * x[..., 1::2], axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            x[..., 2 * e + 1] = -rest / (m[e] * x[..., 2 * e])
        return x

    def free_coords(self, x) -> np.ndarray:
        return np.atleast_2d(x)[..., self.free]

    def residual(self, x) -> np.ndarray:
        """Gauge residuals, max over the conditions of the chart."""
        x = np.atleast_2d(x)
        if self.is_linear:
            return np.max(np.abs(x @ constraint_matrix(self.sys, self.chart).T), axis=-1)
        return np.abs(shape_quadratic(self.sys, x).S)

    def jacobian_derivatives(self, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """The kinetic-operator weight with its gradient and Hessian in full coordinates."""
        x = np.atleast_2d(x)
        dim = self.sys.dim
        mv = self.sys.mass_vector
        if self.is_linear:
            normal = mv * self.chart.dual_coeffs
            return (x @ normal, np.broadcast_to(normal, x.shape),
                    np.zeros(x.shape + (dim,)))
        sign = np.tile([1.0, -1.0], self.sys.n_particles)
        F = (x ** 2 * sign) @ mv
        dF = 2 * mv * sign * x
        HF = 2 * np.diag(mv * sign)
        R = np.sqrt((x ** 2) @ mv)
        dR = mv * x / R[..., None]
        HR = np.diag(mv) / R[..., None, None] - dR[..., :, None] * dR[..., None, :] / R[..., None, None]
        Rb, R2b = R[..., None], (R ** 2)[..., None]
        w = F / R
        grad = dF / Rb - F[..., None] * dR / R2b
        cross = dF[..., :, None] * dR[..., None, :]
        hess = (HF / Rb[..., None] - (cross + np.swapaxes(cross, -1, -2)) / R2b[..., None]
                + 2 * F[..., None, None] * dR[..., :, None] * dR[..., None, :] / (R ** 3)[..., None, None]
                - F[..., None, None] * HR / R2b[..., None])
        return w, grad, hess

    def jacobian(self, x) -> np.ndarray:
        return self.jacobian_derivatives(x)[0]

    def base_density(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.is_linear:
            return np.full(x.shape[:-1], 1.0 / self.det_eliminated)
        e = self.pivot
        R = np.sqrt((x ** 2) @ self.sys.mass_vector)
        return R / (2 * np.abs(self.sys.masses[e] * x[..., 2 * e]))

    def weight(self, x) -> np.ndarray:
        return self.base_density(x) * self.jacobian(x)

    def domain(self, x) -> np.ndarray:
        """Theta indicator: positive Faddeev-Popov determinant."""
        x = np.atleast_2d(x)
        if self.is_linear:
            return shape_linear(self.sys, x, self.chart).q > 0
        inside = np.isfinite(x).all(axis=-1) & (x[..., 2 * self.pivot] != 0)
        q = np.where(inside, shape_quadratic(self.sys, np.where(inside[..., None], x, 1.0)).Q, -1.0)
        return inside & (q > 0)

    def momenta(self) -> List[FirstOrderOperator]:
        if "pi" not in self._ops:
            if self.gauge_kind == "linear":
                self._ops["pi"] = pi_linear(self.sys, self.chart)
            elif self.is_linear:
                self._ops["pi"] = pi_linear_cm(self.sys, self.chart)
            else:
                self._ops["pi"] = pi_quadratic(self.sys)
        return self._ops["pi"]

    def residual_angular_momentum(self) -> FirstOrderOperator:
        if "lambda" not in self._ops:
            self._ops["lambda"] = lambda_linear(self.sys, self.chart) if self.is_linear \
                else lambda_quadratic(self.sys)
        return self._ops["lambda"]

    def centrifugal_factor(self, x) -> np.ndarray:
        """R2/(2 Q^2) for linear charts, R^2/(8 Q^2) on the principal axes."""
        x = np.atleast_2d(x)
        if self.is_linear:
            q = shape_linear(self.sys, x, self.chart).q
            return self.chart.r2(self.sys) / (2 * q ** 2)
        vals = shape_quadratic(self.sys, x)
        return vals.R2 / (8 * vals.Q ** 2)

    def project(self, x) -> np.ndarray:
        """Map arbitrary configurations onto the surface (inside the domain)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.is_linear:
            fixed = fix_linear(self.sys, x, LinearChart(self.chart.A, self.chart.B)).body_cfg.coords
            return fixed @ mass_projector(self.sys, constraint_matrix(self.sys, self.chart)).T
        return fix_principal_axes(self.sys, x).body_cfg.coords


def surface_chart(sys: ParticleSystem, gauge_kind: str, chart: Optional[LinearChart] = None,
                  Z=None, pivot: Optional[int] = None) -> SurfaceChart:
    """Build the parametrization of a gauge surface.

    Args:
        sys: Particle system
        gauge_kind: linear, linear_cm, eckart or principal_axes
        chart: Linear chart coefficients (linear kinds)
        Z: Equilibrium shape (eckart)
        pivot: Particle whose Y is eliminated on the principal axes

    Raises:
        NoEliminableCoordinate: the linear conditions have no solvable coordinate
    """
    if gauge_kind not in SURFACE_KINDS:
        raise ValueError(f"unknown gauge kind {gauge_kind!r}, expected one of {SURFACE_KINDS}")
    if gauge_kind == "principal_axes":
        e = 0 if pivot is None else int(pivot)
        if not 0 <= e < sys.n_particles:
            raise ValueError(f"pivot particle {e} out of range")
        free = np.array([j for j in range(sys.dim) if j != 2 * e + 1])
        return SurfaceChart(sys, gauge_kind, free, np.array([2 * e + 1]), pivot=e)

    if gauge_kind == "eckart":
        if Z is None:
            raise ValueError("eckart surface needs an equilibrium shape Z")
        chart = eckart_chart(Z)
    if chart is None:
        raise ValueError(f"{gauge_kind} surface needs a linear chart")
    if chart.A.size != sys.n_particles:
        raise ValueError(f"chart has {chart.A.size} coefficients for {sys.n_particles} particles")
    chart = LinearChart(chart.A, chart.B, with_cm=gauge_kind != "linear")
    rows = constraint_matrix(sys, chart)
    r_factor, piv = linalg.qr(rows, mode="r", pivoting=True)
    diag = np.abs(np.diag(r_factor))
    if diag.size < rows.shape[0] or diag[0] == 0 or np.any(diag < PIVOT_TOL * diag[0]):
        raise NoEliminableCoordinate("gauge conditions have no independent coordinate to solve for")
    chart.validate(sys)
    eliminated = np.sort(piv[:rows.shape[0]])
    free = np.array([j for j in range(sys.dim) if j not in set(eliminated)])
    c_elim = rows[:, eliminated]
    embed_matrix = -linalg.solve(c_elim, rows[:, free])
    det = abs(float(linalg.det(c_elim)))
    logger.debug(f"{gauge_kind} surface: eliminated {eliminated.tolist()}, |det| {det:.3e}")
    return SurfaceChart(sys, gauge_kind, free, eliminated, chart, embed_matrix, det)


def _box(surface: SurfaceChart, *fns: WaveFunction):
    supports = [f.support for f in fns if f.support is not None]
    if not supports:
        raise ValueError("wave functions carry no support; pass an explicit box")
    lows = np.min([c[surface.free] - BOX_SIGMAS * w[surface.free] for c, w in supports], axis=0)
    highs = np.max([c[surface.free] + BOX_SIGMAS * w[surface.free] for c, w in supports], axis=0)
    return lows, highs


def integrate_surface(surface: SurfaceChart, fn: Callable[[np.ndarray], np.ndarray], box,
                      spec: Optional[QuadratureSpec] = None, absorbed: bool = False,
                      strict: bool = True) -> QuadratureResult:
    """Integrate fn(x) over the surface domain with the Faddeev-Popov measure."""
    density = surface.base_density if absorbed else surface.weight

    def integrand(u):
        x = surface.embed(u)
        mask = surface.domain(x)
        out = np.zeros(x.shape[0], dtype=complex)
        if np.any(mask):
            xm = x[mask]
            out[mask] = density(xm) * fn(xm)
        return out

    return integrate_box(integrand, box[0], box[1], spec, strict=strict)


def inner_product(surface: SurfaceChart, phi: WaveFunction, psi: WaveFunction,
                  spec: Optional[QuadratureSpec] = None, box=None, strict: bool = True) -> QuadratureResult:
    """<phi|psi> with the gauge-fixed measure (factors 2 pi dropped).

    Raises:
        QuadratureNotConverged: the two quadrature levels disagree beyond spec.tol
    """
    if phi.jacobian_absorbed != psi.jacobian_absorbed:
        raise ValueError("cannot mix absorbed and plain wave functions")
    box = box if box is not None else _box(surface, phi, psi)
    return integrate_surface(surface, lambda x: np.conj(phi(x)) * psi(x), box, spec,
                             absorbed=psi.jacobian_absorbed, strict=strict)


def quantum_potential(surface: SurfaceChart, cfg) -> np.ndarray:
    """-R2/(8 Q^2) (linear charts) or -R^2/(8Q^2) + (7 - 4N)/(8R^2) (principal axes), times hbar^2.

    Raises:
        DegenerateJacobian: Q vanishes at a point
    """
    x = np.atleast_2d(cfg)
    hbar2 = surface.sys.hbar ** 2
    if surface.is_linear:
        q = shape_linear(surface.sys, x, surface.chart).q
        if np.any(q == 0):
            raise DegenerateJacobian("Q = 0 in the quantum potential")
        return -hbar2 * surface.chart.r2(surface.sys) / (8 * q ** 2)
    vals = shape_quadratic(surface.sys, x)
    if np.any(vals.Q == 0):
        raise DegenerateJacobian("Q = 0 in the quantum potential")
    n = surface.sys.n_particles
    return hbar2 * (-vals.R2 / (8 * vals.Q ** 2) + (7 - 4 * n) / (8 * vals.R2))


def _sqrt_jacobian(surface: SurfaceChart, power: float):
    """jacobian^power with gradient and Hessian."""

    def derivs(x):
        w, gw, hw = surface.jacobian_derivatives(x)
        if np.any(w <= 0):
            raise DegenerateJacobian("jacobian must be positive to absorb its square root")
        f = w ** power
        d1 = power * w ** (power - 1)
        d2 = power * (power - 1) * w ** (power - 2)
        grad = d1[..., None] * gw
        hess = d1[..., None, None] * hw + d2[..., None, None] * gw[..., :, None] * gw[..., None, :]
        return f, grad, hess
    return (lambda x: derivs(x)[0], lambda x: derivs(x)[1], lambda x: derivs(x)[2])


def absorb_jacobian(surface: SurfaceChart, psi: WaveFunction) -> WaveFunction:
    """psi~ = jacobian^(1/2) psi."""
    if psi.jacobian_absorbed:
        raise ValueError("wave function is already in the absorbed representation")
    g, dg, hg = _sqrt_jacobian(surface, 0.5)
    out = product(psi, g, dg, hg, name=f"absorbed({psi.name})")
    out.jacobian_absorbed = True
    return out


def emit_jacobian(surface: SurfaceChart, psi_tilde: WaveFunction) -> WaveFunction:
    """psi = jacobian^(-1/2) psi~."""
    if not psi_tilde.jacobian_absorbed:
        raise ValueError("wave function is not in the absorbed representation")
    g, dg, hg = _sqrt_jacobian(surface, -0.5)
    out = product(psi_tilde, g, dg, hg, name=f"emitted({psi_tilde.name})")
    out.jacobian_absorbed = False
    return out


def apply_hamiltonian(surface: SurfaceChart, psi: WaveFunction, ell_z: int) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluator of H psi on surface points.

    Plain representation: sum (1/2m)(1/J) Pi J Pi + centrifugal (ell_z - Lambda)^2 + V
    with J the chart jacobian. Absorbed representation: sum (1/2m) Pi^2 with
    the same centrifugal and potential terms plus the quantum potential.
    """
    sys = surface.sys
    mv = sys.mass_vector
    pis = surface.momenta()
    lam = surface.residual_angular_momentum()
    hbar2 = sys.hbar ** 2
    absorbed = psi.jacobian_absorbed

    def evaluate(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        val, g, hs = psi(x), psi.grad(x), psi.hess(x)
        w, gw, _ = surface.jacobian_derivatives(x)
        if np.any(np.abs(w) <= np.finfo(float).tiny):
            raise DegenerateJacobian("Faddeev-Popov determinant vanishes at an evaluation point")
        kinetic = np.zeros(x.shape[0], dtype=complex)
        for k, op in enumerate(pis):
            v = op.coefficients(x)
            dpsi = np.sum(v * g, axis=-1)
            ddpsi = (np.einsum("pi,pij,pj->p", v, hs, v)
                     + np.sum(np.einsum("pij,pj->pi", op.jacobian(x), v) * g, axis=-1))
            if not absorbed:
                ddpsi = ddpsi + np.sum(v * gw, axis=-1) / w * dpsi
            kinetic -= ddpsi / (2 * mv[k])
        c = lam.coefficients(x)
        lam_sq = (np.einsum("pi,pij,pj->p", c, hs, c)
                  + np.sum(np.einsum("pij,pj->pi", lam.jacobian(x), c) * g, axis=-1))
        residual_sq = ell_z ** 2 * val + 2j * ell_z * np.sum(c * g, axis=-1) - lam_sq
        out = hbar2 * (kinetic + surface.centrifugal_factor(x) * residual_sq) + potential_energy(sys, x) * val
        if absorbed:
            out = out + quantum_potential(surface, x) * val
        return out
    return evaluate


def representation_check(surface: SurfaceChart, psi: WaveFunction, ell_z: int, points) -> float:
    """max |H~ psi~ - J^(1/2) H psi| / max |J^(1/2) H psi| on surface points."""
    points = np.atleast_2d(points)
    plain = apply_hamiltonian(surface, psi, ell_z)(points) * np.sqrt(surface.jacobian(points))
    absorbed = apply_hamiltonian(surface, absorb_jacobian(surface, psi), ell_z)(points)
    scale = max(float(np.max(np.abs(plain))), 1.0)
    return float(np.max(np.abs(absorbed - plain))) / scale


def rayleigh_quotient(surface: SurfaceChart, psi: WaveFunction, ell_z: int,
                      spec: Optional[QuadratureSpec] = None, box=None) -> complex:
    """<psi|H psi> / <psi|psi> over the chart domain."""
    box = box if box is not None else _box(surface, psi)
    h_psi = apply_hamiltonian(surface, psi, ell_z)
    num = integrate_surface(surface, lambda x: np.conj(psi(x)) * h_psi(x), box, spec,
                            absorbed=psi.jacobian_absorbed)
    den = inner_product(surface, psi, psi, spec, box)
    return num.value / den.value


@dataclass
class HermiticityReport:
    gauge_kind: str
    ell_z: int
    trials: List[Dict[str, float]]
    factor: float = 5.0

    @property
    def max_asymmetry_hamiltonian(self) -> float:
        return max(t["asym_H"] for t in self.trials)

    @property
    def max_asymmetry_lambda(self) -> float:
        return max(t["asym_Lambda"] for t in self.trials)

    @property
    def passed(self) -> bool:
        return all(t["asym_H"] <= self.factor * t["quad_err_H"] and
                   t["asym_Lambda"] <= self.factor * t["quad_err_Lambda"] for t in self.trials)

    def to_dict(self) -> Dict:
        return {"gauge_kind": self.gauge_kind, "ell_z": self.ell_z, "pass": self.passed,
                "max_asym_H": self.max_asymmetry_hamiltonian,
                "max_asym_Lambda": self.max_asymmetry_lambda, "trials": self.trials}


def _boundary_distance(surface: SurfaceChart, c: np.ndarray) -> float:
    """Rough distance from a surface point to the edge of the chart domain."""
    w, gw, _ = surface.jacobian_derivatives(c)
    dist = float(w[0] / max(np.linalg.norm(gw[0]), 1e-300))
    if not surface.is_linear:
        dist = min(dist, abs(float(c[0, 2 * surface.pivot])))
    return dist


def random_test_function(surface: SurfaceChart, rng: np.random.Generator, center=None,
                         scale: float = 1.0) -> WaveFunction:
    """A localized bump times a linear polynomial and a plane wave, well inside the domain."""
    for _ in range(100):
        c = surface.project(rng.normal(scale=scale, size=surface.sys.dim)) if center is None \
            else np.atleast_2d(center)
        if surface.domain(c)[0] and _boundary_distance(surface, c) > 0.2 * scale:
            break
        center = None
    else:
        raise ValueError("could not place a test function inside the chart domain")
    sigma = min(0.1 * _boundary_distance(surface, c), 0.3 * scale)
    dim = surface.sys.dim
    return gaussian_bump(c[0], sigma, slope=rng.normal(scale=0.5 / sigma, size=dim),
                         wave_vector=rng.normal(scale=0.5 / sigma, size=dim))


def hermiticity_check(surface: SurfaceChart, ell_z: int = 0, trials: int = 20,
                      spec: Optional[QuadratureSpec] = None, seed: int = 0,
                      factor: float = 5.0) -> HermiticityReport:
    """Compare <phi|H psi> with <H phi|psi> (and the same for Lambda) on random test pairs.

    Asymmetries and quadrature errors are relative to ||phi|| ||psi||.
    """
    rng = np.random.default_rng(seed)
    spec = spec or QuadratureSpec()
    lam = surface.residual_angular_momentum()
    rows = []
    for trial in range(trials):
        phi = random_test_function(surface, rng)
        c_phi, w_phi = phi.support
        nudge = surface.project(c_phi + rng.normal(scale=w_phi[0], size=c_phi.size))[0]
        psi = random_test_function(surface, rng, center=nudge)
        box = _box(surface, phi, psi)
        norm = np.sqrt(abs(inner_product(surface, phi, phi, spec, box, strict=False).value *
                           inner_product(surface, psi, psi, spec, box, strict=False).value))
        h_phi = apply_hamiltonian(surface, phi, ell_z)
        h_psi = apply_hamiltonian(surface, psi, ell_z)
        a = integrate_surface(surface, lambda x: np.conj(phi(x)) * h_psi(x), box, spec, strict=False)
        b = integrate_surface(surface, lambda x: np.conj(h_phi(x)) * psi(x), box, spec, strict=False)
        la = integrate_surface(surface, lambda x: np.conj(phi(x)) * lam.apply(psi, x), box, spec, strict=False)
        lb = integrate_surface(surface, lambda x: np.conj(lam.apply(phi, x)) * psi(x), box, spec, strict=False)
        row = {
            "trial": trial,
            "asym_H": abs(a.value - b.value) / norm,
            "quad_err_H": max((a.error + b.error) / norm, ERROR_FLOOR),
            "asym_Lambda": abs(la.value - lb.value) / norm,
            "quad_err_Lambda": max((la.error + lb.error) / norm, ERROR_FLOOR),
        }
        if row["quad_err_H"] > spec.tol:
            logger.warning(f"trial {trial}: quadrature error {row['quad_err_H']:.2e} above {spec.tol:.1e}")
        logger.debug(f"trial {trial}: asym_H {row['asym_H']:.2e}, asym_Lambda {row['asym_Lambda']:.2e}")
        rows.append(row)
    report = HermiticityReport(surface.gauge_kind, ell_z, rows, factor)
    logger.info(f"hermiticity ({surface.gauge_kind}): max asymmetry H {report.max_asymmetry_hamiltonian:.2e}, "
                f"Lambda {report.max_asymmetry_lambda:.2e}")
    return report


def n1_route_check(sys: ParticleSystem, psi: WaveFunction, ell_z: int,
                   spec: Optional[QuadratureSpec] = None) -> Tuple[float, float]:
    """Chart norm of a one-particle state against the lab-plane integral divided by 2 pi.

    psi is a function of body coordinates (X, Y); the lab state is
    psi(R(r)) exp(i ell_z theta(r)).

    Returns:
        (chart value, lab value)
    """
    if sys.n_particles != 1:
        raise ValueError("route check is defined for a single particle")
    chart = LinearChart([0.0], [1.0])
    surface = surface_chart(sys, "linear", chart)
    chart_norm = inner_product(surface, psi, psi, spec).value.real
    c, w = psi.support
    half = float(np.max(np.abs(c) + BOX_SIGMAS * w))
    spec = spec or QuadratureSpec()
    values = []
    for level in range(2):
        nodes, weights = tensor_rule([-half, -half], [half, half], spec.order * 2 ** (level + 1))
        fix = fix_linear(sys, nodes, chart)
        values.append(float(np.sum(weights * np.abs(psi(fix.body_cfg.coords)) ** 2)) / (2 * np.pi))
    if abs(values[1] - values[0]) > spec.tol * max(abs(values[1]), 1.0):
        raise QuadratureNotConverged(f"lab integral levels differ by {abs(values[1] - values[0]):.3e}")
    logger.info(f"N=1 route check: chart {chart_norm:.12g}, lab {values[1]:.12g}")
    return chart_norm, values[1]
