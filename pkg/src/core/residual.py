"""Orbits, kernel and eigenfunctions of the residual angular momentum.

Lambda = (1/i) c.grad generates the flow dx/dalpha = -c(x) on the gauge
surface. In a linear chart the flow rotates every particle about the
shifted center (B Q/R2, -A Q/R2) with unit frequency; on the principal
axes it runs on ellipses with the shape-dependent frequency

    Omega = (1 - 4 Q^2 / R^4)^(1/2) = 2 sqrt(Px Py) / (Px + Py)

where Px = sum m X^2 and Py = sum m Y^2. Eigenfunctions are built from
the angles along these orbits; integer windings keep them single valued,
so the eigenvalues are integers in a linear chart and n Omega on the
principal axes.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import numbers

import numpy as np

from .dynamics import check_on_surface
from .errors import CollinearDegenerate, NonIntegerEigenvalue
from .model import (
    LinearChart,
    ParticleSystem,
    PrincipalAxesChart,
    as_coords,
    shape_linear,
    shape_quadratic,
)
from .operators import FirstOrderOperator, lambda_linear, lambda_quadratic
from ..utils.wavefunctions import WaveFunction, product

logger = logging.getLogger(__name__)

# orbit frequencies below this are treated as the collinear limit
OMEGA_DEGENERATE = 1e-14


@dataclass(frozen=True)
class OrbitSpec:
    """Start point and angle range of a Lambda orbit.

    ``chart`` is a LinearChart or a PrincipalAxesChart.
    """
    sys: ParticleSystem
    chart: object
    start: np.ndarray
    alphas: np.ndarray

    @property
    def gauge_kind(self) -> str:
        return "principal_axes" if isinstance(self.chart, PrincipalAxesChart) else "linear"


def _x_y(cfg: np.ndarray):
    return cfg[..., 0::2], cfg[..., 1::2]


def _interleave(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[:-1] + (2 * x.shape[-1],), dtype=np.result_type(x, y))
    out[..., 0::2] = x
    out[..., 1::2] = y
    return out


def omega_factor(Q, R2) -> np.ndarray:
    """(1 - 4Q^2/R^4)^(1/2), clipped at zero against roundoff."""
    Q, R2 = np.asarray(Q, dtype=float), np.asarray(R2, dtype=float)
    return np.sqrt(np.clip(1.0 - 4.0 * Q ** 2 / R2 ** 2, 0.0, None))


def _linear_shift(sys: ParticleSystem, chart: LinearChart, cfg: np.ndarray):
    """Centers (B Q/R2, -A Q/R2) per particle and the shifted coordinates (u, v)."""
    q = shape_linear(sys, cfg, chart).q / chart.r2(sys)
    x, y = _x_y(cfg)
    cx = chart.B * q[..., None]
    cy = -chart.A * q[..., None]
    return cx, cy, x - cx, y - cy


def orbit_linear(sys: ParticleSystem, chart: LinearChart, cfg0, alpha) -> np.ndarray:
    """Point of the Lambda orbit through cfg0 at angle alpha.

    Args:
        sys: Particle system
        chart: Linear chart
        cfg0: On-surface start configuration(s)
        alpha: Angle, scalar or broadcastable against the leading axes

    Raises:
        OffSurface: cfg0 violates S = 0
    """
    cfg0 = as_coords(cfg0)
    check_on_surface(sys, chart, cfg0)
    cx, cy, u, v = _linear_shift(sys, chart, cfg0)
    alpha = np.asarray(alpha, dtype=float)[..., None]
    c, s = np.cos(alpha), np.sin(alpha)
    return _interleave(cx + c * u + s * v, cy + c * v - s * u)


def _principal_moments(sys: ParticleSystem, cfg: np.ndarray):
    x, y = _x_y(cfg)
    return np.sum(sys.masses * x ** 2, axis=-1), np.sum(sys.masses * y ** 2, axis=-1)


def orbit_quadratic(sys: ParticleSystem, cfg0, alpha) -> np.ndarray:
    """Point of the principal-axes Lambda orbit through cfg0.

    The off-diagonal factors are written as (1 +- g) alpha sinc(Omega alpha)
    with g = 2Q/R^2, which stays finite as Omega goes to zero.

    Raises:
        OffSurface: cfg0 violates S = 0
        CollinearDegenerate: all particles on the X axis (2Q = R^2)
    """
    cfg0 = as_coords(cfg0)
    check_on_surface(sys, PrincipalAxesChart(), cfg0)
    vals = shape_quadratic(sys, cfg0)
    omega = omega_factor(vals.Q, vals.R2)
    if np.any(omega <= OMEGA_DEGENERATE):
        raise CollinearDegenerate("Omega = 0: the shape is collinear along the X axis")
    g = 2 * vals.Q / vals.R2
    alpha = np.asarray(alpha, dtype=float)
    phase = omega * alpha
    # sin(Omega a) / Omega = a sinc(Omega a / pi)
    sin_over = alpha * np.sinc(phase / np.pi)
    c = np.cos(phase)[..., None]
    up = ((1 + g) * sin_over)[..., None]
    down = ((1 - g) * sin_over)[..., None]
    x, y = _x_y(cfg0)
    return _interleave(c * x + up * y, c * y - down * x)


def orbit_period(sys: ParticleSystem, cfg0) -> np.ndarray:
    """2 pi / Omega for principal-axes orbits."""
    vals = shape_quadratic(sys, as_coords(cfg0))
    omega = omega_factor(vals.Q, vals.R2)
    if np.any(omega <= OMEGA_DEGENERATE):
        raise CollinearDegenerate("Omega = 0: orbit period is infinite")
    return 2 * np.pi / omega


def orbit(spec: OrbitSpec) -> np.ndarray:
    """Sample an orbit over ``spec.alphas``, shape (len(alphas), 2N)."""
    alphas = np.asarray(spec.alphas, dtype=float)
    start = np.broadcast_to(as_coords(spec.start), alphas.shape + (spec.sys.dim,))
    if spec.gauge_kind == "linear":
        return orbit_linear(spec.sys, spec.chart, start, alphas)
    return orbit_quadratic(spec.sys, start, alphas)


def kernel_invariants(sys: ParticleSystem, chart, cfg) -> np.ndarray:
    """rho_gamma^2 per particle, constant along the orbits.

    Raises:
        OffSurface: cfg is not on the gauge surface
    """
    cfg = as_coords(cfg)
    check_on_surface(sys, chart, cfg)
    if isinstance(chart, LinearChart):
        _, _, u, v = _linear_shift(sys, chart, cfg)
        return u ** 2 + v ** 2
    vals = shape_quadratic(sys, cfg)
    g = (2 * vals.Q / vals.R2)[..., None]
    x, y = _x_y(cfg)
    return (1 - g) * x ** 2 + (1 + g) * y ** 2


def _rho_derivatives(sys: ParticleSystem, chart, x: np.ndarray):
    """rho^2 (P, N) and its gradient (P, N, 2N) without the surface check."""
    n = sys.n_particles
    X, Y = _x_y(x)
    idx = np.arange(n)
    grad = np.zeros(x.shape[:-1] + (n, sys.dim))
    if isinstance(chart, LinearChart):
        _, _, u, v = _linear_shift(sys, chart, x)
        normal = sys.mass_vector * chart.dual_coeffs / chart.r2(sys)
        grad[..., idx, 2 * idx] += 2 * u
        grad[..., idx, 2 * idx + 1] += 2 * v
        grad += (-2 * u * chart.B + 2 * v * chart.A)[..., None] * normal
        return u ** 2 + v ** 2, grad
    mv = sys.mass_vector
    sign = np.tile([1.0, -1.0], n)
    r2 = (x ** 2) @ mv
    g = ((x ** 2 * sign) @ mv) / r2
    grad_g = 2 * mv * x * (sign - g[..., None]) / r2[..., None]
    gb = g[..., None]
    grad[..., idx, 2 * idx] += 2 * (1 - gb) * X
    grad[..., idx, 2 * idx + 1] += 2 * (1 + gb) * Y
    grad += (Y ** 2 - X ** 2)[..., None] * grad_g[..., None, :]
    return (1 - gb) * X ** 2 + (1 + gb) * Y ** 2, grad


def kernel_gaussian(sys: ParticleSystem, chart, widths, poly: Sequence[float] = (1.0,),
                    radial_width: Optional[float] = None) -> WaveFunction:
    """A kernel function of Lambda.

    C = p(Q) exp(-sum rho_g^2 / 2 w_g^2), times exp(-R^2 / 2 radial_width^2)
    on the principal axes when ``radial_width`` is given; p is a polynomial
    with coefficients ``poly`` in increasing order.
    """
    w2 = np.broadcast_to(np.asarray(widths, dtype=float), (sys.n_particles,)) ** 2
    coeffs = np.asarray(poly, dtype=float)
    dcoeffs = coeffs[1:] * np.arange(1, coeffs.size)
    mv = sys.mass_vector
    linear = isinstance(chart, LinearChart)
    sign = np.tile([1.0, -1.0], sys.n_particles)

    def shape_scalar(x):
        if linear:
            normal = mv * chart.dual_coeffs
            return x @ normal, np.broadcast_to(normal, x.shape)
        return 0.5 * (x ** 2 * sign) @ mv, mv * sign * x

    def parts(x):
        rho2, drho2 = _rho_derivatives(sys, chart, x)
        expo = -0.5 * np.sum(rho2 / w2, axis=-1)
        dexpo = -0.5 * np.einsum("...n,...nd->...d", 1.0 / w2 * np.ones_like(rho2), drho2)
        if not linear and radial_width is not None:
            expo = expo - 0.5 * ((x ** 2) @ mv) / radial_width ** 2
            dexpo = dexpo - mv * x / radial_width ** 2
        s, ds = shape_scalar(x)
        p = np.polynomial.polynomial.polyval(s, coeffs)
        dp = np.polynomial.polynomial.polyval(s, dcoeffs) if dcoeffs.size else np.zeros_like(s)
        return np.exp(expo), dexpo, p, dp[..., None] * ds

    def value(x):
        env, _, p, _ = parts(x)
        return (p * env).astype(complex)

    def gradient(x):
        env, dexpo, p, dp = parts(x)
        return (env[..., None] * (dp + p[..., None] * dexpo)).astype(complex)

    return WaveFunction(value, gradient, name="kernel_gaussian")


def _check_integers(values: Sequence, n_particles: int) -> Tuple[int, ...]:
    values = list(np.atleast_1d(values))
    if len(values) != n_particles:
        raise ValueError(f"need one winding number per particle, got {len(values)} for {n_particles}")
    out = []
    for v in values:
        if isinstance(v, numbers.Integral):
            out.append(int(v))
        elif isinstance(v, numbers.Real) and float(v).is_integer():
            out.append(int(v))
        else:
            raise NonIntegerEigenvalue(f"winding numbers must be integers, got {v}")
    return tuple(out)


@dataclass
class ResidualEigenfunction(WaveFunction):
    """An eigenfunction C exp(i sum k_g alpha_g) of Lambda with its winding numbers."""
    integers: Tuple[int, ...] = ()
    gauge_kind: str = "linear"
    sys: Optional[ParticleSystem] = field(default=None, repr=False)

    @property
    def total(self) -> int:
        return int(sum(self.integers))

    def eigenvalue(self, x) -> np.ndarray:
        """lambda at each point: the integer sum, or n Omega(Q, R^2) on the principal axes."""
        x = np.atleast_2d(x)
        if self.gauge_kind == "linear":
            return np.full(x.shape[:-1], float(self.total))
        vals = shape_quadratic(self.sys, x)
        return self.total * omega_factor(vals.Q, vals.R2)


def _with_kernel(phase_value, phase_grad, kernel: Optional[WaveFunction]):
    if kernel is None:
        return WaveFunction(phase_value, phase_grad)
    return product(kernel, phase_value, phase_grad)


def eigenfunction_linear(sys: ParticleSystem, chart: LinearChart, lambdas,
                         kernel: Optional[WaveFunction] = None) -> ResidualEigenfunction:
    """Psi = C exp(i sum lambda_g alpha_g), alpha_g = atan2(R2 Y + Q A, R2 X - Q B).

    Raises:
        NonIntegerEigenvalue: a winding number is not an integer
    """
    chart.validate(sys)
    k = np.array(_check_integers(lambdas, sys.n_particles), dtype=float)
    n = sys.n_particles
    idx = np.arange(n)
    normal = sys.mass_vector * chart.dual_coeffs / chart.r2(sys)

    def phase(x):
        _, _, u, v = _linear_shift(sys, chart, x)
        return np.exp(1j * np.sum(k * np.arctan2(v, u), axis=-1))

    def phase_grad(x):
        _, _, u, v = _linear_shift(sys, chart, x)
        rho2 = u ** 2 + v ** 2
        # d alpha = (u dv - v du) / rho^2, du = dX - B dQ/R2, dv = dY + A dQ/R2
        da = np.zeros(x.shape[:-1] + (n, sys.dim))
        da[..., idx, 2 * idx] = -v / rho2
        da[..., idx, 2 * idx + 1] = u / rho2
        da += ((u * chart.A + v * chart.B) / rho2)[..., None] * normal
        return 1j * phase(x)[..., None] * np.einsum("n,...nd->...d", k, da)

    base = _with_kernel(phase, phase_grad, kernel)
    return ResidualEigenfunction(base.value, base.gradient, base.hessian, name=f"Psi_lin{tuple(k.astype(int))}",
                                 integers=tuple(k.astype(int)), gauge_kind="linear", sys=sys)


def eigenfunction_quadratic(sys: ParticleSystem, ns, kernel: Optional[WaveFunction] = None) -> ResidualEigenfunction:
    """Psi = C exp(i sum n_g atan2(kappa Y_g, X_g)) with kappa = (Px/Py)^(1/2).

    This is exp(i sum n_g Omega alpha_g) with Omega cancelled; the
    eigenvalue is n Omega with n = sum n_g.

    Raises:
        NonIntegerEigenvalue: a winding number is not an integer
        CollinearDegenerate: evaluated where Py = 0
    """
    k = np.array(_check_integers(ns, sys.n_particles), dtype=float)
    n = sys.n_particles
    idx = np.arange(n)
    m = sys.masses

    def kappa_parts(x):
        px, py = _principal_moments(sys, x)
        if np.any(py <= 0):
            raise CollinearDegenerate("Omega = 0: eigenfunction undefined on collinear shapes")
        return px, py, np.sqrt(px / py)

    def phase(x):
        _, _, kappa = kappa_parts(x)
        X, Y = _x_y(x)
        return np.exp(1j * np.sum(k * np.arctan2(kappa[..., None] * Y, X), axis=-1))

    def phase_grad(x):
        px, py, kappa = kappa_parts(x)
        X, Y = _x_y(x)
        kb = kappa[..., None]
        denom = X ** 2 + (kb * Y) ** 2
        dkappa = np.zeros(x.shape)
        dkappa[..., 0::2] = kb * m * X / px[..., None]
        dkappa[..., 1::2] = -kb * m * Y / py[..., None]
        # d atan2(kappa Y, X) = (X d(kappa Y) - kappa Y dX) / (X^2 + kappa^2 Y^2)
        da = (X / denom)[..., None] * Y[..., None] * dkappa[..., None, :]
        da = np.broadcast_to(da, x.shape[:-1] + (n, sys.dim)).copy()
        da[..., idx, 2 * idx + 1] += kb * X / denom
        da[..., idx, 2 * idx] -= kb * Y / denom
        return 1j * phase(x)[..., None] * np.einsum("n,...nd->...d", k, da)

    base = _with_kernel(phase, phase_grad, kernel)
    return ResidualEigenfunction(base.value, base.gradient, base.hessian, name=f"Psi_pa{tuple(k.astype(int))}",
                                 integers=tuple(k.astype(int)), gauge_kind="principal_axes", sys=sys)


def lambda_for(sys: ParticleSystem, chart) -> FirstOrderOperator:
    if isinstance(chart, LinearChart):
        return lambda_linear(sys, chart)
    return lambda_quadratic(sys)


@dataclass
class EigenCheckReport:
    gauge_kind: str
    integers: Tuple[int, ...]
    max_deviation: float
    eigenvalues: np.ndarray
    n_points: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol

    def to_dict(self) -> Dict:
        return {"gauge_kind": self.gauge_kind, "integers": list(self.integers),
                "max_dev": self.max_deviation, "n_points": self.n_points,
                "eigenvalue_min": float(np.min(self.eigenvalues)),
                "eigenvalue_max": float(np.max(self.eigenvalues)), "pass": self.passed}


def check_eigenfunction(sys: ParticleSystem, chart, psi: ResidualEigenfunction, points,
                        tol: float = 1e-9) -> EigenCheckReport:
    """max |Lambda Psi - lambda Psi| over points, relative to max |Psi|."""
    points = np.atleast_2d(points)
    check_on_surface(sys, chart, points)
    lam_psi = lambda_for(sys, chart).apply(psi, points)
    values = psi(points)
    eig = psi.eigenvalue(points)
    scale = max(float(np.max(np.abs(values))), np.finfo(float).tiny)
    dev = float(np.max(np.abs(lam_psi - eig * values))) / scale
    logger.debug(f"eigenfunction {psi.name}: max deviation {dev:.3e}")
    return EigenCheckReport(psi.gauge_kind, psi.integers, dev, eig, points.shape[0], tol)


@dataclass
class GeneratorReport:
    gauge_kind: str
    dalpha: float
    max_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol

    def to_dict(self) -> Dict:
        return {"gauge_kind": self.gauge_kind, "dalpha": self.dalpha,
                "max_dev": self.max_deviation, "pass": self.passed}


def verify_generator(sys: ParticleSystem, chart, cfg0, dalpha: float = 1e-4,
                     tol: float = 1e-8) -> GeneratorReport:
    """Central difference of the orbit at alpha = 0 against -coeff(Lambda).

    Raises:
        OffSurface: cfg0 is not on the gauge surface
    """
    cfg0 = np.atleast_2d(as_coords(cfg0))
    if isinstance(chart, LinearChart):
        step = lambda a: orbit_linear(sys, chart, cfg0, a)
        kind = "linear"
    else:
        step = lambda a: orbit_quadratic(sys, cfg0, a)
        kind = "principal_axes"
    derivative = (step(dalpha) - step(-dalpha)) / (2 * dalpha)
    field_values = -lambda_for(sys, chart).coefficients(cfg0)
    scale = max(float(np.max(np.abs(field_values))), 1.0)
    dev = float(np.max(np.abs(derivative - field_values))) / scale
    logger.debug(f"generator check ({kind}), dalpha {dalpha:g}: deviation {dev:.3e}")
    return GeneratorReport(kind, dalpha, dev, tol)


def quantization_ratio_check(sys: ParticleSystem, ns, cfg_a, cfg_b, kernel: Optional[WaveFunction] = None) -> Dict:
    """Measured eigenvalue ratio between two shapes against Omega_a / Omega_b."""
    psi = eigenfunction_quadratic(sys, ns, kernel)
    if psi.total == 0:
        raise ValueError("ratio check needs a nonzero total winding number")
    lam = lambda_quadratic(sys)
    measured, omegas = [], []
    for cfg in (cfg_a, cfg_b):
        cfg = np.atleast_2d(as_coords(cfg))
        check_on_surface(sys, PrincipalAxesChart(), cfg)
        measured.append(complex(lam.apply(psi, cfg)[0] / psi(cfg)[0]))
        vals = shape_quadratic(sys, cfg)
        omegas.append(float(omega_factor(vals.Q, vals.R2)[0]))
    ratio = measured[0].real / measured[1].real
    predicted = omegas[0] / omegas[1]
    return {"lambda_a": measured[0].real, "lambda_b": measured[1].real,
            "omega_a": omegas[0], "omega_b": omegas[1],
            "ratio": ratio, "predicted_ratio": predicted,
            "deviation": abs(ratio - predicted),
            "imag_max": max(abs(measured[0].imag), abs(measured[1].imag))}


@dataclass
class OrbitInvariantReport:
    """Drifts along sampled orbits, all relative to the size of the start point."""
    gauge_kind: str
    rows: List[Dict[str, float]]
    invariant_tol: float = 1e-12
    period_tol: float = 1e-10
    group_tol: float = 1e-12

    def max_of(self, key: str) -> float:
        return max((r[key] for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        ok = (self.max_of("shape_drift") < self.invariant_tol and
              self.max_of("rho_drift") < self.invariant_tol and
              self.max_of("group_dev") < self.group_tol)
        if self.gauge_kind == "principal_axes":
            ok = ok and self.max_of("period_dev") < self.period_tol
        return bool(ok)

    def to_dict(self) -> Dict:
        out = {"gauge_kind": self.gauge_kind, "n_starts": len(self.rows), "pass": self.passed}
        for key in ("shape_drift", "rho_drift", "group_dev", "period_dev"):
            out[f"max_{key}"] = self.max_of(key)
        return out


def orbit_invariants_check(sys: ParticleSystem, chart, starts, n_alphas: int = 64,
                           invariant_tol: float = 1e-12, period_tol: float = 1e-10,
                           group_tol: float = 1e-12) -> OrbitInvariantReport:
    """Follow the Lambda orbit through each start over one full period.

    Shape values (S, Q in a linear chart; S, Q, R^2, Omega on the principal
    axes) and rho^2 must stay constant, orbits must compose additively in
    alpha and principal-axes orbits must close after 2 pi / Omega.
    """
    starts = np.atleast_2d(as_coords(starts))
    linear = isinstance(chart, LinearChart)
    kind = "linear" if linear else "principal_axes"
    rows = []
    for i, x0 in enumerate(starts):
        size = float(np.max(np.abs(x0)))
        span = 2 * np.pi if linear else float(orbit_period(sys, x0))
        path = orbit(OrbitSpec(sys, chart, x0, np.linspace(0.0, span, n_alphas)))
        if linear:
            vals, start = shape_linear(sys, path, chart), shape_linear(sys, x0, chart)
            scale = np.sqrt(chart.r2(sys) * float(np.sum(sys.mass_vector * x0 ** 2)))
            shape_drift = max(float(np.max(np.abs(vals.s - start.s))),
                              float(np.max(np.abs(vals.q - start.q)))) / scale
            period_dev = float("nan")
        else:
            vals, start = shape_quadratic(sys, path), shape_quadratic(sys, x0)
            scale = float(start.R2)
            shape_drift = max(float(np.max(np.abs(getattr(vals, f) - getattr(start, f)))) / scale
                              for f in ("S", "Q", "R2"))
            omegas = omega_factor(vals.Q, vals.R2)
            shape_drift = max(shape_drift, float(np.max(np.abs(omegas - omegas[0]))))
            period_dev = float(np.max(np.abs(path[-1] - x0))) / size
        rho = kernel_invariants(sys, chart, path)
        rho0 = kernel_invariants(sys, chart, x0)
        rho_drift = float(np.max(np.abs(rho - rho0))) / max(float(np.max(rho0)), size ** 2)

        a1, a2 = 0.37 * span, 0.21 * span
        direct = orbit(OrbitSpec(sys, chart, x0, np.array([a1 + a2])))[0]
        middle = orbit(OrbitSpec(sys, chart, x0, np.array([a1])))[0]
        composed = orbit(OrbitSpec(sys, chart, middle, np.array([a2])))[0]
        group_dev = float(np.max(np.abs(direct - composed))) / size
        rows.append({"gauge_kind": kind, "start": i, "period": span, "shape_drift": shape_drift,
                     "rho_drift": rho_drift, "group_dev": group_dev, "period_dev": period_dev})
        logger.debug(f"orbit {kind} #{i}: shape drift {shape_drift:.2e}, rho drift {rho_drift:.2e}, "
                     f"group {group_dev:.2e}")
    report = OrbitInvariantReport(kind, rows, invariant_tol, period_tol, group_tol)
    logger.info(f"orbit invariants ({kind}): pass={report.passed}")
    return report
