"""Gauge fixing between the laboratory frame and rotating body frames.

Rotation convention (passive): per particle

    X =  cos(theta) x + sin(theta) y
    Y = -sin(theta) x + cos(theta) y

With this choice theta = atan2(s, q) puts a configuration on S = 0 with
Q = +sqrt(s^2 + q^2), which is the Gribov branch kept throughout. The
principal-axes gauge uses theta = atan2(S, Q)/2 shifted into [0, pi).
"""

from dataclasses import dataclass
from typing import Dict, Optional
import logging

import numpy as np
from scipy import linalg

from .errors import ChartNotTranslationInvariant, GaugeSingular, StepTooLarge
from .model import (
    Configuration,
    EquilibriumShape,
    LinearChart,
    ParticleSystem,
    as_coords,
    center_of_mass,
    inertia_trace,
    shape_linear,
    shape_quadratic,
    spread_pair,
)

logger = logging.getLogger(__name__)

SINGULAR_TOL = 1e-12


@dataclass
class GaugeFixResult:
    """Outcome of a gauge fixing.

    theta and the residuals are arrays when a batch of configurations was
    fixed.
    """
    theta: np.ndarray
    body_cfg: Configuration
    residuals: Dict[str, np.ndarray]
    shift: Optional[np.ndarray] = None


@dataclass
class BranchTracker:
    """Continuous angle across Gribov cell boundaries.

    One tracker per trajectory; it is mutated by ``unwind``.
    """
    period: float = 2 * np.pi
    guard: float = 0.1
    last_theta: Optional[float] = None
    winding: int = 0

    def unwound(self, theta_principal: float) -> float:
        return theta_principal + self.winding * self.period


def rotate(theta, cfg) -> np.ndarray:
    """Apply the passive rotation U(theta) to every particle."""
    cfg = as_coords(cfg)
    theta = np.asarray(theta, dtype=float)[..., None]
    c, s = np.cos(theta), np.sin(theta)
    x, y = cfg[..., 0::2], cfg[..., 1::2]
    out = np.empty(np.broadcast_shapes(cfg.shape, theta.shape[:-1] + (cfg.shape[-1],)))
    out[..., 0::2] = c * x + s * y
    out[..., 1::2] = -s * x + c * y
    return out


def rotation_tangent(cfg) -> np.ndarray:
    """dR/dtheta = (Y, -X) per particle."""
    cfg = as_coords(cfg)
    out = np.empty_like(cfg)
    out[..., 0::2] = cfg[..., 1::2]
    out[..., 1::2] = -cfg[..., 0::2]
    return out


def _wrap_linear(theta: np.ndarray) -> np.ndarray:
    return np.where(theta <= -np.pi, theta + 2 * np.pi, theta)


def fix_linear(sys: ParticleSystem, cfg_lab, chart: LinearChart,
               singular_tol: float = SINGULAR_TOL) -> GaugeFixResult:
    """Rotate a lab configuration onto S = 0 with Q >= 0.

    Args:
        sys: Particle system
        cfg_lab: Lab configuration(s), shape (2N,) or (P, 2N)
        chart: Linear gauge chart
        singular_tol: Relative threshold for the orbit singularity s = q = 0

    Returns:
        GaugeFixResult with theta in (-pi, pi]
    """
    cfg = as_coords(cfg_lab)
    vals = shape_linear(sys, cfg, chart)
    scale = np.sqrt(vals.r2 * inertia_trace(sys, cfg))
    if np.any(np.hypot(vals.s, vals.q) <= singular_tol * scale):
        raise GaugeSingular("linear gauge undefined: s = q = 0")
    theta = _wrap_linear(np.arctan2(vals.s, vals.q))
    body = rotate(theta, cfg)
    body_vals = shape_linear(sys, body, chart)
    return GaugeFixResult(
        theta=theta,
        body_cfg=Configuration(body, frame="body"),
        residuals={"S": body_vals.s, "Q": body_vals.q},
    )


def fix_principal_axes(sys: ParticleSystem, cfg_lab,
                       singular_tol: float = SINGULAR_TOL) -> GaugeFixResult:
    """Rotate onto the instantaneous principal axes, theta in [0, pi)."""
    cfg = as_coords(cfg_lab)
    vals = shape_quadratic(sys, cfg)
    if np.any(np.hypot(vals.S, vals.Q) <= singular_tol * vals.R2):
        raise GaugeSingular("principal axes undefined: inertia tensor is isotropic")
    theta = 0.5 * np.arctan2(vals.S, vals.Q)
    theta = np.where(theta < 0, theta + np.pi, theta)
    body = rotate(theta, cfg)
    body_vals = shape_quadratic(sys, body)
    return GaugeFixResult(
        theta=theta,
        body_cfg=Configuration(body, frame="body"),
        residuals={"S": body_vals.S, "Q": body_vals.Q},
    )


def check_translation_invariant(sys: ParticleSystem, chart: LinearChart, tol: float = 1e-12) -> None:
    scale = np.sqrt(chart.r2(sys) * sys.total_mass)
    defect = chart.translation_defect(sys)
    if defect > tol * scale:
        raise ChartNotTranslationInvariant(
            f"sum m A and sum m B must vanish, defect {defect:.3e}")


def fix_with_cm(sys: ParticleSystem, cfg_lab, chart: LinearChart) -> GaugeFixResult:
    """Translate to the center of mass, then fix the linear gauge."""
    check_translation_invariant(sys, chart)
    cfg = as_coords(cfg_lab)
    cm = center_of_mass(sys, cfg)
    centered = cfg - spread_pair(sys, cm)
    result = fix_linear(sys, centered, chart)
    result.residuals["cm"] = np.linalg.norm(center_of_mass(sys, result.body_cfg.coords), axis=-1)
    result.shift = cm
    return result


def fix_gauge(sys: ParticleSystem, cfg_lab, chart) -> GaugeFixResult:
    """Dispatch on the chart type."""
    if isinstance(chart, LinearChart):
        return fix_with_cm(sys, cfg_lab, chart) if chart.with_cm else fix_linear(sys, cfg_lab, chart)
    return fix_principal_axes(sys, cfg_lab)


def unwind(tracker: BranchTracker, theta_principal: float) -> float:
    """Continue the principal angle across branch jumps.

    Raises:
        StepTooLarge: if the jump is too close to half a period to decide
    """
    theta_principal = float(theta_principal)
    if tracker.last_theta is None:
        tracker.last_theta = theta_principal
        return tracker.unwound(theta_principal)
    delta = theta_principal - tracker.last_theta
    k = int(np.round(delta / tracker.period))
    residual = delta - k * tracker.period
    if abs(residual) > tracker.period / 2 - tracker.guard:
        raise StepTooLarge(
            f"angle step {delta:.4f} is ambiguous for period {tracker.period:.4f}")
    tracker.winding -= k
    tracker.last_theta = theta_principal
    return tracker.unwound(theta_principal)


def constraint_matrix(sys: ParticleSystem, chart: LinearChart) -> np.ndarray:
    """Rows of the linear gauge conditions: grad S and, for CM charts, the CM rows."""
    rows = [sys.mass_vector * chart.coeffs]
    if chart.with_cm:
        mv = sys.mass_vector / sys.total_mass
        cx = np.zeros(sys.dim)
        cy = np.zeros(sys.dim)
        cx[0::2] = mv[0::2]
        cy[1::2] = mv[1::2]
        rows += [cx, cy]
    return np.array(rows)


def mass_projector(sys: ParticleSystem, rows: np.ndarray) -> np.ndarray:
    """I - M^-1 C^T (C M^-1 C^T)^-1 C, the mass-metric projector onto ker C.

    Column k is the coefficient vector of the constrained momentum Pi_k.
    """
    inv_m = 1.0 / sys.mass_vector
    cmc = (rows * inv_m) @ rows.T
    return np.eye(sys.dim) - (inv_m[:, None] * rows.T) @ linalg.solve(cmc, rows, assume_a="pos")


def theta_rate_linear(sys: ParticleSystem, chart: LinearChart, body_cfg, rotated_vel) -> np.ndarray:
    """theta_dot keeping S(R_dot) = 0, given U(theta) r_dot."""
    num = shape_linear(sys, rotated_vel, chart).s
    den = shape_linear(sys, body_cfg, chart).q
    return num / den


def theta_rate_principal(sys: ParticleSystem, body_cfg, rotated_vel) -> np.ndarray:
    """theta_dot keeping dS/dt = 0 on the principal axes."""
    body_cfg, v = as_coords(body_cfg), as_coords(rotated_vel)
    X, Y = body_cfg[..., 0::2], body_cfg[..., 1::2]
    num = np.sum(sys.masses * (X * v[..., 1::2] + Y * v[..., 0::2]), axis=-1)
    den = np.sum(sys.masses * (X ** 2 - Y ** 2), axis=-1)
    return num / den


def body_velocity(sys: ParticleSystem, chart, fix: GaugeFixResult, vel_lab):
    """Map lab velocities to body velocities.

    Returns:
        (body velocities, xi) with xi = -theta_dot
    """
    vel = as_coords(vel_lab)
    if isinstance(chart, LinearChart) and chart.with_cm:
        vcm = center_of_mass(sys, vel)
        vel = vel - spread_pair(sys, vcm)
    rotated = rotate(fix.theta, vel)
    body = fix.body_cfg.coords
    if isinstance(chart, LinearChart):
        rate = theta_rate_linear(sys, chart, body, rotated)
    else:
        rate = theta_rate_principal(sys, body, rotated)
    body_vel = rotated + np.asarray(rate)[..., None] * rotation_tangent(body)
    return body_vel, -rate


def lab_velocity(theta, body_cfg, body_vel, xi) -> np.ndarray:
    """Inverse of ``body_velocity`` for charts without translation."""
    body_cfg = as_coords(body_cfg)
    inner = as_coords(body_vel) + np.asarray(xi)[..., None] * rotation_tangent(body_cfg)
    return rotate(-np.asarray(theta), inner)


def eckart_chart(Z) -> LinearChart:
    """sum m Z ^ R = 0: A = -Z_y, B = Z_x, with the CM condition."""
    Z = as_coords(Z)
    return LinearChart(A=-Z[1::2], B=Z[0::2], with_cm=True)


def linearized_principal_axes_chart(Z) -> LinearChart:
    """Principal axes to first order about Z: A = Z_y, B = Z_x."""
    Z = as_coords(Z)
    return LinearChart(A=Z[1::2], B=Z[0::2], with_cm=True)


def equilibrium_from(sys: ParticleSystem, cfg) -> EquilibriumShape:
    """Center a configuration and put it on its principal axes."""
    cfg = as_coords(cfg)
    cfg = cfg - spread_pair(sys, center_of_mass(sys, cfg))
    shape = EquilibriumShape(fix_principal_axes(sys, cfg).body_cfg.coords)
    shape.validate(sys)
    return shape
