"""First-order differential operators on body coordinates.

An operator stores a real vector field c and a real multiplier f; the
physical operator is (1/i) c.grad + f. The commutator of two physical
operators is written [A, B] = i K and ``commutator`` returns K, so every
identity below reads off directly:

    [X_j, Pi_k]          K.mult  = P_jk
    [Pi_j, Pi_k]         K.coeff = (n_k V_j' - n_j V_k') / R^2      (principal axes)
    [Lambda, Pi_Xg]      K.coeff = V_Yg + (m_g A_g / R2) Q(Pi/m)     (linear)
    [Lambda, Pi_Yg]      K.coeff = -V_Xg + (m_g B_g / R2) Q(Pi/m)    (linear)
    [Q, Pi_k]            K.mult  = m (B, -A)_k
    [Q, Lambda]          K.mult  = -S

where V_k is the field of Pi_k, j' the partner coordinate of j and
n = m (Y, X) the normal of S = sum m X Y.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Dict, List, Optional, Sequence
import logging

import numpy as np

from .errors import DegenerateInertia, DimensionMismatch, GaugeSingular
from .gauge import (
    check_translation_invariant,
    constraint_matrix,
    eckart_chart,
    fix_linear,
    fix_principal_axes,
    mass_projector,
)
from .model import LinearChart, ParticleSystem, shape_linear, z_cross
from ..utils.wavefunctions import WaveFunction

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]

COMPLEX_STEP = 1e-30


def complex_step_jacobian(fn: Field, x: np.ndarray, h: float = COMPLEX_STEP) -> np.ndarray:
    """d fn_i / d x_j by the complex-step derivative; fn must be real-analytic."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    dim = x.shape[-1]
    cols = []
    for j in range(dim):
        xc = x.astype(complex)
        xc[..., j] += 1j * h
        cols.append(np.imag(fn(xc)) / h)
    return np.stack(cols, axis=-1)


def complex_step_gradient(fn: Field, x: np.ndarray, h: float = COMPLEX_STEP) -> np.ndarray:
    return complex_step_jacobian(lambda z: fn(z)[..., None], x, h)[..., 0, :]


@dataclass(frozen=True)
class FirstOrderOperator:
    """(1/i) coeff(x).grad + mult(x), evaluated on batches x of shape (P, dim).

    Missing ``coeff_jac`` or ``mult_grad`` fall back to complex-step
    differentiation; commutator results carry none.
    """
    dim: int
    coeff: Optional[Field] = None
    coeff_jac: Optional[Field] = None
    mult: Optional[Field] = None
    mult_grad: Optional[Field] = None
    name: str = ""

    def coefficients(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.coeff is None:
            return np.zeros(x.shape)
        return np.broadcast_to(self.coeff(x), x.shape)

    def jacobian(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.coeff is None:
            return np.zeros(x.shape + (self.dim,))
        if self.coeff_jac is not None:
            return np.broadcast_to(self.coeff_jac(x), x.shape + (self.dim,))
        return complex_step_jacobian(self.coeff, x)

    def multiplier(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.mult is None:
            return np.zeros(x.shape[:-1])
        return np.broadcast_to(self.mult(x), x.shape[:-1])

    def multiplier_gradient(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.mult is None:
            return np.zeros(x.shape)
        if self.mult_grad is not None:
            return np.broadcast_to(self.mult_grad(x), x.shape)
        return complex_step_gradient(self.mult, x)

    def apply(self, psi: WaveFunction, x) -> np.ndarray:
        """Values of the operator applied to psi at the points x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_dim(x.shape[-1])
        out = -1j * np.sum(self.coefficients(x) * psi.grad(x), axis=-1)
        if self.mult is not None:
            out = out + self.multiplier(x) * psi(x)
        return out

    def scaled(self, factor: float) -> "FirstOrderOperator":
        return linear_combination([self], [factor], name=f"{factor}*{self.name}")

    def add(self, other: "FirstOrderOperator") -> "FirstOrderOperator":
        return linear_combination([self, other], [1.0, 1.0], name=f"{self.name}+{other.name}")

    def left_multiplied(self, fn: Field, grad: Field, name: str = "") -> "FirstOrderOperator":
        """g(x) times this operator, with g given with its gradient."""
        this = self

        def coeff(x):
            return fn(x)[..., None] * this.coefficients(x)

        def coeff_jac(x):
            return (fn(x)[..., None, None] * this.jacobian(x)
                    + this.coefficients(x)[..., :, None] * grad(x)[..., None, :])

        mult = mult_grad = None
        if self.mult is not None:
            def mult(x):
                return fn(x) * this.multiplier(x)

            def mult_grad(x):
                return fn(x)[..., None] * this.multiplier_gradient(x) + this.multiplier(x)[..., None] * grad(x)
        return FirstOrderOperator(self.dim, coeff, coeff_jac, mult, mult_grad, name or f"g*{self.name}")

    def _check_dim(self, dim: int) -> None:
        if dim != self.dim:
            raise DimensionMismatch(f"operator {self.name} acts on {self.dim} coordinates, got {dim}")


def linear_combination(ops: Sequence[FirstOrderOperator], weights: Sequence[float],
                       name: str = "") -> FirstOrderOperator:
    """sum w_k op_k with constant weights."""
    dims = {op.dim for op in ops}
    if len(dims) != 1:
        raise DimensionMismatch(f"cannot combine operators of dimensions {sorted(dims)}")
    weights = [float(w) for w in weights]
    has_coeff = any(op.coeff is not None for op in ops)
    has_mult = any(op.mult is not None for op in ops)

    def coeff(x):
        return sum(w * op.coefficients(x) for op, w in zip(ops, weights))

    def coeff_jac(x):
        return sum(w * op.jacobian(x) for op, w in zip(ops, weights))

    def mult(x):
        return sum(w * op.multiplier(x) for op, w in zip(ops, weights))

    def mult_grad(x):
        return sum(w * op.multiplier_gradient(x) for op, w in zip(ops, weights))

    return FirstOrderOperator(
        dim=dims.pop(),
        coeff=coeff if has_coeff else None,
        coeff_jac=coeff_jac if has_coeff else None,
        mult=mult if has_mult else None,
        mult_grad=mult_grad if has_mult else None,
        name=name,
    )


def multiplier_operator(dim: int, fn: Field, grad: Field, name: str = "") -> FirstOrderOperator:
    return FirstOrderOperator(dim, mult=fn, mult_grad=grad, name=name)


def position_operator(dim: int, j: int) -> FirstOrderOperator:
    e = np.zeros(dim)
    e[j] = 1.0
    return multiplier_operator(dim, lambda x: x[..., j], lambda x: np.broadcast_to(e, x.shape),
                               name=_coord_name(j))


def commutator(op_a: FirstOrderOperator, op_b: FirstOrderOperator) -> FirstOrderOperator:
    """K with [A, B] = i K.

    K.coeff = J_a b - J_b a, K.mult = b.grad f_a - a.grad f_b.

    Raises:
        DimensionMismatch: operators act on different spaces
    """
    if op_a.dim != op_b.dim:
        raise DimensionMismatch(f"commutator of {op_a.dim}- and {op_b.dim}-dimensional operators")
    has_coeff = op_a.coeff is not None and op_b.coeff is not None
    has_mult = (op_a.mult is not None and op_b.coeff is not None) or \
        (op_b.mult is not None and op_a.coeff is not None)

    def coeff(x):
        a, b = op_a.coefficients(x), op_b.coefficients(x)
        return (np.einsum("...ij,...j->...i", op_a.jacobian(x), b)
                - np.einsum("...ij,...j->...i", op_b.jacobian(x), a))

    def mult(x):
        a, b = op_a.coefficients(x), op_b.coefficients(x)
        return (np.sum(b * op_a.multiplier_gradient(x), axis=-1)
                - np.sum(a * op_b.multiplier_gradient(x), axis=-1))

    return FirstOrderOperator(op_a.dim, coeff if has_coeff else None, None,
                              mult if has_mult else None, None,
                              name=f"[{op_a.name},{op_b.name}]")


def _coord_name(j: int) -> str:
    return f"{'XY'[j % 2]}{j // 2 + 1}"


def _constant_field(vec: np.ndarray, name: str) -> FirstOrderOperator:
    vec = np.array(vec, dtype=float)
    dim = vec.size
    jac = np.zeros((dim, dim))
    return FirstOrderOperator(dim, coeff=lambda x: np.broadcast_to(vec, np.shape(x)),
                              coeff_jac=lambda x: np.broadcast_to(jac, np.shape(x) + (dim,)),
                              name=name)


def pi_linear(sys: ParticleSystem, chart: LinearChart) -> List[FirstOrderOperator]:
    """Gradient projected onto S = 0 in the mass metric, one operator per coordinate."""
    chart.validate(sys)
    rows = constraint_matrix(sys, LinearChart(chart.A, chart.B, with_cm=False))
    proj = mass_projector(sys, rows)
    return [_constant_field(proj[:, k], f"Pi_{_coord_name(k)}") for k in range(sys.dim)]


def pi_linear_cm(sys: ParticleSystem, chart: LinearChart) -> List[FirstOrderOperator]:
    """As ``pi_linear`` with the two center-of-mass conditions added."""
    chart.validate(sys)
    check_translation_invariant(sys, chart)
    proj = mass_projector(sys, constraint_matrix(sys, LinearChart(chart.A, chart.B, with_cm=True)))
    return [_constant_field(proj[:, k], f"Pi_{_coord_name(k)}") for k in range(sys.dim)]


def _partner(dim: int) -> np.ndarray:
    return np.arange(dim) ^ 1


def _swap_xy(x: np.ndarray) -> np.ndarray:
    """(Y, X) per particle."""
    out = np.empty_like(x)
    out[..., 0::2] = x[..., 1::2]
    out[..., 1::2] = x[..., 0::2]
    return out


def _rotation_jacobian(dim: int) -> np.ndarray:
    """Jacobian of z^x = (-y, x)."""
    jac = np.zeros((dim, dim))
    idx = np.arange(0, dim, 2)
    jac[idx, idx + 1] = -1.0
    jac[idx + 1, idx] = 1.0
    return jac


def _swap_matrix(dim: int) -> np.ndarray:
    sw = np.zeros((dim, dim))
    sw[np.arange(dim), _partner(dim)] = 1.0
    return sw


def _inertia(sys: ParticleSystem, x: np.ndarray) -> np.ndarray:
    r2 = (x ** 2) @ sys.mass_vector
    if np.any(np.real(r2) <= 0):
        raise DegenerateInertia("R^2 vanishes, principal-axes momenta undefined")
    return r2


def quadratic_projector(sys: ParticleSystem, x) -> np.ndarray:
    """I - a n^T / R^2 with a = (Y, X), n = m (Y, X); column k is the field of Pi_k."""
    x = np.atleast_2d(x)
    a = _swap_xy(x)
    n = sys.mass_vector * a
    r2 = _inertia(sys, x)
    return np.eye(sys.dim) - a[..., :, None] * n[..., None, :] / r2[..., None, None]


def pi_quadratic(sys: ParticleSystem) -> List[FirstOrderOperator]:
    """Gradient projected on the tangent plane of S = sum m X Y = 0."""
    dim = sys.dim
    mv = sys.mass_vector
    partner = _partner(dim)
    rows = np.arange(dim)
    ops = []
    for k in range(dim):
        def coeff(x, k=k):
            return quadratic_projector(sys, x)[..., :, k]

        def coeff_jac(x, k=k):
            x = np.atleast_2d(x)
            a = _swap_xy(x)
            n = mv * a
            r2 = _inertia(sys, x)
            jac = np.zeros(x.shape + (dim,), dtype=x.dtype)
            jac[..., rows, partner] -= n[..., k, None] / r2[..., None]
            jac[..., :, partner[k]] -= a * mv[k] / r2[..., None]
            jac += (2 * n[..., k, None, None] * a[..., :, None] * (mv * x)[..., None, :]
                    / r2[..., None, None] ** 2)
            return jac

        ops.append(FirstOrderOperator(dim, coeff, coeff_jac, name=f"Pi_{_coord_name(k)}"))
    return ops


def _lambda_linear_fields(sys: ParticleSystem, chart: LinearChart, offset=None):
    dim = sys.dim
    coeffs = chart.coeffs
    normal = sys.mass_vector * chart.dual_coeffs
    r2 = chart.r2(sys)
    shift = np.zeros(dim) if offset is None else np.asarray(offset, dtype=float)
    jac = _rotation_jacobian(dim) - np.outer(coeffs, normal) / r2

    def coeff(x):
        y = x + shift
        return z_cross(y) - (y @ normal)[..., None] * coeffs / r2

    def coeff_jac(x):
        return np.broadcast_to(jac, np.shape(x) + (dim,))

    return coeff, coeff_jac


def lambda_linear(sys: ParticleSystem, chart: LinearChart) -> FirstOrderOperator:
    """Lambda = sum (X - B Q/R2)(1/i) d/dY - (Y + A Q/R2)(1/i) d/dX."""
    chart.validate(sys)
    coeff, coeff_jac = _lambda_linear_fields(sys, chart)
    return FirstOrderOperator(sys.dim, coeff, coeff_jac, name="Lambda")


def lambda_quadratic(sys: ParticleSystem) -> FirstOrderOperator:
    """Lambda on the principal axes: field (-(1+g) Y, (1-g) X) with g = 2Q/R^2."""
    dim = sys.dim
    mv = sys.mass_vector
    sign = np.tile([1.0, -1.0], sys.n_particles)
    jrot = _rotation_jacobian(dim)
    sw = _swap_matrix(dim)

    def g_and_grad(x):
        r2 = _inertia(sys, x)
        q2 = (x ** 2 * sign) @ mv
        g = q2 / r2
        return g, 2 * mv * x * (sign - g[..., None]) / r2[..., None]

    def coeff(x):
        g, _ = g_and_grad(x)
        return z_cross(x) - g[..., None] * _swap_xy(x)

    def coeff_jac(x):
        x = np.atleast_2d(x)
        g, grad_g = g_and_grad(x)
        return jrot - g[..., None, None] * sw - _swap_xy(x)[..., :, None] * grad_g[..., None, :]

    return FirstOrderOperator(dim, coeff, coeff_jac, name="Lambda")


def lambda_eckart(sys: ParticleSystem, Z) -> FirstOrderOperator:
    """Eckart-frame Lambda acting on deformations delta, R = Z + delta."""
    chart = eckart_chart(Z)
    chart.validate(sys)
    coeff, coeff_jac = _lambda_linear_fields(sys, chart, offset=Z)
    return FirstOrderOperator(sys.dim, coeff, coeff_jac, name="Lambda_eckart")


def shape_multipliers(sys: ParticleSystem, chart: LinearChart):
    """The functionals S and Q of a linear chart as multiplier operators."""
    s_vec = sys.mass_vector * chart.coeffs
    q_vec = sys.mass_vector * chart.dual_coeffs
    s_op = multiplier_operator(sys.dim, lambda x: x @ s_vec, lambda x: np.broadcast_to(s_vec, np.shape(x)), "S")
    q_op = multiplier_operator(sys.dim, lambda x: x @ q_vec, lambda x: np.broadcast_to(q_vec, np.shape(x)), "Q")
    return s_op, q_op


@dataclass
class IdentityResult:
    identity_id: str
    max_dev: float
    point_of_max: List[float]
    passed: bool

    def to_dict(self) -> Dict:
        return {"identity_id": self.identity_id, "max_dev": self.max_dev,
                "point_of_max": self.point_of_max, "pass": self.passed}


@dataclass
class AlgebraReport:
    gauge_kind: str
    n_points: int
    tol: float
    results: List[IdentityResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def max_dev(self) -> float:
        return max((r.max_dev for r in self.results), default=0.0)

    def add(self, identity_id: str, deviation: np.ndarray, points: np.ndarray, tol: float) -> None:
        """Record per-point deviations (any trailing shape) for one identity."""
        dev = np.abs(np.asarray(deviation)).reshape(points.shape[0], -1).max(axis=1)
        i = int(np.argmax(dev))
        self.results.append(IdentityResult(identity_id, float(dev[i]), points[i].tolist(),
                                           bool(dev[i] < tol)))

    def merge(self, other: "AlgebraReport") -> "AlgebraReport":
        """Combine reports over disjoint point sets, identity by identity.

        Keeps the larger deviation and its point; ties go to ``self``.
        """
        if [r.identity_id for r in self.results] != [r.identity_id for r in other.results]:
            raise ValueError("reports cover different identities")
        merged = AlgebraReport(self.gauge_kind, self.n_points + other.n_points, self.tol)
        for a, b in zip(self.results, other.results):
            merged.results.append(b if b.max_dev > a.max_dev else a)
        return merged

    def to_dict(self) -> Dict:
        return {"gauge_kind": self.gauge_kind, "n_points": self.n_points, "tol": self.tol,
                "pass": self.passed, "identities": [r.to_dict() for r in self.results]}


GAUGE_KINDS = ("linear", "linear_cm", "principal_axes")


def random_system(rng: np.random.Generator, n_particles: int) -> ParticleSystem:
    return ParticleSystem(rng.uniform(0.5, 2.0, n_particles))


def random_chart(rng: np.random.Generator, sys: ParticleSystem, with_cm: bool) -> LinearChart:
    A = rng.normal(size=sys.n_particles)
    B = rng.normal(size=sys.n_particles)
    if with_cm:
        A -= np.dot(sys.masses, A) / sys.total_mass
        B -= np.dot(sys.masses, B) / sys.total_mass
    return LinearChart(A, B, with_cm=with_cm)


def sample_surface(sys: ParticleSystem, gauge_kind: str, chart: Optional[LinearChart],
                   n_points: int, rng: np.random.Generator) -> np.ndarray:
    """Random configurations on the gauge surface."""
    x = rng.normal(size=(n_points, sys.dim))
    if gauge_kind == "principal_axes":
        return fix_principal_axes(sys, x).body_cfg.coords
    proj = mass_projector(sys, constraint_matrix(sys, chart))
    return x @ proj.T


def _linear_projector_closed_form(sys: ParticleSystem, chart: LinearChart) -> np.ndarray:
    """P_jk = delta_jk - c_j m_k c_k / R2 (- m_k / M on equal axes for CM charts)."""
    coeffs = chart.coeffs
    mv = sys.mass_vector
    proj = np.eye(sys.dim) - np.outer(coeffs, mv * coeffs) / chart.r2(sys)
    if chart.with_cm:
        same_axis = (np.arange(sys.dim)[:, None] % 2) == (np.arange(sys.dim)[None, :] % 2)
        proj -= same_axis * mv[None, :] / sys.total_mass
    return proj


def _pairwise(ops_a, ops_b, x, what: str) -> np.ndarray:
    """Stack K.coeff or K.mult of every commutator, shape (P, len(a), len(b), ...)."""
    rows = []
    for a in ops_a:
        row = []
        for b in ops_b:
            k = commutator(a, b)
            row.append(k.coefficients(x) if what == "coeff" else k.multiplier(x))
        rows.append(np.stack(row, axis=1))
    return np.stack(rows, axis=1)


def verify_algebra(gauge_kind: str, n_points: int = 100, tol: float = 1e-10, seed: int = 0,
                   sys: Optional[ParticleSystem] = None, chart: Optional[LinearChart] = None,
                   n_particles: int = 3, constraint_tol: float = 1e-12, n_workers: int = 1) -> AlgebraReport:
    """Check the commutator algebra of a gauge pointwise on random surface points.

    Args:
        gauge_kind: linear, linear_cm or principal_axes
        n_points: Number of sampled configurations
        tol: Pass threshold for commutator identities
        seed: Seed of the sampler
        sys: Particle system, random masses when omitted
        chart: Linear chart, random coefficients when omitted
        n_workers: Threads sharing the points; the sample does not depend on it

    Returns:
        AlgebraReport with one entry per identity
    """
    if gauge_kind not in GAUGE_KINDS:
        raise ValueError(f"unknown gauge kind {gauge_kind!r}, expected one of {GAUGE_KINDS}")
    if n_points < 1:
        raise ValueError("n_points must be at least 1")
    if n_workers < 1:
        raise ValueError("n_workers must be at least 1")
    rng = np.random.default_rng(seed)
    sys = sys or random_system(rng, n_particles)
    if gauge_kind != "principal_axes" and chart is None:
        chart = random_chart(rng, sys, with_cm=gauge_kind == "linear_cm")
    if chart is not None and gauge_kind == "linear_cm" and not chart.with_cm:
        chart = LinearChart(chart.A, chart.B, with_cm=True)
    x = sample_surface(sys, gauge_kind, chart, n_points, rng)
    shards = [s for s in np.array_split(x, min(n_workers, n_points)) if len(s)]
    logger.info(f"verifying {gauge_kind} algebra: N={sys.n_particles}, {n_points} points, "
                f"{len(shards)} shard(s)")

    def verify_shard(points: np.ndarray) -> AlgebraReport:
        shard = AlgebraReport(gauge_kind, len(points), tol)
        if gauge_kind == "principal_axes":
            _verify_quadratic(sys, points, shard, tol, constraint_tol)
        else:
            _verify_linear(sys, chart, points, shard, tol, constraint_tol)
        return shard

    if len(shards) == 1:
        report = verify_shard(shards[0])
    else:
        with ThreadPoolExecutor(max_workers=len(shards)) as pool:
            report = reduce(AlgebraReport.merge, pool.map(verify_shard, shards))
    for r in report.results:
        logger.debug(f"{r.identity_id}: max deviation {r.max_dev:.3e}")
    logger.info(f"{gauge_kind} algebra: max deviation {report.max_dev:.3e}, pass={report.passed}")
    return report


def _verify_linear(sys, chart, x, report, tol, constraint_tol):
    dim = sys.dim
    mv = sys.mass_vector
    r2 = chart.r2(sys)
    pis = pi_linear_cm(sys, chart) if chart.with_cm else pi_linear(sys, chart)
    lam = lambda_linear(sys, chart)
    xs = [position_operator(dim, j) for j in range(dim)]
    s_op, q_op = shape_multipliers(sys, chart)
    proj = _linear_projector_closed_form(sys, chart)
    fields = np.stack([p.coefficients(x) for p in pis], axis=-1)    # (P, i, k)
    label = "cmm1" if chart.with_cm else "cmm"

    report.add(f"{label}:x_pi", _pairwise(xs, pis, x, "mult") - proj, x, tol)
    report.add(f"{label}:x_pi_field", _pairwise(xs, pis, x, "coeff"), x, tol)
    report.add(f"{label}:pi_pi", _pairwise(pis, pis, x, "coeff"), x, tol)

    q_vals = shape_linear(sys, x, chart).q
    expected_x_lam = z_cross(x) - q_vals[..., None] * chart.coeffs / r2
    report.add("+cmm:x_lambda", _pairwise(xs, [lam], x, "mult")[..., 0] - expected_x_lam, x, tol)

    q_of_pi = proj @ chart.dual_coeffs
    expected = np.empty((x.shape[0], dim, dim))
    for g in range(sys.n_particles):
        jx, jy = 2 * g, 2 * g + 1
        expected[:, jx] = proj[:, jy] + mv[jx] * chart.A[g] / r2 * q_of_pi
        expected[:, jy] = -proj[:, jx] + mv[jy] * chart.B[g] / r2 * q_of_pi
    report.add("+cmm:lambda_pi", _pairwise([lam], pis, x, "coeff")[:, 0] - expected, x, tol)

    report.add("++cmm:s_pi", _pairwise([s_op], pis, x, "mult"), x, tol)
    report.add("++cmm:s_lambda", commutator(s_op, lam).multiplier(x), x, tol)
    s_of_pi = linear_combination(pis, chart.coeffs, name="S(Pi/m)")
    report.add("++cmm:s_pi_lambda", commutator(s_of_pi, lam).coefficients(x), x, tol)
    report.add("++cmm:q_pi", _pairwise([q_op], pis, x, "mult")[:, 0] - mv * chart.dual_coeffs, x, tol)
    report.add("++cmm:q_s_pi", commutator(q_op, s_of_pi).multiplier(x), x, tol)
    report.add("++cmm:q_lambda", commutator(q_op, lam).multiplier(x) + shape_linear(sys, x, chart).s, x, tol)

    rows = constraint_matrix(sys, chart)
    report.add("constraint:s_pi_field", s_of_pi.coefficients(x), x, constraint_tol)
    report.add("constraint:tangency", np.einsum("ci,pik->pck", rows, fields), x, constraint_tol)
    report.add("constraint:lambda_tangency", lam.coefficients(x) @ rows.T, x, constraint_tol)
    if chart.with_cm:
        total_x = linear_combination(pis[0::2], np.ones(sys.n_particles), name="sum Pi_X")
        total_y = linear_combination(pis[1::2], np.ones(sys.n_particles), name="sum Pi_Y")
        report.add("constraint:total_momentum",
                   np.concatenate([total_x.coefficients(x), total_y.coefficients(x)], axis=-1),
                   x, constraint_tol)
    report.add("lambda_from_pi", _angular_from_fields(x, fields) - lam.coefficients(x), x, tol)
    report.add("jacobian:lambda", lam.jacobian(x) - complex_step_jacobian(lam.coeff, x), x, tol)


def _verify_quadratic(sys, x, report, tol, constraint_tol):
    dim = sys.dim
    mv = sys.mass_vector
    pis = pi_quadratic(sys)
    lam = lambda_quadratic(sys)
    xs = [position_operator(dim, j) for j in range(dim)]
    proj = quadratic_projector(sys, x)                              # (P, i, k)
    a = _swap_xy(x)
    n = mv * a
    r2 = (x ** 2) @ mv
    partner = _partner(dim)

    report.add("qcomm:x_pi", _pairwise(xs, pis, x, "mult") - proj, x, tol)
    expected = (n[:, None, :, None] * proj[:, :, partner].transpose(0, 2, 1)[:, :, None, :]
                - n[:, :, None, None] * proj[:, :, partner].transpose(0, 2, 1)[:, None, :, :])
    report.add("qcomm:pi_pi", _pairwise(pis, pis, x, "coeff") - expected / r2[:, None, None, None], x, tol)

    s_vec_op = multiplier_operator(dim, lambda z: np.sum(sys.masses * z[..., 0::2] * z[..., 1::2], axis=-1),
                                   lambda z: mv * _swap_xy(z), "S")
    report.add("qcomm:s_pi", _pairwise([s_vec_op], pis, x, "mult"), x, tol)
    report.add("qcomm:s_lambda", commutator(s_vec_op, lam).multiplier(x), x, tol)
    closure = np.einsum("pi,pki->pk", n, _pairwise([lam], pis, x, "coeff")[:, 0])
    report.add("closure:lambda_pi", closure, x, tol)

    ds_star = np.einsum("pk,pik->pi", a, proj)
    report.add("constraint:ds_star", ds_star, x, constraint_tol)
    report.add("constraint:tangency", np.einsum("pi,pik->pk", n, proj), x, constraint_tol)
    report.add("constraint:lambda_tangency", np.sum(n * lam.coefficients(x), axis=-1), x, constraint_tol)
    report.add("lambda_from_pi", _angular_from_fields(x, proj) - lam.coefficients(x), x, tol)
    report.add("jacobian:lambda", lam.jacobian(x) - complex_step_jacobian(lam.coeff, x), x, tol)
    jac_dev = np.stack([p.jacobian(x) - complex_step_jacobian(p.coeff, x) for p in pis], axis=1)
    report.add("jacobian:pi", jac_dev, x, tol)


def _angular_from_fields(x: np.ndarray, fields: np.ndarray) -> np.ndarray:
    """Field of sum (X Pi_Y - Y Pi_X) from the stacked Pi fields (P, i, k)."""
    return np.einsum("pk,pik->pi", z_cross(x), fields)


@dataclass
class MomentumCheckReport:
    max_deviation: float
    n_points: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol

    def to_dict(self) -> Dict:
        return {"max_dev": self.max_deviation, "n_points": self.n_points, "tol": self.tol,
                "pass": self.passed}


def lab_wavefunction(sys: ParticleSystem, chart: LinearChart, psi: WaveFunction, ell_z: int):
    """Psi(r) = psi(R(r)) exp(i ell_z theta(r)) on lab configurations."""

    def evaluate(r):
        fix = fix_linear(sys, np.atleast_2d(r), chart)
        return psi(fix.body_cfg.coords) * np.exp(1j * ell_z * fix.theta)
    return evaluate


def lab_momentum_check(sys: ParticleSystem, chart: LinearChart, test_fn: WaveFunction, ell_z: int,
                       points, tol: float = 1e-6, h: float = 1e-3) -> MomentumCheckReport:
    """Compare (1/i) d Psi/d x_alpha by finite differences with its body-frame expression.

    The body-frame side is cos/sin combinations of Pi psi and
    (m A / Q)(ell_z - Lambda) psi, (m B / Q)(ell_z - Lambda) psi.

    Raises:
        GaugeSingular: a point sits on the orbit singularity
    """
    if chart.with_cm:
        raise ValueError("lab momentum check is defined for linear charts without CM conditions")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dim = sys.dim
    lab_psi = lab_wavefunction(sys, chart, test_fn, ell_z)

    lhs = np.empty(points.shape, dtype=complex)
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        lhs[:, j] = (-lab_psi(points + 2 * e) + 8 * lab_psi(points + e)
                     - 8 * lab_psi(points - e) + lab_psi(points - 2 * e)) / (12 * h * 1j)

    fix = fix_linear(sys, points, chart)
    body = fix.body_cfg.coords
    q_vals = shape_linear(sys, body, chart).q
    if np.any(q_vals <= 0):
        raise GaugeSingular("Q vanishes at a check point")
    pis = pi_linear(sys, chart)
    pi_psi = np.stack([p.apply(test_fn, body) for p in pis], axis=-1)
    residual = ell_z * test_fn(body) - lambda_linear(sys, chart).apply(test_fn, body)
    shifted = pi_psi + (sys.mass_vector * chart.coeffs) * (residual / q_vals)[:, None]
    c, s = np.cos(fix.theta)[:, None], np.sin(fix.theta)[:, None]
    phase = np.exp(1j * ell_z * fix.theta)[:, None]
    rhs = np.empty_like(lhs)
    rhs[:, 0::2] = (c * shifted[:, 0::2] - s * shifted[:, 1::2]) * phase
    rhs[:, 1::2] = (s * shifted[:, 0::2] + c * shifted[:, 1::2]) * phase
    dev = float(np.max(np.abs(lhs - rhs)))
    logger.info(f"lab momentum check: max deviation {dev:.3e} over {points.shape[0]} points")
    return MomentumCheckReport(dev, points.shape[0], tol)
