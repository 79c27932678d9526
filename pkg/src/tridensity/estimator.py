"""Penalized likelihood log-density fitting on a triangulated domain.

The log density is a smooth piecewise polynomial expressed through an
orthonormal basis of the smoothness-constraint null space. The objective is

    -(1/n) sum_i g(x_i) + integral exp(g) + lam * roughness(g)

discretized with the fixed triangle quadrature rule; the exponential term
drives the fitted density to integrate to one. The objective is smooth and
strictly convex in the reduced coefficients for lam > 0, so a damped Newton
iteration with an Armijo backtracking line search is used.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import bernstein
from .bernstein import SplineSpec, evaluation_matrix
from .errors import DidNotConverge, PointOutsideDomain, SingularSystem
from .quadrature import rule_9
from .spline_space import build_constraints, penalty_matrix

# Linear predictors are capped here before exponentiation; an objective
# whose predictor exceeds the cap is treated as +inf by the line search.
EXP_CAP = 700.0

# Floor applied to the initial piecewise-constant density before taking
# logs, relative to the uniform density 1/|domain|.
FLOOR_REL = 1e-8

# Ridge weight of the least-squares smoothing that seeds the optimizer.
INIT_RIDGE = 1e-4

ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5


@dataclass
class FitConfig:
    """Tuning knobs of the fitter; defaults follow the package defaults
    (cubic splines with one order of smoothness)."""

    spec: SplineSpec = field(default_factory=lambda: SplineSpec(3, 1))
    lam: float = 1e-3
    max_iters: int = 100
    grad_tol: float = 1e-8
    step_tol: float = 1e-12
    obj_tol: float = 1e-12
    lss_threshold: float = 5.0  # avg points per triangle below which the
                                # neighborhood-aggregated initializer is used

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        for name in ("grad_tol", "step_tol", "obj_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class ModelSpace:
    """Data-independent fitting structures for one (mesh, spec) pair.

    Holds the constraint null-space basis, the reduced roughness matrix and
    the quadrature design matrix. Building one of these is the expensive
    step (an SVD of the smoothness system); reuse it across repeated fits
    on the same mesh, e.g. cross-validation folds.
    """

    def __init__(self, tr, spec, rule=None):
        self.tr = tr
        self.spec = spec
        self.rule = rule or rule_9()
        self.constraints = build_constraints(tr, spec)
        self.penalty = penalty_matrix(tr, spec)
        basis = self.constraints.basis
        self.reduced_penalty = basis.T @ (self.penalty @ basis)
        self.reduced_penalty = (self.reduced_penalty + self.reduced_penalty.T) / 2.0

        n_q = len(self.rule.weights)
        dim = spec.per_triangle_dim
        local = bernstein.evaluate(spec.degree, self.rule.nodes)  # (n_q, dim)
        blocks = basis.reshape(tr.n_triangles, dim, basis.shape[1])
        self.quad_basis = np.einsum("qd,ndp->nqp", local, blocks).reshape(
            tr.n_triangles * n_q, basis.shape[1]
        )
        self.quad_weights = np.repeat(tr.areas, n_q) * np.tile(
            self.rule.weights, tr.n_triangles
        )
        self.quad_points = np.concatenate(
            [self.rule.cartesian_nodes(tr.triangle_coords(t)) for t in range(tr.n_triangles)]
        )

    @property
    def n_free(self):
        return self.constraints.n_free

    def data_basis(self, points):
        """Reduced-basis design matrix at data points (dense rows)."""
        ev = evaluation_matrix(self.tr, self.spec, points)
        return ev.matrix @ self.constraints.basis

    def gamma(self, theta):
        return self.constraints.basis @ theta

    def integral_exp(self, theta):
        """Quadrature value of integral exp(g_theta) over the domain."""
        eta = np.minimum(self.quad_basis @ theta, EXP_CAP)
        return float(self.quad_weights @ np.exp(eta))


@dataclass
class Workspace:
    """Per-dataset quantities entering the objective."""

    space: ModelSpace
    data_mean: np.ndarray  # column means of the data design matrix
    lam: float


def make_workspace(space, data_points, lam):
    bq = space.data_basis(data_points)
    return Workspace(space=space, data_mean=np.asarray(bq.mean(axis=0)).ravel(), lam=lam)


def objective(theta, work):
    """Penalized negative log likelihood at reduced coefficients theta.

    Returns +inf when the linear predictor overflows the exponential cap.
    """
    space = work.space
    eta = space.quad_basis @ theta
    if eta.max(initial=-np.inf) > EXP_CAP:
        return np.inf
    like = -float(work.data_mean @ theta) + float(space.quad_weights @ np.exp(eta))
    return like + work.lam * float(theta @ (work.space.reduced_penalty @ theta))


def gradient(theta, work):
    space = work.space
    eta = np.minimum(space.quad_basis @ theta, EXP_CAP)
    w_exp = space.quad_weights * np.exp(eta)
    return (
        -work.data_mean
        + space.quad_basis.T @ w_exp
        + 2.0 * work.lam * (space.reduced_penalty @ theta)
    )


def hessian(theta, work):
    space = work.space
    eta = np.minimum(space.quad_basis @ theta, EXP_CAP)
    w_exp = space.quad_weights * np.exp(eta)
    h = (space.quad_basis * w_exp[:, None]).T @ space.quad_basis
    h += 2.0 * work.lam * space.reduced_penalty
    return (h + h.T) / 2.0


@dataclass
class InitialDensity:
    """Piecewise-constant density seeding the optimizer."""

    tr: object
    values: np.ndarray  # one density value per triangle
    variant: str        # "histogram" or "lss"

    def value_at(self, points):
        """Density values at points; points off the mesh take the value of
        the nearest triangle (relevant only when seeding from a finer mesh
        whose polygon differs slightly from the fitting mesh)."""
        idx = self.tr.locate(np.atleast_2d(points))
        missing = idx < 0
        if np.any(missing):
            idx = idx.copy()
            idx[missing] = _nearest_triangle(self.tr, np.atleast_2d(points)[missing])
        return self.values[idx]


def _nearest_triangle(tr, pts):
    """Triangle maximizing the minimum barycentric coordinate per point."""
    best = np.full(len(pts), -np.inf)
    arg = np.zeros(len(pts), dtype=np.int64)
    for t in range(tr.n_triangles):
        b = tr.barycentric(t, pts)
        score = b.min(axis=1)
        better = score > best
        best[better] = score[better]
        arg[better] = t
    return arg


def initial_histogram(tr, points):
    """Histogram density: count in each triangle over n times its area."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx = tr.locate(pts)
    outside = np.where(idx < 0)[0]
    if outside.size:
        raise PointOutsideDomain(outside.tolist())
    counts = np.bincount(idx, minlength=tr.n_triangles).astype(float)
    return InitialDensity(tr=tr, values=counts / (len(pts) * tr.areas), variant="histogram")


def initial_lss(tr, points):
    """Histogram variant aggregating counts and areas over the triangles
    sharing a vertex with each triangle; keeps sparse-data seeds positive
    wherever any neighboring triangle is occupied."""
    from .geometry import vertex_neighborhood

    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx = tr.locate(pts)
    outside = np.where(idx < 0)[0]
    if outside.size:
        raise PointOutsideDomain(outside.tolist())
    counts = np.bincount(idx, minlength=tr.n_triangles).astype(float)
    values = np.empty(tr.n_triangles)
    for t in range(tr.n_triangles):
        hood = sorted(vertex_neighborhood(tr, t))
        values[t] = counts[hood].sum() / (len(pts) * tr.areas[hood].sum())
    return InitialDensity(tr=tr, values=values, variant="lss")


def init_theta(space, initial):
    """Seed coefficients by ridge-penalized least squares on log density.

    Fits the reduced basis to log(max(initial, floor)) at the quadrature
    nodes; the floor keeps empty triangles finite.
    """
    if not np.any(initial.values > 0):
        raise SingularSystem("initial density is identically zero")
    floor = FLOOR_REL / space.tr.area
    y = np.log(np.maximum(initial.value_at(space.quad_points), floor))
    a = space.quad_basis
    lhs = a.T @ a + INIT_RIDGE * space.reduced_penalty
    rhs = a.T @ y
    try:
        return linalg.solve(lhs, rhs, assume_a="pos")
    except linalg.LinAlgError as exc:
        raise SingularSystem(f"seed least-squares system is singular: {exc}") from exc


@dataclass
class DensityFit:
    """Converged (or best-effort) density estimate.

    gamma holds the full per-triangle coefficients of the log density;
    log_norm_const is the log of integral exp(g) at the solution and is
    subtracted during evaluation so reported densities integrate to one
    exactly under the fitting quadrature.
    """

    space: ModelSpace
    theta: np.ndarray
    gamma: np.ndarray
    lam: float
    log_norm_const: float
    objective_trace: list
    converged: bool
    iterations: int

    @property
    def tr(self):
        return self.space.tr

    @property
    def spec(self):
        return self.space.spec

    def density(self, points):
        """Density values and an inside-domain flag per point.

        Points outside the domain report density zero with flag False.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return density_from_gamma(
            self.tr, self.spec, self.gamma, pts, log_norm_const=self.log_norm_const
        )


def eval_density(fit, points):
    """Renormalized density of a fit at points; see DensityFit.density."""
    return fit.density(points)


def log_integral_exp(tr, spec, gamma, rule=None):
    """Log of the quadrature integral of exp(g) for raw coefficients."""
    rule = rule or rule_9()
    local = bernstein.evaluate(spec.degree, rule.nodes)
    dim = spec.per_triangle_dim
    eta = local @ gamma.reshape(tr.n_triangles, dim).T  # (n_q, N)
    val = float(np.sum(tr.areas * (rule.weights @ np.exp(np.minimum(eta, EXP_CAP)))))
    return float(np.log(val))


def density_from_gamma(tr, spec, gamma, points, log_norm_const=None):
    """Evaluate exp(g - log_norm_const) at points from raw coefficients."""
    if log_norm_const is None:
        log_norm_const = log_integral_exp(tr, spec, gamma)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ev = evaluation_matrix(tr, spec, pts, allow_outside=True)
    inside = ev.triangle_index >= 0
    values = np.zeros(len(pts))
    g = ev.matrix @ gamma
    values[inside] = np.exp(g[inside] - log_norm_const)
    return values, inside


def fit(tr, points, config=None, space=None, initial_tr=None, theta0=None):
    """Fit the penalized log-density to points scattered on the mesh.

    Newton directions with an Armijo backtracking line search; a Hessian
    factorization failure falls back to a plain gradient step for that
    iteration. Seeds from the histogram initializer, switching to the
    neighborhood-aggregated variant when the average number of points per
    triangle drops below config.lss_threshold. An optional finer mesh may
    be passed for the histogram only.

    Raises DidNotConverge (carrying the last iterate and objective trace)
    if the iteration limit is reached first.
    """
    config = config or FitConfig()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise ValueError("at least one data point is required")
    if space is None:
        space = ModelSpace(tr, config.spec)
    work = make_workspace(space, pts, config.lam)

    if theta0 is None:
        hist_tr = initial_tr if initial_tr is not None else tr
        if len(pts) / hist_tr.n_triangles < config.lss_threshold:
            initial = initial_lss(hist_tr, pts)
        else:
            initial = initial_histogram(hist_tr, pts)
        theta0 = init_theta(space, initial)

    theta = np.asarray(theta0, dtype=float).copy()
    obj = objective(theta, work)
    if not np.isfinite(obj):
        # fall back to the flat seed; objective(0) equals the domain area
        theta = np.zeros_like(theta)
        obj = objective(theta, work)
    trace = [obj]
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iters + 1):
        grad = gradient(theta, work)
        if np.abs(grad).max() <= config.grad_tol:
            converged = True
            iterations -= 1
            break
        hess = hessian(theta, work)
        try:
            direction = -linalg.cho_solve(linalg.cho_factor(hess), grad)
        except linalg.LinAlgError:
            direction = -grad
        slope = float(grad @ direction)
        if slope >= 0.0:
            direction = -grad
            slope = float(grad @ direction)
        alpha = 1.0
        new_theta, new_obj = theta, obj
        while alpha > 1e-20:
            cand = theta + alpha * direction
            cand_obj = objective(cand, work)
            if cand_obj <= obj + ARMIJO_C * alpha * slope:
                new_theta, new_obj = cand, cand_obj
                break
            alpha *= ARMIJO_SHRINK
        else:
            break  # line search stalled at machine precision
        step = alpha * float(np.abs(direction).max())
        decrease = obj - new_obj
        theta, obj = new_theta, new_obj
        trace.append(obj)
        if decrease <= config.obj_tol or step <= config.step_tol:
            converged = True
            break
    if not converged and np.abs(gradient(theta, work)).max() <= config.grad_tol:
        converged = True

    gamma = space.gamma(theta)
    result = DensityFit(
        space=space,
        theta=theta,
        gamma=gamma,
        lam=config.lam,
        log_norm_const=float(np.log(space.integral_exp(theta))),
        objective_trace=trace,
        converged=converged,
        iterations=iterations,
    )
    if not converged:
        raise DidNotConverge(result)
    return result
