"""Benchmark scenarios, sampling, MISE scoring and the kernel baseline.

Three synthetic truths are provided: a four-component Gaussian mixture on a
square, a shifted ridge function on a horseshoe-shaped domain, and a mixture
of the ridge density with two tight Gaussians and a skewed Gaussian on the
same horseshoe. Every density is truncated to its triangulated domain and
renormalized numerically, samples are drawn by seeded rejection sampling,
and estimates are scored by a fine-grid approximation of the integrated
squared error against the truth.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from . import estimator, model_selection
from .assets import load_bundled_mesh
from .bernstein import SplineSpec
from .errors import EnvelopeViolated, SingularBandwidth, TriDensityError
from .quadrature import rule_9

# resolution of the grid used to normalize scenario densities and to
# estimate the rejection-sampling envelope
_NORM_RESOLUTION = 512


@dataclass(frozen=True)
class GaussComponent:
    mean: tuple
    cov: tuple  # ((a, b), (b, c)), symmetric positive definite
    weight: float


@dataclass(frozen=True)
class SkewNormalComponent:
    """Azzalini skewed Gaussian: 2 phi2(u - xi; omega) Phi(alpha' w^-1 (u - xi))."""

    xi: tuple
    omega: tuple   # ((a, 0), (0, c)) scale matrix
    alpha: tuple
    tau: float = 0.0
    weight: float = 1.0


@dataclass
class Scenario:
    """A benchmark truth: triangulated domain plus normalized density."""

    name: str
    domain: object                 # Triangulation used for fitting and scoring
    density: object                # callable (n, 2) -> normalized values
    bbox: tuple                    # (xmin, xmax, ymin, ymax) sampling box
    density_max: float             # grid estimate of the density maximum
    initial_domain: object = None  # optional finer mesh for the histogram seed
    components: tuple = ()

    def true_density(self, points):
        return self.density(np.atleast_2d(np.asarray(points, dtype=float)))


def gaussian_pdf(points, mean, cov):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    det = cov[0, 0] * cov[1, 1] - cov[0, 1] * cov[1, 0]
    inv = np.array([[cov[1, 1], -cov[0, 1]], [-cov[1, 0], cov[0, 0]]]) / det
    d = pts - mean
    q = d[:, 0] ** 2 * inv[0, 0] + 2 * d[:, 0] * d[:, 1] * inv[0, 1] + d[:, 1] ** 2 * inv[1, 1]
    return np.exp(-0.5 * q) / (2.0 * math.pi * math.sqrt(det))


def skew_normal_pdf(points, comp):
    """Density of the skewed Gaussian component (tau = 0 form only)."""
    if comp.tau != 0.0:
        raise ValueError("only the tau = 0 skewed Gaussian is implemented")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi = np.asarray(comp.xi, dtype=float)
    omega = np.asarray(comp.omega, dtype=float)
    alpha = np.asarray(comp.alpha, dtype=float)
    scale = np.sqrt(np.diag(omega))
    z = (pts - xi) / scale
    return 2.0 * gaussian_pdf(pts, xi, omega) * ndtr(z @ alpha)


def horseshoe_function(points, r=0.5, slope=1.0):
    """Ridge test function on the horseshoe: spine coordinate plus squared
    offset from the spine.

    The spine runs along the lower arm, around the bend (a semicircle of
    radius r) and along the upper arm; the value grows linearly with the
    signed distance travelled and quadratically with the transverse offset.
    Defined for all of R^2; only values on the domain are meaningful.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    q = math.pi * r / 2.0
    a = np.empty(len(pts))
    d = np.empty(len(pts))
    up = (x >= 0) & (y > 0)
    lo = (x >= 0) & (y <= 0)
    bend = x < 0
    a[up] = q + x[up]
    d[up] = y[up] - r
    a[lo] = -q - x[lo]
    d[lo] = -r - y[lo]
    with np.errstate(divide="ignore", invalid="ignore"):
        a[bend] = -np.arctan(y[bend] / x[bend]) * r
    d[bend] = np.hypot(x[bend], y[bend]) - r
    return slope * a + d ** 2


@lru_cache(maxsize=32)
def _domain_grid(tr, resolution):
    """Cell centers, in-domain mask and cell area of a bbox grid.

    Cached per mesh object: benchmark replications rescore on identical
    grids, and meshes are immutable after construction.
    """
    xmin, xmax, ymin, ymax = tr.bounding_box()
    dx = (xmax - xmin) / resolution
    dy = (ymax - ymin) / resolution
    xs = xmin + dx * (np.arange(resolution) + 0.5)
    ys = ymin + dy * (np.arange(resolution) + 0.5)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    mask = tr.locate(centers) >= 0
    return centers, mask, dx * dy


def _normalize_over_domain(raw, tr, resolution=_NORM_RESOLUTION):
    """Normalizing constant and max of a raw density over the domain grid."""
    centers, mask, cell = _domain_grid(tr, resolution)
    vals = raw(centers[mask])
    return float(vals.sum() * cell), float(vals.max())


@lru_cache(maxsize=None)
def scenario_sim1():
    """Four-component Gaussian mixture on the [-6, 6] square."""
    comps = (
        GaussComponent((-2.0, -1.5), ((0.8, -0.5), (-0.5, 1.0)), 0.25),
        GaussComponent((2.0, -2.0), ((1.5, 0.0), (0.0, 1.5)), 0.25),
        GaussComponent((-2.0, 1.5), ((0.6, 0.0), (0.0, 0.6)), 0.25),
        GaussComponent((2.0, 2.0), ((1.0, 0.9), (0.9, 1.0)), 0.25),
    )
    tr = load_bundled_mesh("square_sim1_50")

    def raw(pts):
        out = np.zeros(len(np.atleast_2d(pts)))
        for c in comps:
            out += c.weight * gaussian_pdf(pts, np.array(c.mean), np.array(c.cov))
        return out

    norm, peak = _normalize_over_domain(raw, tr)
    density = lambda pts: raw(pts) / norm
    return Scenario(
        name="sim1", domain=tr, density=density, bbox=tr.bounding_box(),
        density_max=peak / norm, components=comps,
    )


@lru_cache(maxsize=None)
def scenario_sim2():
    """Shifted ridge density on the horseshoe domain.

    The raw ridge function is raised by five (making it strictly positive
    on the domain) and normalized numerically.
    """
    tr = load_bundled_mesh("horseshoe_112")
    raw = lambda pts: horseshoe_function(pts) + 5.0
    norm, peak = _normalize_over_domain(raw, tr)
    density = lambda pts: raw(pts) / norm
    return Scenario(
        name="sim2", domain=tr, density=density, bbox=tr.bounding_box(),
        density_max=peak / norm, initial_domain=load_bundled_mesh("horseshoe_356"),
    )


@lru_cache(maxsize=None)
def scenario_sim3():
    """Horseshoe mixture: ridge base, two tight Gaussians, one skewed."""
    base = scenario_sim2()
    tr = base.domain
    gauss = (
        GaussComponent((0.9, -0.5), ((0.04, 0.0), (0.0, 0.01)), 0.05),
        GaussComponent((2.0, -0.5), ((0.02, 0.0), (0.0, 0.01)), 0.05),
    )
    skew = SkewNormalComponent(
        xi=(1.3, 0.0), omega=((0.5, 0.0), (0.0, 0.1)), alpha=(0.0, 6.0), weight=0.2
    )

    def raw(pts):
        out = 0.7 * base.density(pts)
        for c in gauss:
            out = out + c.weight * gaussian_pdf(pts, np.array(c.mean), np.array(c.cov))
        out = out + skew.weight * skew_normal_pdf(pts, skew)
        return out

    norm, peak = _normalize_over_domain(raw, tr)
    density = lambda pts: raw(pts) / norm
    return Scenario(
        name="sim3", domain=tr, density=density, bbox=tr.bounding_box(),
        density_max=peak / norm, initial_domain=base.initial_domain,
        components=gauss + (skew,),
    )


SCENARIOS = {
    "sim1": scenario_sim1,
    "sim2": scenario_sim2,
    "sim3": scenario_sim3,
}


def get_scenario(name):
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")


def sample(scenario, n, seed):
    """Draw n points from the scenario by seeded rejection sampling.

    Proposals are uniform over the bounding box intersected with the
    domain; the acceptance envelope starts at 1.1 times the grid-estimated
    density maximum. If the density ever exceeds the envelope, the
    envelope is doubled and sampling restarts from the same seed, so the
    output is a pure function of (scenario, n, seed).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    xmin, xmax, ymin, ymax = scenario.bbox
    envelope = 1.1 * scenario.density_max
    batch = max(4 * n, 1024)
    for _ in range(64):  # envelope doublings
        rng = np.random.default_rng(seed)
        out = []
        collected = 0
        try:
            for _ in range(100_000):
                pts = np.column_stack([
                    rng.uniform(xmin, xmax, batch),
                    rng.uniform(ymin, ymax, batch),
                ])
                u = rng.uniform(0.0, 1.0, batch)
                inside = scenario.domain.locate(pts) >= 0
                vals = scenario.density(pts[inside])
                if np.any(vals > envelope):
                    raise EnvelopeViolated(
                        f"density {vals.max():.3g} exceeds envelope {envelope:.3g}"
                    )
                accept = pts[inside][u[inside] < vals / envelope]
                out.append(accept)
                collected += len(accept)
                if collected >= n:
                    return np.concatenate(out)[:n]
            raise TriDensityError("rejection sampling made no progress")
        except EnvelopeViolated:
            envelope *= 2.0
    raise TriDensityError("rejection envelope failed to stabilize")


def mise(estimate, scenario, resolution=100):
    """Integrated squared error of an estimate against the scenario truth.

    estimate is a callable mapping (n, 2) points to density values, or a
    DensityFit. The integral is a Riemann sum over the in-domain cells of
    a resolution x resolution grid covering the bounding box.
    """
    if resolution < 50:
        raise ValueError("grid resolution must be at least 50 per axis")
    fn = estimate.density if hasattr(estimate, "density") else estimate
    centers, mask, cell = _domain_grid(scenario.domain, resolution)
    est = fn(centers[mask])
    if isinstance(est, tuple):  # DensityFit.density returns (values, inside)
        est = est[0]
    truth = scenario.density(centers[mask])
    return float(np.sum((np.asarray(est) - truth) ** 2) * cell)


class KernelDensity:
    """Bivariate Gaussian kernel density with a full bandwidth matrix.

    Deliberately unaware of the domain: mass integrates to one over the
    plane, so some of it leaks outside irregular domains. That leakage is
    the behavior the benchmark contrasts against.
    """

    def __init__(self, points, bandwidth):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        h = np.asarray(bandwidth, dtype=float)
        det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
        if not np.all(np.isfinite(h)) or det <= 0 or h[0, 0] <= 0:
            raise SingularBandwidth(f"bandwidth matrix {h.tolist()} is not SPD")
        self.bandwidth = h
        self._inv = np.array([[h[1, 1], -h[0, 1]], [-h[1, 0], h[0, 0]]]) / det
        self._norm = 1.0 / (2.0 * math.pi * math.sqrt(det))

    def kernel_matrix(self, eval_points):
        """K[i, j] = kernel centered at data point j evaluated at point i."""
        pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
        out = np.empty((len(pts), len(self.points)))
        chunk = max(1, 2_000_000 // max(1, len(self.points)))
        for lo in range(0, len(pts), chunk):
            d0 = pts[lo:lo + chunk, None, 0] - self.points[None, :, 0]
            d1 = pts[lo:lo + chunk, None, 1] - self.points[None, :, 1]
            q = (self._inv[0, 0] * d0 ** 2 + 2.0 * self._inv[0, 1] * d0 * d1
                 + self._inv[1, 1] * d1 ** 2)
            out[lo:lo + chunk] = self._norm * np.exp(-0.5 * q)
        return out

    def __call__(self, eval_points):
        return self.kernel_matrix(eval_points).mean(axis=1)


def normal_reference_bandwidth(points):
    """Scott's rule for two dimensions: n^(-1/3) times the sample covariance."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) < 2:
        raise SingularBandwidth("need at least 2 points")
    cov = np.cov(pts.T, ddof=1)
    return len(pts) ** (-1.0 / 3.0) * cov


def bandwidth_candidates(points, scales=(0.5, 1.0, 2.0), angles=(-math.pi / 8, 0.0, math.pi / 8)):
    """Diagonal-plus-rotation grid around the normal-reference bandwidth."""
    href = normal_reference_bandwidth(points)
    evals, evecs = np.linalg.eigh(href)
    if evals.min() <= 0:
        raise SingularBandwidth("sample covariance is singular")
    out = []
    for phi in angles:
        rot = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
        basis = rot @ evecs
        for s1 in scales:
            for s2 in scales:
                out.append(basis @ np.diag([s1 * evals[0], s2 * evals[1]]) @ basis.T)
    return out


def select_kde_bandwidth(points, domain, folds=10, seed=0, rule=None):
    """Pick a bandwidth by the same held-out squared-error score used for
    the spline smoothing weight, over the candidate matrix grid."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rule = rule or rule_9()
    assign = model_selection.fold_assignments(len(pts), folds, seed)
    quad_pts = np.concatenate(
        [rule.cartesian_nodes(domain.triangle_coords(t)) for t in range(domain.n_triangles)]
    )
    quad_w = np.repeat(domain.areas, len(rule.weights)) * np.tile(
        rule.weights, domain.n_triangles
    )
    best = None
    scores = []
    candidates = bandwidth_candidates(pts)
    for h in candidates:
        kde = KernelDensity(pts, h)
        kq = kde.kernel_matrix(quad_pts)    # (n_quad, n)
        kd = kde.kernel_matrix(pts)         # (n, n)
        kq_total = kq.sum(axis=1)
        kd_total = kd.sum(axis=1)
        err = 0.0
        for k in range(folds):
            test = assign == k
            n_train = int((~test).sum())
            f_quad = (kq_total - kq[:, test].sum(axis=1)) / n_train
            f_test = (kd_total[test] - kd[np.ix_(test, test)].sum(axis=1)) / n_train
            err += float(quad_w @ f_quad ** 2) - 2.0 * float(f_test.mean())
        err /= folds
        scores.append(err)
        if best is None or err < best[0]:
            best = (err, h)
    return best[1], {"scores": scores, "candidates": candidates}


def kde_baseline(points, eval_points, bandwidth=None, domain=None, folds=10, seed=0):
    """Kernel density values on an evaluation grid.

    bandwidth may be an explicit 2x2 matrix; if omitted, it is selected by
    cross-validation, which requires the domain mesh for the quadrature
    term of the score.
    """
    if bandwidth is None:
        if domain is None:
            raise ValueError("bandwidth selection requires the domain mesh")
        bandwidth, _ = select_kde_bandwidth(points, domain, folds=folds, seed=seed)
    return KernelDensity(points, bandwidth)(eval_points)


def replication_estimators(scenario, n, rep_seed, methods=("bpst", "kde"),
                           spec=None, lambda_grid=model_selection.DEFAULT_LAMBDA_GRID,
                           folds=10, space=None, initial_tr=None):
    """Sample one replication and fit every requested method on it.

    Returns a dict mapping method name to a fitted estimator (a DensityFit
    or a KernelDensity); a method that raised stores its exception instead.
    Everything derives deterministically from rep_seed.
    """
    spec = spec or SplineSpec(3, 1)
    data = sample(scenario, n, rep_seed)
    out = {}
    for method in methods:
        try:
            if method == "bpst":
                if space is None:
                    space = estimator.ModelSpace(scenario.domain, spec)
                report = model_selection.select_lambda(
                    scenario.domain, data, spec, lambda_grid,
                    folds=folds, seed=rep_seed, space=space,
                )
                cfg = estimator.FitConfig(spec=spec, lam=report.best_lambda)
                out[method] = estimator.fit(
                    scenario.domain, data, cfg, space=space, initial_tr=initial_tr
                )
            elif method == "kde":
                bw, _ = select_kde_bandwidth(
                    data, scenario.domain, folds=folds, seed=rep_seed
                )
                out[method] = KernelDensity(data, bw)
            else:
                raise ValueError(f"unknown method {method!r}")
        except TriDensityError as exc:
            out[method] = exc
    return out


@dataclass
class MiseResult:
    """Aggregated integrated-squared-error scores of one method."""

    method: str
    per_replication: list
    mean: float
    sd: float
    sd_defined: bool
    n_failed: int
    failures: list = field(default_factory=list)  # (replication, message)


def run_benchmark(scenario, n, reps, methods=("bpst", "kde"), seed=0,
                  spec=None, lambda_grid=model_selection.DEFAULT_LAMBDA_GRID,
                  folds=10, mise_resolution=100, threads=1, use_initial_mesh=False):
    """Sample, fit and score each method over independent replications.

    Replication r derives its seed as seed XOR r, so results are a pure
    function of (scenario, n, reps, seed) and independent of the thread
    count. Failed replications are excluded from the aggregates and
    reported per method.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    scenario = get_scenario(scenario) if isinstance(scenario, str) else scenario
    spec = spec or SplineSpec(3, 1)
    space = estimator.ModelSpace(scenario.domain, spec) if "bpst" in methods else None
    initial_tr = scenario.initial_domain if use_initial_mesh else None

    def run_rep(r):
        out = {}
        for method, est in replication_estimators(
            scenario, n, seed ^ r, methods, spec=spec, lambda_grid=lambda_grid,
            folds=folds, space=space, initial_tr=initial_tr,
        ).items():
            if isinstance(est, Exception):
                out[method] = est
            else:
                out[method] = mise(est, scenario, mise_resolution)
        return out

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(run_rep, range(reps)))
    else:
        rows = [run_rep(r) for r in range(reps)]

    results = []
    for method in methods:
        values, failures = [], []
        for r, row in enumerate(rows):
            cell = row[method]
            if isinstance(cell, Exception):
                failures.append((r, str(cell)))
            else:
                values.append(cell)
        mean = float(np.mean(values)) if values else float("nan")
        sd_defined = len(values) >= 2
        sd = float(np.std(values, ddof=1)) if sd_defined else 0.0
        results.append(MiseResult(
            method=method, per_replication=values, mean=mean, sd=sd,
            sd_defined=sd_defined, n_failed=len(failures), failures=failures,
        ))
    return results
