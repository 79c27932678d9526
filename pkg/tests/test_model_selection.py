import numpy as np
import pytest

from tridensity.bernstein import SplineSpec
from tridensity.errors import AllFoldsFailed
from tridensity.estimator import FitConfig, ModelSpace
from tridensity.model_selection import (
    DEFAULT_LAMBDA_GRID,
    cv_error,
    fold_assignments,
    fold_error,
    pick_best,
    select_lambda,
)


def test_fold_assignments_partition():
    assign = fold_assignments(103, 10, seed=5)
    counts = np.bincount(assign, minlength=10)
    assert counts.sum() == 103
    assert counts.max() - counts.min() <= 1
    assert np.array_equal(assign, fold_assignments(103, 10, seed=5))
    assert not np.array_equal(assign, fold_assignments(103, 10, seed=6))


def test_fold_assignments_validation():
    with pytest.raises(ValueError):
        fold_assignments(10, 1, seed=0)
    with pytest.raises(ValueError):
        fold_assignments(3, 5, seed=0)


def test_constant_density_anchor(unit32, rng):
    c = 1.0 / unit32.area
    fn = lambda pts: np.full(len(np.atleast_2d(pts)), c)
    test_pts = rng.random((17, 2))
    err = fold_error(fn, unit32, test_pts)
    assert abs(err - (-1.0 / unit32.area)) <= 1e-10


def test_pick_best_prefers_larger_lambda_on_ties():
    assert pick_best([1e-4, 1e-3, 1e-2], [0.5, 0.1, 0.1]) == 2
    assert pick_best([1e-2, 1e-3, 1e-4], [0.1, 0.1, 0.5]) == 0
    assert pick_best([1e-4, 1e-3], [0.2, 0.5]) == 0


def test_single_lambda_grid(unit32, rng):
    pts = rng.random((60, 2))
    report = select_lambda(unit32, pts, SplineSpec(3, 1), [1e-3], folds=5, seed=1)
    assert report.best_lambda == 1e-3
    assert len(report.cv_errors) == 1
    assert np.isfinite(report.cv_errors[0])


def test_cv_error_deterministic(unit32, rng):
    pts = rng.random((80, 2))
    spec = SplineSpec(3, 1)
    space = ModelSpace(unit32, spec)
    a = cv_error(unit32, pts, spec, 1e-3, folds=5, seed=3, space=space)
    b = cv_error(unit32, pts, spec, 1e-3, folds=5, seed=3, space=space)
    assert a == b


def test_full_grid_on_benchmark_data():
    from tridensity.simbench import scenario_sim1, sample

    scen = scenario_sim1()
    pts = sample(scen, 200, 13)
    grid = list(np.logspace(-6, 0, 7))
    report = select_lambda(scen.domain, pts, SplineSpec(3, 1), grid, folds=10, seed=13)
    assert all(np.isfinite(e) for e in report.cv_errors)
    assert report.best_lambda in grid
    assert all(not f for f in report.failed_folds)
    # partition bookkeeping
    assert len(report.fold_assignments) == len(pts)
    counts = np.bincount(report.fold_assignments)
    assert counts.max() - counts.min() <= 1


def test_seed_stability_smoke():
    from tridensity.simbench import scenario_sim1, sample

    scen = scenario_sim1()
    pts = sample(scen, 200, 21)
    spec = SplineSpec(3, 1)
    space = ModelSpace(scen.domain, spec)
    grid = [1e-5, 1e-3, 1e-1]
    r1 = select_lambda(scen.domain, pts, spec, grid, folds=10, seed=1, space=space)
    r2 = select_lambda(scen.domain, pts, spec, grid, folds=10, seed=2, space=space)
    spread = max(r1.cv_errors) - min(r1.cv_errors)
    shift = max(abs(a - b) for a, b in zip(r1.cv_errors, r2.cv_errors))
    assert shift < spread


def test_degenerate_data_flagged(unit32):
    pts = np.tile([[0.40625, 0.40625]], (30, 1))  # all points identical
    grid = [1e-6, 1e-2, 1.0]
    report = select_lambda(
        unit32, pts, SplineSpec(3, 1), grid, folds=3, seed=0,
        config=FitConfig(spec=SplineSpec(3, 1), max_iters=40),
    )
    assert np.isfinite(report.cv_errors[-1])  # heavy smoothing stays finite
    assert report.best_lambda in grid


def test_all_folds_failed(unit32, rng):
    pts = rng.random((40, 2))
    cfg = FitConfig(spec=SplineSpec(3, 1), max_iters=1,
                    grad_tol=1e-15, obj_tol=1e-18, step_tol=1e-18)
    with pytest.raises(AllFoldsFailed):
        select_lambda(unit32, pts, SplineSpec(3, 1), [1e-3], folds=4, seed=0, config=cfg)


def test_threads_do_not_change_results(unit32, rng):
    pts = rng.random((70, 2))
    spec = SplineSpec(3, 1)
    space = ModelSpace(unit32, spec)
    grid = [1e-4, 1e-2]
    r1 = select_lambda(unit32, pts, spec, grid, folds=4, seed=2, space=space, threads=1)
    r8 = select_lambda(unit32, pts, spec, grid, folds=4, seed=2, space=space, threads=8)
    assert r1.cv_errors == r8.cv_errors
    assert r1.best_lambda == r8.best_lambda


def test_default_grid_shape():
    assert len(DEFAULT_LAMBDA_GRID) == 9
    assert DEFAULT_LAMBDA_GRID[0] == pytest.approx(1e-6)
    assert DEFAULT_LAMBDA_GRID[-1] == pytest.approx(1.0)
