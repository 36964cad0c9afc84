"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``criterion N ... PASS|FAIL`` line (visible even under
output capture) and then asserts the criterion at its stated tolerance.
Run just this module with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from parampriv.gauss_markov import GaussMarkovModel, riccati_fixed_point, riccati_step
from parampriv.harness import ExperimentConfig, estimate_distortion, occupancy_config, run_sweep
from parampriv.adversary import Pipeline, error_probability
from parampriv.model_core import build_model, spawn_generator
from parampriv.randomizer import solve_randomizer
from parampriv.transform import run_filter

from conftest import random_gm
from oracles import brute_force_conditional, grid_search_randomizer


@pytest.fixture
def verdict(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:>2} {title}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


# -- shared sweep of the occupancy experiment -----------------------------------

@pytest.fixture(scope="module")
def occupancy():
    cfg = ExperimentConfig.from_dict(occupancy_config())
    start = time.perf_counter()
    D = estimate_distortion(cfg)
    d_seconds = time.perf_counter() - start
    rows, details = run_sweep(cfg, D=D)
    return cfg, D, rows, details, d_seconds


# -- 1 --------------------------------------------------------------------------

def test_criterion_01_identity_pass_through(verdict):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        theta = random_gm(rng)
        same_a, same_b = GaussMarkovModel(theta), GaussMarkovModel(theta)
        y = same_a.sample_paths(50, 5, rng)
        worst = max(worst, float(np.abs(run_filter(same_a, same_b, y) - y).max()))
    seconds = time.perf_counter() - start
    ok = worst <= 1e-9 and seconds < 10
    verdict(1, "identity pass-through", ok, f"max |y~ - y| = {worst:.2e}, {seconds:.1f} s")
    assert worst <= 1e-9
    assert seconds < 10


# -- 2 --------------------------------------------------------------------------

UNIFORMITY_PAIRS = {
    "iid gaussian": (
        {"kind": "iid", "components": [{"family": "gaussian", "loc": 3.0, "scale": 2.0}]},
        {"kind": "iid", "components": [{"family": "gaussian", "loc": -1.0, "scale": 0.5}]},
        (500, 20)),
    "markov scalar": (
        {"kind": "markov", "initial": [{"family": "gaussian", "scale": 2.0}], "coef": [[0.8]],
         "offset": [1.0], "noise": [{"family": "laplace", "scale": 0.5}]},
        {"kind": "markov", "initial": [{"family": "laplace"}], "coef": [[-0.4]],
         "offset": [0.0], "noise": [{"family": "gaussian", "scale": 3.0}]},
        (500, 20)),
    "gauss-markov d=2": (
        {"kind": "gauss_markov", "A": [[0.7, 0.2], [-0.1, 0.5]], "C": [[1.0, 0.0], [0.5, 1.0]],
         "Qw": [[0.3, 0.1], [0.1, 0.2]], "Qv": [[0.2, 0.05], [0.05, 0.4]],
         "Q0": [[1.0, 0.0], [0.0, 1.0]], "drift": [1.0, 0.0], "m0": [2.0, -1.0]},
        {"kind": "gauss_markov", "A": [[0.3, 0.0], [0.0, 0.6]],
         "C": [[1.0, 1.0], [0.0, 1.0]], "Qw": [[0.5, 0.0], [0.0, 0.5]],
         "Qv": [[1.0, 0.3], [0.3, 1.0]], "Q0": [[2.0, 0.0], [0.0, 2.0]],
         "drift": [0.0, 3.0], "m0": [0.0, 0.0]},
        (250, 20)),
}


def test_criterion_02_cdf_values_are_uniform(verdict):
    start = time.perf_counter()
    results = {}
    for name, (true_desc, pseudo_desc, (n_paths, T)) in UNIFORMITY_PAIRS.items():
        true_m, pseudo_m = build_model(true_desc), build_model(pseudo_desc)
        y = true_m.sample_paths(T, n_paths, spawn_generator(0, 20, len(results)))
        _, u, _ = run_filter(true_m, pseudo_m, y, return_u=True)
        u = u.ravel()
        critical = stats.kstwo.ppf(0.99, u.size)
        results[name] = (stats.kstest(u, "uniform").statistic, critical, u.size)
    seconds = time.perf_counter() - start
    ok = all(ks < crit for ks, crit, _ in results.values()) and seconds < 30
    detail = "; ".join(f"{k}: D={v[0]:.4f} < {v[1]:.4f} (n={v[2]})" for k, v in results.items())
    verdict(2, "uniformity of u", ok, f"{detail}; {seconds:.1f} s")
    for ks, crit, n in results.values():
        assert n == 10_000
        assert ks < crit
    assert seconds < 30


# -- 3 --------------------------------------------------------------------------

def _moments(x):
    """Per-time mean, variance, lag-1 autocovariance and their standard errors."""
    n = x.shape[0]
    c = x - x.mean(axis=0)
    mean, mean_se = x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(n)
    sq = c ** 2
    var, var_se = sq.mean(axis=0) * n / (n - 1), sq.std(axis=0, ddof=1) / math.sqrt(n)
    prod = c[:, 1:] * c[:, :-1]
    acov, acov_se = prod.mean(axis=0) * n / (n - 1), prod.std(axis=0, ddof=1) / math.sqrt(n)
    return (mean, var, acov), (mean_se, var_se, acov_se)


def test_criterion_03_output_law_invariance(verdict):
    start = time.perf_counter()
    cfg = occupancy_config()["models"]
    true_m, pseudo_m = build_model(cfg["occ1"]), build_model(cfg["pseudo0"])
    n, T = 10_000, 50
    y = true_m.sample_paths(T, n, spawn_generator(0, 30))
    disguised = run_filter(true_m, pseudo_m, y)[..., 0]
    direct = pseudo_m.sample_paths(T, n, spawn_generator(0, 31))[..., 0]
    (m1, se1), (m2, se2) = _moments(disguised), _moments(direct)
    worst, misses, total = 0.0, 0, 0
    for a, b, sa, sb in zip(m1, m2, se1, se2):
        z = np.abs(a - b) / np.sqrt(sa ** 2 + sb ** 2)
        worst = max(worst, float(z.max()))
        misses += int(np.count_nonzero(z > 3))
        total += z.size
    seconds = time.perf_counter() - start
    ok = misses == 0 and seconds < 120
    verdict(3, "output-law invariance", ok,
            f"{misses}/{total} moments beyond 3 SE, worst {worst:.2f} SE, {seconds:.1f} s")
    assert misses == 0
    assert seconds < 120


# -- 4 --------------------------------------------------------------------------

def test_criterion_04_recursive_conditionals_match_joint_conditioning(verdict):
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(400 + seed)
        theta = random_gm(rng)
        model = GaussMarkovModel(theta)
        T = int(rng.integers(1, 7))
        y = model.sample_path(T, rng)
        for k in range(1, T + 1):
            for l in range(theta.d):
                mean, std = model._conditional(l, y[k - 1, :l], y[:k - 1])
                ref_mean, ref_var = brute_force_conditional(theta, y.ravel(), k, l)
                worst = max(worst, abs(float(mean) - ref_mean), abs(std ** 2 - ref_var))
    seconds = time.perf_counter() - start
    ok = worst <= 1e-8 and seconds < 30
    verdict(4, "recursive vs joint-Gaussian conditionals", ok,
            f"max abs difference {worst:.2e}, {seconds:.1f} s")
    assert worst <= 1e-8
    assert seconds < 30


# -- 5 --------------------------------------------------------------------------

def test_criterion_05_riccati_fixed_point(verdict):
    systems = [random_gm(np.random.default_rng(s)) for s in range(120)]
    occ = occupancy_config()["models"]
    systems += [build_model(desc).theta for desc in occ.values()]
    worst_res, worst_iter = 0.0, 0
    for theta in systems:
        sigma, iters = riccati_fixed_point(theta)
        worst_res = max(worst_res, float(np.abs(riccati_step(sigma, theta) - sigma).max()))
        worst_iter = max(worst_iter, iters)
    ok = worst_res <= 1e-10 and worst_iter < 500
    verdict(5, "Riccati fixed point", ok,
            f"{len(systems)} systems, max residual {worst_res:.2e}, max iterations {worst_iter}")
    assert worst_res <= 1e-10
    assert worst_iter < 500


# -- 6 --------------------------------------------------------------------------

def test_criterion_06_randomizer_optimality(verdict):
    worst_gap, worst_slack, worst_col = 0.0, -np.inf, 0.0
    solver_seconds = 0.0
    start = time.perf_counter()
    for seed in range(50):
        rng = np.random.default_rng(600 + seed)
        m, mt = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        D = rng.random((m, mt)) * rng.uniform(0.1, 10)
        p = rng.dirichlet(np.ones(m))
        I0 = float(rng.uniform(0, math.log(max(min(m, mt), 2))))
        t0 = time.perf_counter()
        res = solve_randomizer(D, p, I0)
        solver_seconds += time.perf_counter() - t0
        ref, _ = grid_search_randomizer(D, p, I0)
        span = max(float(np.ptp(D)), 1e-12)
        worst_gap = max(worst_gap, abs(res.distortion - ref) / span)
        worst_slack = max(worst_slack, res.mutual_information - I0)
        worst_col = max(worst_col, float(np.abs(res.policy.P.sum(axis=0) - 1).max()))
    seconds = time.perf_counter() - start
    ok = worst_gap <= 1e-3 and worst_slack <= 1e-6 and worst_col <= 1e-9 and seconds < 60
    verdict(6, "randomizer optimality", ok,
            f"gap {worst_gap:.1e} x range, MI excess {worst_slack:.1e}, column error "
            f"{worst_col:.1e}, solver {solver_seconds:.1f} s, total {seconds:.1f} s")
    assert worst_gap <= 1e-3
    assert worst_slack <= 1e-6
    assert worst_col <= 1e-9
    assert seconds < 60


# -- 7 --------------------------------------------------------------------------

def test_criterion_07_relative_distortion_anchor(occupancy, verdict):
    cfg, D, rows, details, d_seconds = occupancy
    start = time.perf_counter()
    res = solve_randomizer(D, cfg.prior, 0.3, pseudo_labels=cfg.pseudo_labels)
    rel = 100 * res.distortion / details["mean_signal"]
    seconds = d_seconds + time.perf_counter() - start
    ok = 0.4 <= rel <= 1.2 and seconds < 300
    verdict(7, "relative distortion at I0=0.3", ok,
            f"{rel:.3f}% (required 0.4%..1.2%), {cfg.n_paths} paths, {seconds:.1f} s")
    assert 0.4 <= rel <= 1.2
    assert seconds < 300


# -- 8 --------------------------------------------------------------------------

def test_criterion_08_error_rate_trend(occupancy, verdict):
    cfg, D, _, _, _ = occupancy
    start = time.perf_counter()
    rates = {}
    for I0 in (0.3, 0.68):
        res = solve_randomizer(D, cfg.prior, I0, pseudo_labels=cfg.pseudo_labels)
        pipe = Pipeline(cfg.prior, cfg.true_models, cfg.values, res.policy, cfg.pseudo_models,
                        cfg.horizon, cfg.estimator)
        rates[I0] = error_probability(pipe, 1_000_000, seed=cfg.seed, n_jobs=4)
    seconds = time.perf_counter() - start
    (p_lo, se_lo), (p_hi, se_hi) = rates[0.3], rates[0.68]
    if p_hi == 0:
        ok = p_lo >= 100 * 3 / 1e6
        detail = f"p_err(0.68) = 0, p_err(0.3) = {p_lo:.4g}"
    else:
        ok = p_lo / p_hi >= 100
        detail = (f"p_err(0.3) = {p_lo:.4g} +/- {se_lo:.1g}, p_err(0.68) = {p_hi:.4g} "
                  f"+/- {se_hi:.1g}, ratio {p_lo / p_hi:.2f} (required >= 100)")
    verdict(8, "error-rate trend", ok and seconds < 1200, f"{detail}, {seconds:.0f} s")
    assert ok
    assert seconds < 1200


# -- 9 --------------------------------------------------------------------------

def test_criterion_09_fano_consistency(occupancy, verdict):
    _, _, rows, _, _ = occupancy
    margins = [r["p_err"] - (r["fano_bound"] - 3 * r["p_err_se"]) for r in rows]
    ok = min(margins) >= 0
    verdict(9, "Fano consistency", ok,
            f"{len(rows)} budgets, smallest margin {min(margins):.4f}")
    assert ok


# -- 10 -------------------------------------------------------------------------

def test_criterion_10_sweep_shape(occupancy, verdict):
    _, _, rows, _, _ = occupancy
    rel = [r["relative_distortion_percent"] for r in rows]
    p = [r["p_err"] for r in rows]
    se = [r["p_err_se"] for r in rows]
    dist_ok = all(b <= a for a, b in zip(rel, rel[1:]))
    excess = [(b - a) / math.hypot(sa, sb) for a, b, sa, sb in zip(p, p[1:], se, se[1:])]
    perr_ok = max(excess) <= 3
    verdict(10, "sweep shape", dist_ok and perr_ok,
            f"distortion {rel[0]:.2f}% -> {rel[-1]:.3f}%, p_err {p[0]:.3f} -> {p[-1]:.3f}, "
            f"largest p_err rise {max(excess):.2f} combined SE")
    assert dist_ok
    assert perr_ok
