"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line (run with -s to stream them).

The heavyweight search experiment (criteria 7, 9, 11) runs once at the
documented desk scale: population 15, 50 generations, 10 seeds.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

import svrtune.svr as svr_mod
from svrtune.benchmarks import sphere
from svrtune.cli import main as cli_main
from svrtune.dataset import (
    SplitSpec,
    SupervisedSet,
    apply_normalizer,
    build_supervised,
    fit_normalizer,
    invert_normalizer,
    parse_csv,
    series_to_csv,
    split,
)
from svrtune.optim import DeConfig, PsoConfig, SearchSpace, de_optimize, pso_optimize
from svrtune.svr import (
    KernelSpec,
    SolverSettings,
    SvrParams,
    kernel_eval,
    mse,
    predict_batch,
    train_svr,
)
from svrtune.synth import noisy_sine, synthetic_ohlcv
from svrtune.tuning import (
    FitnessSpec,
    ParamBox,
    SweepSpec,
    evaluate_triple,
    heuristic_c,
    sweep,
    tune,
)

from reference_qp import reference_bias, reference_predict, reference_solution

DESK_BOX = ParamBox((1.0, 550.0), (0.01, 0.3), (0.2, 4.0))
DESK_FITNESS = FitnessSpec.holdout(0.2)
DESK_SETTINGS = SolverSettings(kkt_tolerance=1e-3, max_passes=3)
DESK_SEEDS = range(10)


def report(name: str, ok: bool, detail: str = "") -> None:
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


def normalized_walk(seed: int, volume_scale: float = 1e6):
    series = synthetic_ohlcv(rows=701, seed=seed, drift=0.0, volume_scale=volume_scale)
    sset = build_supervised(series)
    nmap = fit_normalizer(sset, -1.0, 1.0, fit_rows=range(500))
    train, test = split(apply_normalizer(nmap, sset), SplitSpec(500, 200))
    return sset, nmap, train, test


def test_criterion_1_svr_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_gap = 0.0
    worst_pred = 0.0
    for trial in range(20):
        n = int(rng.integers(3, 7))
        d = int(rng.integers(1, 4))
        X = rng.uniform(-1.0, 1.0, size=(n, d))
        y = rng.uniform(-1.0, 1.0, size=n)
        c = (0.5, 2.0)[trial % 2]
        epsilon = (0.05, 0.2)[(trial // 2) % 2]
        gamma = (0.1, 1.0)[(trial // 4) % 2]
        spec = KernelSpec("rbf", gamma=gamma)
        params = SvrParams(c, epsilon, spec)
        settings = SolverSettings(kkt_tolerance=1e-10, max_passes=10000)
        model = train_svr(X, y, params, settings)
        K = svr_mod._kernel_matrix(spec, X)
        beta, _, _, _ = svr_mod._solve_dual(svr_mod._DenseKernel(K), y, c, epsilon,
                                            1e-10, 10000 * n)
        solver_value = svr_mod.dual_objective(K, y, epsilon, beta)
        ref_beta, ref_value = reference_solution(K, y, c, epsilon)
        worst_gap = max(worst_gap, abs(solver_value - ref_value))
        assert solver_value >= ref_value - 1e-6
        ref_b = reference_bias(K, y, c, epsilon, ref_beta)
        ref_pred = reference_predict(lambda a, b: kernel_eval(spec, a, b),
                                     X, ref_beta, ref_b, X)
        worst_pred = max(worst_pred, float(np.abs(predict_batch(model, X) - ref_pred).max()))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 1e-6 and worst_pred <= 1e-4 and elapsed < 30.0
    report("1 svr-oracle-equivalence", ok,
           f"(worst objective gap {worst_gap:.2e}, worst prediction gap {worst_pred:.2e}, {elapsed:.1f}s)")


def test_criterion_2_kkt_suite():
    X, y = noisy_sine(100, seed=42)
    tol = 1e-3
    settings = SolverSettings(kkt_tolerance=tol, max_passes=1000)
    t0 = time.perf_counter()
    failures = []
    for c in (1.0, 10.0):
        for epsilon in (0.05, 0.1):
            for gamma in (0.5, 2.0):
                params = SvrParams(c, epsilon, KernelSpec("rbf", gamma=gamma))
                model = train_svr(X, y, params, settings)
                resid = y - predict_batch(model, X)
                betas = np.zeros(len(y))
                for b_val, row in zip(model.beta, model.support_inputs):
                    idx = np.flatnonzero((X == row).all(axis=1))[0]
                    betas[idx] = b_val
                at_up = betas >= c - 1e-9 * c
                at_dn = betas <= -c + 1e-9 * c
                free = (~at_up) & (~at_dn) & (np.abs(betas) > 1e-8)
                zero = np.abs(betas) <= 1e-8
                checks = [
                    np.all(resid[at_up] >= epsilon - tol),
                    np.all(-resid[at_dn] >= epsilon - tol),
                    np.all(np.abs(np.abs(resid[free]) - epsilon) <= tol),
                    np.all(np.abs(resid[zero]) <= epsilon + tol),
                ]
                if not all(checks):
                    failures.append((c, epsilon, gamma, checks))
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 5.0
    report("2 kkt-suite", ok, f"(8 models, {elapsed:.1f}s{'' if not failures else f', failures: {failures}'})")


def test_criterion_3_epsilon_monotonicity():
    X, y = noisy_sine(100, seed=42)
    sset = SupervisedSet(np.column_stack([X] * 5), y)
    train, test = split(sset, SplitSpec(80, 19))
    t0 = time.perf_counter()
    grid = tuple(np.linspace(0.01, 0.30, 20))
    spec = SweepSpec(varying="epsilon", grid=grid, c=10.0, gamma=0.5)
    rows = sweep(train, test, spec, SolverSettings(max_passes=1000))
    counts = [r.n_sv for r in rows]
    elapsed = time.perf_counter() - t0
    ok = all(c2 <= c1 + 1 for c1, c2 in zip(counts, counts[1:])) and elapsed < 10.0
    report("3 epsilon-monotonicity", ok, f"(n_sv {counts}, {elapsed:.1f}s)")


def test_criterion_4_normalization_round_trip():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    feats = rng.uniform(-1e5, 1e5, size=(10_000, 5))
    targets = rng.uniform(0.1, 1e4, size=10_000)
    sset = SupervisedSet(feats, targets)
    nmap = fit_normalizer(sset, -1.0, 1.0)
    normed = apply_normalizer(nmap, sset)
    worst = 0.0
    for k, name in enumerate(sset.column_names):
        back = invert_normalizer(nmap, name, normed.features[:, k])
        rel = np.abs(back - feats[:, k]) / np.maximum(1.0, np.abs(feats[:, k]))
        worst = max(worst, float(rel.max()))
    back_t = invert_normalizer(nmap, sset.target_name, normed.targets)
    rel_t = np.abs(back_t - targets) / np.maximum(1.0, np.abs(targets))
    worst = max(worst, float(rel_t.max()))
    endpoints_exact = True
    for k in range(5):
        col = normed.features[:, k]
        endpoints_exact &= col.min() == -1.0 and col.max() == 1.0
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and endpoints_exact and elapsed < 1.0
    report("4 normalization-round-trip", ok, f"(worst rel err {worst:.2e}, {elapsed:.2f}s)")


def test_criterion_5_de_convergence():
    space = SearchSpace(tuple((f"x{i}", -5.0, 5.0) for i in range(5)))
    t0 = time.perf_counter()
    finals = []
    for seed in range(10):
        cfg = DeConfig(pop_size=30, f=0.5, cr=0.9, strategy="rand_1_bin",
                       g_max=200, seed=seed)
        result = de_optimize(sphere, space, cfg)
        best = [b for b, _ in result.history]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:])), f"seed {seed} not monotone"
        finals.append(result.best_f)
    elapsed = time.perf_counter() - t0
    median = float(np.median(finals))
    ok = median <= 1e-6 and elapsed < 5.0
    report("5 de-convergence", ok, f"(median best {median:.2e}, {elapsed:.1f}s)")


def test_criterion_6_pso_convergence():
    space = SearchSpace(tuple((f"x{i}", -5.0, 5.0) for i in range(5)))
    t0 = time.perf_counter()
    finals = []
    for seed in range(10):
        cfg = PsoConfig(swarm=30, w=0.729, c1=1.494, c2=1.494, iters=200, seed=seed)
        result = pso_optimize(sphere, space, cfg)
        best = [b for b, _ in result.history]
        assert all(b2 <= b1 for b1, b2 in zip(best, best[1:])), f"seed {seed} not monotone"
        finals.append(result.best_f)
    elapsed = time.perf_counter() - t0
    median = float(np.median(finals))
    ok = median <= 1e-3 and elapsed < 5.0
    report("6 pso-convergence", ok, f"(median best {median:.2e}, {elapsed:.1f}s)")


@pytest.fixture(scope="module")
def desk_experiment():
    """Criteria 7 and 9 share this run: 10 seeds, desk-scale search."""
    records = []
    t0 = time.perf_counter()
    for seed in DESK_SEEDS:
        _, _, train, test = normalized_walk(seed)
        default, _ = evaluate_triple(train, test, 1.0, 0.1, 0.2,
                                     settings=DESK_SETTINGS, seed=seed)
        de_report, _ = tune(train, test, DESK_BOX,
                            DeConfig(pop_size=15, g_max=50, cr=0.7, f=0.9,
                                     strategy="local_to_best_1_bin", seed=seed),
                            fitness=DESK_FITNESS, settings=DESK_SETTINGS)
        pso_report, _ = tune(train, test, DESK_BOX,
                             PsoConfig(swarm=15, iters=50, seed=seed),
                             fitness=DESK_FITNESS, settings=DESK_SETTINGS)
        records.append({"seed": seed, "default": default, "de": de_report, "pso": pso_report})
    return records, time.perf_counter() - t0


def test_criterion_7_tuned_beats_default(desk_experiment):
    records, elapsed = desk_experiment
    de_wins = sum(r["de"].test_mse <= r["default"].test_mse for r in records)
    pso_wins = sum(r["pso"].test_mse <= r["default"].test_mse for r in records)
    ok = de_wins >= 8 and pso_wins >= 8 and elapsed < 600.0
    report("7 tuned-beats-default", ok,
           f"(DE {de_wins}/10, PSO {pso_wins}/10, desk scale np=15 g=50, {elapsed:.0f}s)")


def test_criterion_8_normalization_benefit():
    t0 = time.perf_counter()
    settings = DESK_SETTINGS
    wins = 0
    for seed in DESK_SEEDS:
        sset = build_supervised(synthetic_ohlcv(rows=701, seed=seed, drift=0.0,
                                                volume_scale=1e7))
        train_raw, test_raw = split(sset, SplitSpec(500, 200))
        raw_report, _ = evaluate_triple(train_raw, test_raw, 1.0, 0.1, 0.2,
                                        settings=settings, seed=seed)
        nmap = fit_normalizer(sset, -1.0, 1.0, fit_rows=range(500))
        train_n, test_n = split(apply_normalizer(nmap, sset), SplitSpec(500, 200))
        _, model_n = evaluate_triple(train_n, test_n, 1.0, 0.1, 0.2,
                                     settings=settings, seed=seed)
        denorm = invert_normalizer(nmap, "next_close", predict_batch(model_n, test_n.features))
        denorm_mse = mse(test_raw.targets, denorm)
        wins += denorm_mse <= raw_report.test_mse
    elapsed = time.perf_counter() - t0
    ok = wins >= 8 and elapsed < 120.0
    report("8 normalization-benefit", ok, f"({wins}/10 wins, {elapsed:.0f}s)")


def test_criterion_9_de_pso_comparability(desk_experiment):
    records, _ = desk_experiment
    in_box = all(
        DESK_BOX.contains(r[m].c, r[m].epsilon, r[m].gamma)
        for r in records for m in ("de", "pso")
    )
    both = sum(
        (r["de"].test_mse <= r["default"].test_mse)
        and (r["pso"].test_mse <= r["default"].test_mse)
        for r in records
    )
    ok = in_box and both >= 7
    report("9 de-pso-comparability", ok, f"(both win on {both}/10 seeds, boxes respected: {in_box})")


APPLE_ENV = "SVRTUNE_APPLE_CSV"
HONEYWELL_ENV = "SVRTUNE_HONEYWELL_CSV"


@pytest.mark.skipif(
    not (os.environ.get(APPLE_ENV) and os.environ.get(HONEYWELL_ENV)),
    reason=f"original price CSVs not supplied ({APPLE_ENV} / {HONEYWELL_ENV} unset)",
)
def test_criterion_10_original_data_values():
    expected = {APPLE_ENV: 450.8346, HONEYWELL_ENV: 69.167}
    details = []
    for env, target_c in expected.items():
        sset = build_supervised(parse_csv(Path(os.environ[env]).read_text(encoding="utf-8")))
        train, _ = split(sset, SplitSpec(500, 200))
        got = heuristic_c(train.targets)
        details.append(f"{env}: heuristic C {got:.4f} vs {target_c}")
        assert abs(got - target_c) <= 0.005 * target_c, details[-1]
    # normalized-Apple DE run lands within an order of magnitude of 0.00652
    sset = build_supervised(parse_csv(Path(os.environ[APPLE_ENV]).read_text(encoding="utf-8")))
    nmap = fit_normalizer(sset, -1.0, 1.0, fit_rows=range(500))
    train, test = split(apply_normalizer(nmap, sset), SplitSpec(500, 200))
    de_report, _ = tune(train, test, ParamBox((1.0, 550.0), (0.033, 0.052), (0.01, 0.11)),
                        DeConfig(pop_size=15, g_max=50, cr=0.7, f=0.9,
                                 strategy="local_to_best_1_bin", seed=0),
                        fitness=FitnessSpec.train_mse(), settings=DESK_SETTINGS)
    ratio = de_report.test_mse / 0.00652
    ok = 0.1 <= ratio <= 10.0
    report("10 original-data-values", ok, f"({'; '.join(details)}; test MSE ratio {ratio:.2f})")


def test_criterion_11_thread_count_determinism(tmp_path):
    series = synthetic_ohlcv(rows=701, seed=0, drift=0.0)
    data = tmp_path / "walk.csv"
    data.write_text(series_to_csv(series), encoding="utf-8")
    base = ["tune", "--data", str(data), "--normalize",
            "--train-n", "500", "--test-n", "200",
            "--method", "de", "--c-range", "1:550", "--epsilon-range", "0.01:0.3",
            "--gamma-range", "0.2:4", "--np", "15", "--gmax", "50",
            "--cr", "0.7", "--f", "0.9", "--strategy", "local_to_best_1_bin",
            "--fitness", "holdout:0.2", "--max-passes", "3", "--seed", "0"]
    assert cli_main([*base, "--out", str(tmp_path / "t1"), "--threads", "1"]) == 0
    assert cli_main([*base, "--out", str(tmp_path / "t8"), "--threads", "8"]) == 0
    same = {
        name: (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t8" / name).read_bytes()
        for name in ("report.json", "model.json", "history.csv")
    }
    ok = all(same.values())
    report("11 thread-count-determinism", ok, f"(byte-identical: {same})")
