"""Acceptance gate: one test per criterion, one pass/fail line each.

The heavy benchmark matrix (criteria 1-4) is computed once in a module
fixture and shared. Run with ``pytest tests/test_acceptance.py -v -rA`` to
see the per-criterion summaries; the whole module takes roughly an hour on
two cores.
"""
import time

import numpy as np
import pytest

import netident as ni
from netident.fitting import _active_indices, _segment_stats
from netident.lasso import coordinate_descent, kkt_violation, lasso_standardized
from netident.support import SparseCoefficients, node_design_matrix

BENCHMARKS = ["kuramoto", "sis", "mm", "rossler", "fhn", "hr"]
GRAPHS = {
    "kuramoto": ("ba", {"m": 3}),
    "sis": ("ws", {"k": 6, "p": 0.1}),
    "mm": ("ws", {"k": 6, "p": 0.1}),
    "rossler": ("ba", {"m": 3}),
    "fhn": ("ws", {"k": 6, "p": 0.1}),
    "hr": ("ba", {"m": 3}),
}
SEEDS_CLEAN = 10  # criterion 1 pins ten seeds
SEEDS_ROBUST = 5  # unspecified for criteria 2-4; five keeps the suite tractable
N_DESK = 1000


def make_case(system, seed, n=N_DESK):
    model, kw = GRAPHS[system]
    g = ni.generate(model, n=n, seed=seed, **kw)
    params = ni.default_params(system, n=n, seed=seed)
    x0 = ni.initial_state(params, g.n, seed=seed + 1)
    clean = ni.simulate(params, g, x0, dt=0.01, n_steps=1000)
    return g, params, clean


def identify(traj, g, params, seed, **fit_overrides):
    """The pipeline's identification stages (support -> fit -> refine loop)."""
    lib = ni.build_library(ni.LibrarySpec(), state_dim=params.state_dim)
    sup = ni.discover_support(traj, g, lib, ni.SupportConfig(seed=seed + 2))
    fit_kw = dict(horizon=100, batch=4, seed=seed + 3, integrator="midpoint")
    fit_kw.update(fit_overrides)
    cfg = ni.FitConfig(**fit_kw)
    res = ni.fit(traj, g, sup.mask, lib, cfg, init=sup.init_coefficients)
    model = res.model
    for _ in range(3):
        mask, pruned = ni.refine_mask(model, 0.02, per_dimension=True)
        if mask.n_active == model.n_active:
            break
        res = ni.fit(
            traj, g, mask, lib, cfg,
            init=SparseCoefficients(self_coef=pruned.w_self, pair_coef=pruned.w_pair),
        )
        model = res.model
    truth = ni.true_coefficients(params, lib)
    return ni.smape(model, truth)


@pytest.fixture(scope="module")
def benchmark_matrix():
    """sMAPE per (regime, system, seed) for criteria 1-4, computed once."""
    rows: dict[tuple[str, str], list[float]] = {}
    walls: dict[str, float] = {}
    for system in BENCHMARKS:
        for seed in range(SEEDS_CLEAN):
            g, params, clean = make_case(system, seed)
            tic = time.perf_counter()
            rows.setdefault(("clean", system), []).append(identify(clean, g, params, seed))
            walls[system] = max(walls.get(system, 0.0), time.perf_counter() - tic)
            if seed < SEEDS_ROBUST:
                short = ni.truncate(clean, 200)
                rows.setdefault(("t200", system), []).append(identify(short, g, params, seed))
                noisy = ni.add_noise(clean, 60.0, seed + 4)
                rows.setdefault(("snr60", system), []).append(identify(noisy, g, params, seed))
                g_thin = ni.remove_edges(g, 0.3, seed + 5)
                rows.setdefault(("edges30", system), []).append(
                    identify(clean, g_thin, params, seed)
                )
            print(f"  [{system} seed {seed}] done", flush=True)
    return rows, walls


def _medians(rows, regime):
    return {s: float(np.median(rows[(regime, s)])) for s in BENCHMARKS}


def test_c01_clean_recovery_all_benchmarks(benchmark_matrix):
    """Criterion 1: noise-free full pipeline, median sMAPE < 0.01, 10 seeds."""
    rows, walls = benchmark_matrix
    med = _medians(rows, "clean")
    print(f"[criterion 1] median sMAPE (clean): " + ", ".join(f"{s}={med[s]:.2e}" for s in BENCHMARKS))
    print(f"[criterion 1] slowest single run per system (s): "
          + ", ".join(f"{s}={walls[s]:.0f}" for s in BENCHMARKS))
    assert all(med[s] < 0.01 for s in BENCHMARKS), med
    assert all(walls[s] < 300.0 for s in BENCHMARKS), walls
    print("[criterion 1] PASS")


def test_c02_sample_efficiency_200_points(benchmark_matrix):
    """Criterion 2: 200 observed points retain median sMAPE < 0.01."""
    rows, _ = benchmark_matrix
    med = _medians(rows, "t200")
    print(f"[criterion 2] median sMAPE (T=200): " + ", ".join(f"{s}={med[s]:.2e}" for s in BENCHMARKS))
    assert all(med[s] < 0.01 for s in BENCHMARKS), med
    print("[criterion 2] PASS")


def test_c03_noise_robustness_60db(benchmark_matrix):
    """Criterion 3: 60 dB SNR, median sMAPE < 0.05 for all systems except SIS
    (reported without a bound, matching its known term ambiguity)."""
    rows, _ = benchmark_matrix
    med = _medians(rows, "snr60")
    print(f"[criterion 3] median sMAPE (60 dB): " + ", ".join(f"{s}={med[s]:.3f}" for s in BENCHMARKS))
    print(f"[criterion 3] SIS reported (no bound): {med['sis']:.3f}")
    bounded = [s for s in BENCHMARKS if s != "sis"]
    assert all(med[s] < 0.05 for s in bounded), med
    print("[criterion 3] PASS")


def test_c04_edge_deletion_30pct(benchmark_matrix):
    """Criterion 4: 30% of edges removed before inference; at least five of
    six systems must keep median sMAPE < 0.10.

    Expected to fail honestly: with data simulated on the full graph and
    inference on the thinned one (the pipeline order the contract pins), the
    best node-invariant fit is itself displaced from the generating
    coefficients. Measured floors with the exact support mask exceed 0.10
    for the contact-style and relaxation systems at every density and
    fitting horizon tried; see the analysis in the decisions ledger.
    """
    rows, _ = benchmark_matrix
    med = _medians(rows, "edges30")
    print(f"[criterion 4] median sMAPE (30% edges removed): "
          + ", ".join(f"{s}={med[s]:.3f}" for s in BENCHMARKS))
    passing = [s for s in BENCHMARKS if med[s] < 0.10]
    print(f"[criterion 4] systems under 0.10: {passing} ({len(passing)}/6, need 5)")
    assert len(passing) >= 5, med
    print("[criterion 4] PASS")


def test_c05_parameter_count_scale_independent():
    """Criterion 5: trainable-coefficient count identical at n=100 and n=10,000."""
    counts = {}
    terms = {}
    for n in (100, 10_000):
        model, kw = GRAPHS["kuramoto"]
        g = ni.generate(model, n=n, seed=0, **kw)
        params = ni.default_params("kuramoto")
        x0 = ni.initial_state(params, g.n, seed=1)
        traj = ni.simulate(params, g, x0, dt=0.01, n_steps=1000)
        lib = ni.build_library(ni.LibrarySpec(), state_dim=1)
        sup = ni.discover_support(traj, g, lib, ni.SupportConfig(seed=2))
        counts[n] = sup.mask.n_active
        terms[n] = {
            (part, k) for part, m in (("self", sup.mask.self_mask), ("pair", sup.mask.pair_mask))
            for k in map(tuple, np.argwhere(m > 0))
        }
    print(f"[criterion 5] trainable coefficients: n=100 -> {counts[100]}, n=10000 -> {counts[10_000]}")
    assert counts[100] == counts[10_000]
    assert terms[100] == terms[10_000]
    print("[criterion 5] PASS")


def test_c06_runtime_scaling():
    """Criterion 6: log-log slope of identification wall-clock vs |E| in
    [0.7, 1.3] over n in {1e2, 1e3, 1e4}; the per-gradient-iteration slope
    must also stay at most linear ([0.8, 1.2])."""
    sizes = (100, 1000, 10_000)
    total, per_iter, edges = {}, {}, {}
    for n in sizes:
        g = ni.generate("ba", n=n, seed=0, m=3)
        params = ni.default_params("kuramoto")
        x0 = ni.initial_state(params, g.n, seed=1)
        traj = ni.simulate(params, g, x0, dt=0.01, n_steps=1000)
        lib = ni.build_library(ni.LibrarySpec(), state_dim=1)
        tic = time.perf_counter()
        sup = ni.discover_support(traj, g, lib, ni.SupportConfig(seed=2))
        cfg = ni.FitConfig(
            horizon=100, batch=8, seed=3, integrator="euler",
            max_iters=12, tol=0.0, step_tol=0.0, patience=10**9,
        )
        res = ni.fit(traj, g, sup.mask, lib, cfg, init=sup.init_coefficients)
        total[n] = time.perf_counter() - tic
        edges[n] = g.num_edges
        act_s, act_p = _active_indices(sup.mask)
        reps = []
        for _ in range(3):
            tic = time.perf_counter()
            _segment_stats(
                lib, g, traj.values, traj.times, np.arange(8) * 100, 100, 0.01, 1,
                res.model.w_self, res.model.w_pair, act_s, act_p, True, 1e6,
            )
            reps.append(time.perf_counter() - tic)
        per_iter[n] = float(np.median(reps))
        print(f"  n={n}: |E|={edges[n]} identification={total[n]:.2f}s per-iteration={per_iter[n]*1e3:.0f}ms",
              flush=True)
    lx = np.log([edges[n] for n in sizes])
    slope_total = float(np.polyfit(lx, np.log([total[n] for n in sizes]), 1)[0])
    slope_iter = float(np.polyfit(lx, np.log([per_iter[n] for n in sizes]), 1)[0])
    print(f"[criterion 6] total-identification slope={slope_total:.2f} (need 0.7..1.3), "
          f"per-iteration slope={slope_iter:.2f} (need 0.8..1.2)")
    assert 0.7 <= slope_total <= 1.3
    assert 0.8 <= slope_iter <= 1.2
    print("[criterion 6] PASS")


def test_c07_fhn_prediction_quality():
    """Criterion 7: FHN on WS n=1000 over 2000 steps, train on the first
    1600; segment predictions (length 100) on the test window must reach
    R^2 > 0.99 at 50 dB and > 0.95 at 30 dB, within 15 minutes."""
    tic = time.perf_counter()
    r2 = {}
    for snr in (50.0, 30.0):
        cfg = {
            "seed": 0,
            "graph": {"model": "ws", "n": 1000, "k": 6, "p": 0.1},
            "system": {"name": "fhn"},
            "simulation": {"dt": 0.01, "steps": 2000},
            "train_fraction": 0.8,
            "noise": {"snr_db": snr},
            "fit": {"horizon": 100, "batch": 4},
            "predict": {"segment_len": 100},
            "output_dir": f"/tmp/netident_accept_c7_{int(snr)}",
        }
        report = ni.run(cfg)
        r2[snr] = report["test"]["r2"]
        print(f"  SNR {snr:.0f} dB: test R^2 = {r2[snr]:.5f}", flush=True)
    wall = time.perf_counter() - tic
    print(f"[criterion 7] R^2: 50dB={r2[50.0]:.4f} (need >0.99), 30dB={r2[30.0]:.4f} (need >0.95); "
          f"runtime {wall:.0f}s (need <900)")
    assert r2[50.0] > 0.99
    assert r2[30.0] > 0.95
    assert wall < 900.0
    print("[criterion 7] PASS")


def test_c08_property_suite(tmp_path):
    """Criterion 8: fast property checks, all in one pass (< 1 min)."""
    t0 = time.perf_counter()
    # lasso vs OLS oracle at lambda = 0 (well-posed reduced design)
    g = ni.generate("ba", n=100, seed=0, m=3)
    params = ni.default_params("kuramoto")
    x0 = ni.initial_state(params, g.n, seed=1)
    traj = ni.estimate_derivatives(ni.simulate(params, g, x0, dt=0.01, n_steps=400))
    lib = ni.build_library(ni.LibrarySpec(diffs=False, hill=False), state_dim=1)
    X, Y = node_design_matrix(traj, g, lib, 7)
    fit0 = lasso_standardized(X, Y[:, 0], 0.0, fit_intercept=False, tol=1e-12, max_sweeps=400_000)
    scale = np.sqrt((X**2).sum(axis=0) / X.shape[0])
    Xs = X / scale
    w = np.linalg.solve(Xs.T @ Xs, Xs.T @ Y[:, 0]) / scale
    rel = float(np.max(np.abs(fit0.coef - w)) / max(np.abs(w).max(), 1.0))
    assert rel < 1e-6
    print(f"  lasso-vs-OLS at lambda=0: rel err {rel:.1e} (<1e-6)")

    # KKT residuals on an active lasso solution
    rng = np.random.default_rng(0)
    A = rng.standard_normal((300, 10)) + 0.3 * rng.standard_normal((300, 1))
    y = A @ (rng.uniform(0.5, 2, 10) * (rng.random(10) < 0.4)) + 0.05 * rng.standard_normal(300)
    An = A / np.sqrt((A**2).sum(axis=0) / len(A))
    lam = 0.05 * float(np.abs(An.T @ y).max())
    w_cd, _ = coordinate_descent(An, y, lam)
    viol = kkt_violation(An, y, w_cd, lam)
    assert viol <= 1e-6
    print(f"  lasso KKT residual: {viol:.1e} (<=1e-6)")

    # forward-sensitivity gradient vs central finite differences
    g8 = ni.generate("er", n=8, seed=3, p=0.4)
    p8 = ni.default_params("fhn")
    lib8 = ni.build_library(ni.LibrarySpec(), state_dim=2)
    truth = ni.true_coefficients(p8, lib8)
    traj8 = ni.simulate(p8, g8, ni.initial_state(p8, 8, seed=4), dt=0.02, n_steps=12)
    w_self = truth.w_self * 1.15
    w_pair = truth.w_pair * 0.9
    model8 = ni.ModelSpec(lib=lib8, mask=truth.mask, w_self=w_self, w_pair=w_pair)
    starts = np.array([0, 3])
    _, grad = ni.rollout_gradient(model8, g8, traj8, starts, 5)
    act_s, act_p = _active_indices(truth.mask)
    fd = np.zeros(len(grad))
    h = 1e-6
    for i in range(len(grad)):
        plus, minus = [], []
        for sgn in (h, -h):
            ws, wp = w_self.copy(), w_pair.copy()
            if i < len(act_s):
                ws[act_s[i][0], act_s[i][1]] += sgn
            else:
                wp[act_p[i - len(act_s)][0], act_p[i - len(act_s)][1]] += sgn
            m = ni.ModelSpec(lib=lib8, mask=truth.mask, w_self=ws, w_pair=wp)
            loss, _ = ni.rollout_gradient(m, g8, traj8, starts, 5)
            (plus if sgn > 0 else minus).append(loss)
        fd[i] = (plus[0] - minus[0]) / (2 * h)
    rel_g = float(np.max(np.abs(grad - fd)) / np.max(np.abs(fd)))
    assert rel_g < 1e-4
    print(f"  gradient vs finite differences: rel err {rel_g:.1e} (<1e-4)")

    # RK4 order-four convergence factor
    g1 = ni.Graph.from_edges(1, [])
    pd = ni.default_params("decay")
    errs = [
        abs(ni.simulate(pd, g1, np.ones((1, 1)), dt=dt, n_steps=int(round(1 / dt)) + 1).values[-1, 0, 0]
            - np.exp(-1.0))
        for dt in (0.1, 0.05)
    ]
    factor = errs[0] / errs[1]
    assert 12.0 <= factor <= 20.0
    print(f"  RK4 convergence factor: {factor:.1f} (in [12, 20])")

    # sMAPE symmetry and the spurious-term half case
    lib1 = ni.build_library(ni.LibrarySpec(), state_dim=1)

    def tiny_model(vals):
        ws = np.zeros((lib1.n_self, 1))
        for name, v in vals.items():
            ws[lib1.self_names.index(name)] = v
        mask = ni.SupportMask(self_mask=(ws != 0).astype(np.uint8),
                              pair_mask=np.zeros((lib1.n_pair, 1), dtype=np.uint8))
        return ni.ModelSpec(lib=lib1, mask=mask, w_self=ws, w_pair=np.zeros((lib1.n_pair, 1)))

    a = tiny_model({"x": 1.0, "x^2": 0.5})
    b = tiny_model({"x": 1.0})
    assert ni.smape(a, b) == pytest.approx(0.5)
    assert ni.smape(a, b) == pytest.approx(ni.smape(b, a))
    print("  sMAPE symmetry and spurious-term 0.5 case hold")

    # mask hard constraint after fit
    g30 = ni.generate("ba", n=30, seed=6, m=2)
    pk = ni.default_params("kuramoto")
    libk = ni.build_library(ni.LibrarySpec(), state_dim=1)
    tk = ni.true_coefficients(pk, libk)
    trajk = ni.simulate(pk, g30, ni.initial_state(pk, 30, seed=7), dt=0.01, n_steps=100)
    fitted = ni.fit(trajk, g30, tk.mask, libk, ni.FitConfig(horizon=20, batch=4, max_iters=10, seed=1)).model
    assert np.all(fitted.w_self[tk.mask.self_mask == 0] == 0.0)
    assert np.all(fitted.w_pair[tk.mask.pair_mask == 0] == 0.0)
    print("  mask constraint after fit: masked-out entries exactly zero")

    # full-run determinism across thread counts
    cfg = {
        "seed": 0,
        "graph": {"model": "ba", "n": 60, "m": 2},
        "system": {"name": "kuramoto"},
        "simulation": {"dt": 0.01, "steps": 240},
        "support": {"k_sample": 30, "m_min": 4},
        "fit": {"horizon": 40, "batch": 4, "max_iters": 30},
        "predict": {"segment_len": 60},
        "output_dir": "unused",
    }
    ni.run(cfg, out_dir=tmp_path / "t1", threads=1)
    ni.run(cfg, out_dir=tmp_path / "t4", threads=4)
    for name in ("model.json", "report.json"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()
    print("  full-run outputs byte-identical for 1 and 4 threads")

    wall = time.perf_counter() - t0
    print(f"[criterion 8] PASS ({wall:.0f}s, need <60)")
    assert wall < 60.0


def test_c09_time_augmented_basis():
    """Criterion 9: periodically driven diffusion on n=500; the dominant
    period is recovered within one frequency bin, the pipeline with
    auto-discovered time terms reaches sMAPE < 0.05, and two-segment
    extrapolation stays under 5% MAPE."""
    g = ni.generate("ba", n=500, seed=0, m=2)
    params = ni.default_params("forced_diffusion")
    x0 = ni.initial_state(params, g.n, seed=1)
    traj = ni.simulate(params, g, x0, dt=0.01, n_steps=1400)
    train = ni.truncate(traj, 1000)
    periods = ni.dominant_periods(train, 1)
    bin_width = 1.0 / (train.n_steps * train.dt)
    assert len(periods) == 1
    assert abs(1.0 / periods[0] - 1.0 / 2.0) <= bin_width
    print(f"  dominant period: {periods[0]:.6g} (true 2.0, bin {bin_width:.3g})")

    cfg = {
        "seed": 0,
        "graph": {"model": "ba", "n": 500, "m": 2},
        "system": {"name": "forced_diffusion"},
        "simulation": {"dt": 0.01, "steps": 1400},
        "train_fraction": 5.0 / 7.0,
        "library": {"auto_periods": 1},
        "fit": {"horizon": 100, "batch": 4},
        "predict": {"segment_len": 200},
        "output_dir": "/tmp/netident_accept_c9",
    }
    report = ni.run(cfg)
    mape_test = report["test"]["mape_percent"]
    print(f"[criterion 9] discovered={report['discovered_periods']}, "
          f"sMAPE={report['smape']:.2e} (need <0.05), "
          f"2-segment extrapolation MAPE={mape_test:.3f}% (need <5%)")
    assert report["discovered_periods"] == periods
    assert report["smape"] < 0.05
    assert mape_test < 5.0
    print("[criterion 9] PASS")
