"""Acceptance criteria for the package, one printed PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -v`` (or execute this file directly).
All tolerances are pinned below. A criterion whose target cannot be met by
the method as specified is evaluated unchanged, reported as FAIL and marked
as an expected failure so the rest of the suite stays usable.
"""

from __future__ import annotations

import math
import re
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from pllident.cli import expected_row
from pllident.config import BUNDLED_ORDER, bundled_dir, bundled_regime, load_bundle
from pllident.core import count_spikes_per_burst, effective_params, simulate
from pllident.identify import (
    build_deltas_integrated,
    build_sort_map,
    f4_pointwise,
    fit_integrated,
    fit_legacy,
    reconstruct_f4,
    retained_fraction,
    solve_least_squares,
)
from pllident.preprocess import assemble_states
from pllident.shiftscan import ScanGrid, l_drop, scan

# -- pinned tolerances ---------------------------------------------------------
C1_REL = 0.01            # expected -beta0 and beta1*1e3 against published values
C1_RUNTIME = 1.0         # seconds
C2_BETA0_REL = 0.05
C2_BETA0_REL_1B = 0.02
C2_BETA1_REL = 0.15
C2_GAMMA_MIN = 0.06
C2_MIN_BURSTS = 50
C2_RUNTIME = 30.0
C3_SHIFTS = (-2.3, -1.0, 0.5)
C3_GRID_POINTS = 200
C3_MIN_DROP = 100.0
C3_RUNTIME = 120.0       # per case
C4_RMS_FRACTION = 0.05
C4_SPREAD = 1e-10
C5_MIN_RETAINED = 0.5
C5_REL = 0.05
C6_ORTHO = 1e-8
C6_RESCALE = 1e-6
C6_TRANSLATE = 1e-9
C6_HALVING = (12.0, 20.0)

DT = 1e-3
STRIDE = 10

# published expected columns: T_renorm, -beta0, beta1*1e3
PUBLISHED = {
    "1b": (5960, 0.31457, 1.363),
    "2c": (8390, 0.15853, 0.259),
    "3d": (13400, 0.09943, 0.311),
    "4": (13400, 0.13077, 0.467),
    "5e": (10000, 0.08807, 0.138),
    "6": (20057, 0.05609, 0.037),
    "C_f": (20057, 0.05609, 0.051),
}


VERDICTS: list[str] = []


@pytest.fixture
def report(capsys):
    """Print one verdict line past pytest's capture and keep it for the summary."""
    def emit(label: str, ok: bool, detail: str) -> None:
        line = f"[acceptance {label}] {'PASS' if ok else 'FAIL'}: {detail}"
        VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
    return emit


def run_regime(name: str, duration: float):
    dp = bundled_regime(name).params()
    n_steps = int(round(duration / DT))
    return dp, simulate(dp, dt=DT, n_steps=n_steps, stride=STRIDE)


def run_with_bursts(name: str, min_bursts: int):
    """Simulate until the kept record holds ``min_bursts`` bursts."""
    duration = 10000.0
    while True:
        dp, traj = run_regime(name, duration)
        n = len(count_spikes_per_burst(traj.y))
        if n >= min_bursts:
            return dp, traj, n
        duration *= max(1.25, 1.2 * min_bursts / max(n, 1))


_CLEAN = {}


def clean_1b():
    if "1b" not in _CLEAN:
        _CLEAN["1b"] = run_regime("1b", 30000.0)
    return _CLEAN["1b"]


def test_criterion_1_expected_parameters(report):
    start = time.perf_counter()
    rows = {cfg.name: expected_row(cfg) for cfg in load_bundle()}
    elapsed = time.perf_counter() - start
    problems = []
    for name, (t_renorm, neg_b0, b1e3) in PUBLISHED.items():
        r = rows[name]
        if round(r["t_renorm"]) != t_renorm:
            problems.append(f"{name} T_renorm {r['t_renorm']:.2f}")
        if abs(r["neg_beta0"] - neg_b0) > C1_REL * neg_b0:
            problems.append(f"{name} -beta0 {r['neg_beta0']:.5f}")
        if abs(r["beta1_e3"] - b1e3) > C1_REL * b1e3:
            problems.append(f"{name} beta1e3 {r['beta1_e3']:.4f}")
    worst = max(
        max(abs(rows[n]["neg_beta0"] / v[1] - 1), abs(rows[n]["beta1_e3"] / v[2] - 1))
        for n, v in PUBLISHED.items()
    )
    ok = not problems and elapsed < C1_RUNTIME and set(rows) == set(BUNDLED_ORDER)
    report("1", ok, f"7 regimes, worst relative deviation {worst:.4f} (limit {C1_REL}), "
                    f"{elapsed * 1e3:.1f} ms; {problems or 'T_renorm exact'}")
    assert ok, problems


def test_criterion_2_identification_round_trip(report):
    start = time.perf_counter()
    lines, failures = [], []
    for name in BUNDLED_ORDER:
        dp, traj, bursts = run_with_bursts(name, C2_MIN_BURSTS)
        fit = fit_integrated(assemble_states(traj.y), 0.0, 1)
        exp = effective_params(dp)
        e0 = abs(fit.beta0 - exp.alpha1) / abs(exp.alpha1)
        lim0 = C2_BETA0_REL_1B if name == "1b" else C2_BETA0_REL
        e1 = abs(fit.beta1 - exp.alpha0) / abs(exp.alpha0)
        check1 = abs(dp.gamma) >= C2_GAMMA_MIN
        lines.append(f"{name}: bursts={bursts} err_b0={e0:.2e}" + (f" err_b1={e1:.2e}" if check1 else ""))
        if bursts < C2_MIN_BURSTS or e0 > lim0 or (check1 and e1 > C2_BETA1_REL) or not fit.valid:
            failures.append(name)
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < C2_RUNTIME
    report("2", ok, f"{'; '.join(lines)}; {elapsed:.1f} s (limit {C2_RUNTIME:.0f} s)")
    assert ok, (failures, elapsed)


def _shift_case(b):
    if "1b-short" not in _CLEAN:
        _CLEAN["1b-short"] = run_regime("1b", 12500.0)  # 10000 time units kept
    _, traj = _CLEAN["1b-short"]
    start = time.perf_counter()
    eta = traj.y.replace_values(traj.y.values - b)  # y = eta + b
    res = scan(eta)  # default grid: 200 points around -mean(eta)
    elapsed = time.perf_counter() - start
    return res, elapsed


_SHIFT = {}


def shift_results():
    if not _SHIFT:
        for b in C3_SHIFTS:
            _SHIFT[b] = _shift_case(b)
    return _SHIFT


def test_criterion_3a_l_drop(report):
    results = shift_results()
    parts, ok = [], True
    for b, (res, elapsed) in results.items():
        drop = l_drop(res)
        good = (res.slope_index is not None and drop is not None and drop >= C3_MIN_DROP
                and elapsed < C3_RUNTIME and len(res) == C3_GRID_POINTS)
        ok &= good
        parts.append(f"b={b:+.1f}: drop {drop:.3g}, {elapsed:.1f} s")
    report("3a", ok, "L falls at the slope by >= 100x; " + "; ".join(parts))
    assert ok


@pytest.mark.xfail(strict=True, reason="the |beta1| minimum is biased about 0.019 below the true shift "
                                       "(dropped zero-order Taylor term), about 5 default grid steps")
def test_criterion_3b_shift_recovery(report):
    results = shift_results()
    parts, ok = [], True
    for b, (res, _) in results.items():
        if res.chosen_b is None:
            ok = False
            parts.append(f"b={b:+.1f}: no estimate")
            continue
        miss = (res.chosen_b - b) / res.step
        ok &= abs(res.chosen_b - b) <= res.step
        parts.append(f"b={b:+.1f}: chosen {res.chosen_b:+.4f} ({miss:+.2f} steps of {res.step:.4f})")
    report("3b", ok, "chosen shift within one grid step; " + "; ".join(parts))
    assert ok


def test_criterion_4_function_shape(report):
    dp, traj = clean_1b()
    ens = assemble_states(traj.y)
    fit = fit_integrated(ens, 0.0)
    point = reconstruct_f4(ens, 0.0, fit, "pointwise")
    cumul = reconstruct_f4(ens, 0.0, fit, "cumulative")
    offset = np.mean(traj.phi.values[1:-1] - ens.psi)
    phi = point.psi_sorted + offset
    ideal = (phi + dp.eps1 * np.sin(phi)) / (dp.eps1 * dp.eps2)
    diff = point.f4_values - ideal
    rms = float(np.sqrt(np.mean((diff - diff.mean()) ** 2)))
    frac = rms / float(np.ptp(ideal))
    spread = float(np.ptp(point.f4_values - cumul.f4_values))
    ok = frac < C4_RMS_FRACTION and spread < C4_SPREAD
    report("4", ok, f"RMS/range {frac:.2e} (limit {C4_RMS_FRACTION}), pointwise-cumulative spread "
                    f"{spread:.2e} (limit {C4_SPREAD:g})")
    assert ok


def test_criterion_5_method_consistency(report):
    parts, compared, ok = [], [], True
    for name in BUNDLED_ORDER:
        dp, traj = run_regime(name, 20000.0)
        ens = assemble_states(traj.y, 0.0, need_second_derivative=True)
        kept = retained_fraction(ens)
        if kept < C5_MIN_RETAINED:
            parts.append(f"{name}: retained {kept:.2f}, skipped")
            continue
        a1 = fit_legacy(ens).beta[1]
        b0 = fit_integrated(ens, 0.0).beta0
        rel = abs(a1 - b0) / abs(a1)
        compared.append(name)
        ok &= rel < C5_REL
        parts.append(f"{name}: retained {kept:.2f}, |a1-b0|/|a1| {rel:.2e}")
    ok &= bool(compared)
    report("5", ok, "; ".join(parts))
    assert ok


def _halving_ratio():
    from scipy.integrate import solve_ivp

    from pllident.core import rhs

    dp = bundled_regime("1b").params()
    init, window = (0.0, 0.1, 0.0), 20.0
    errs = []
    for h in (0.05, 0.025):
        n = int(round(window / h)) + 1
        traj = simulate(dp, init, dt=h, n_steps=n, transient=0, stride=int(round(0.05 / h)))
        sol = solve_ivp(lambda _, s: rhs(s, dp), (0, traj.y.times[-1]), init, method="DOP853",
                        t_eval=traj.y.times, rtol=1e-12, atol=1e-13)
        errs.append(np.max(np.abs(traj.y.values - sol.y[1])))
    return errs[0] / errs[1]


def test_criterion_6_invariants(report):
    rng = np.random.default_rng(7)
    checks = {}

    keys = rng.normal(size=500)
    sm = build_sort_map(keys)
    checks["sort map bijection"] = (np.array_equal(sm.q_inv[sm.q], np.arange(500))
                                    and np.all(np.diff(keys[sm.q_inv]) >= 0))

    dp, traj = clean_1b()
    ens = assemble_states(traj.y)
    beta = np.array([-0.3, 1e-3])
    sm = build_sort_map(ens.candidate_phase(0.02))
    system = build_deltas_integrated(ens, 0.02, sm, 1)
    f = f4_pointwise(ens, beta)
    tele = abs(np.sum(system.residuals(beta)) - (f[sm.q_inv[-1]] - f[sm.q_inv[0]]))
    checks["telescoping"] = tele < 1e-8 * np.abs(f).max()

    fit = solve_least_squares(system)
    res = system.residuals(fit.beta)
    ortho = max(abs(res @ c) / (np.linalg.norm(res) * np.linalg.norm(c)) for c in system.rows.T)
    checks["orthogonality"] = ortho < C6_ORTHO

    a = fit_integrated(ens, 0.0)
    b = fit_integrated(assemble_states(traj.y, 0.0, 2.0), 0.0)
    rescale = max(abs(b.beta0 * 2 / a.beta0 - 1), abs(b.beta1 * 4 / a.beta1 - 1))
    checks["time rescaling"] = rescale < C6_RESCALE

    short = traj.y.replace_values(traj.y.values[:400000])
    grid = ScanGrid(-1.0, 1.0, 2.0 ** -5)
    c = 0.75
    s1 = scan(short, grid)
    s2 = scan(short.replace_values(short.values + c), ScanGrid(grid.b_min - c, grid.b_max - c, grid.step))
    trans = max(float(np.max(np.abs(getattr(s2, k) / getattr(s1, k) - 1)))
                for k in ("l_values", "beta1_abs", "beta0"))
    checks["scan translation"] = trans < C6_TRANSLATE

    ratio = _halving_ratio()
    checks["step halving"] = C6_HALVING[0] <= ratio <= C6_HALVING[1]

    ok = all(checks.values())
    report("6", ok, f"telescoping {tele:.1e}, orthogonality {ortho:.1e}, rescaling {rescale:.1e}, "
                    f"translation {trans:.1e}, halving ratio {ratio:.2f}; "
                    f"failed: {[k for k, v in checks.items() if not v] or 'none'}")
    assert ok


def test_criterion_7_reported_estimates_are_documentation_only(report):
    fixture = bundled_dir() / "reported_estimates.csv"
    text = fixture.read_text()
    present = "4,0.6197,-2.165,0.06479,0.697" in text
    src = Path(__file__).resolve().parents[1] / "src" / "pllident"
    users = [p.name for p in src.rglob("*.py") if "reported_estimates" in p.read_text()]
    ok = present and not users
    report("7", ok, "published estimated columns come from undistributed laboratory recordings and "
                    "cannot be reproduced; shipped as a documentation fixture read by no code "
                    f"(readers: {users or 'none'})")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-p", "no:cacheprovider"]))
