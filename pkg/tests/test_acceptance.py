"""Acceptance suite: one PASS/FAIL line per criterion, tolerances as pinned below.

Run alone with ``pytest tests/test_acceptance.py -v -s`` (the lines are also
printed without ``-s``).  The slow criteria (golfing, GMM, phase transition)
take a few minutes each on one core.
"""
import csv
import io
import json
import math
import time

import numpy as np
import pytest

from fd_oracle import RTOL, derivative_errors, feature_derivative_errors
from lasso_oracle import grid_lasso
from offgrid.blasso import BlassoProblem, SolverConfig, solve
from offgrid.certificates import (build_pre_certificate, golfing_certificate, golfing_config,
                                  interpolation_errors, make_system, predicted_sample_counts)
from offgrid.domain import DiscreteMeasure, Domain, random_separated_positions
from offgrid.experiments import run
from offgrid.features import (MeasurementSet, draw_features, empirical_kernel, forward,
                              make_feature_map)
from offgrid.kernels import KernelModel, acceptable_report, empirical_table2_scan


@pytest.fixture
def report(capsys):
    t0 = time.perf_counter()

    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail} "
                  f"[{time.perf_counter() - t0:.1f}s]")
        assert ok, detail
    return emit


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def gaussian_delta(sigma, d, s):
    return acceptable_report(KernelModel("gaussian", Domain.box(d, 1.0), sigma=sigma), s).Delta


# ---------------------------------------------------------------------------------------- 1

REFERENCE = {"delta": 3.2443e-4, "delta_prime": 6.1453e-6, "eps_eta": 0.1712, "lambda_eta": 0.0800}


def test_criterion_01_gaussian_constants(report):
    # delta, delta' agree to 1e-4 relative; eps_eta and lambda_eta sigma^2 (given
    # with four decimals) to 1e-4 absolute; every bound on the reference side
    errs, ok = {}, True
    for sigma in (0.5, 1.0, 2.0):
        K = KernelModel("gaussian", Domain.box(1, 10 * sigma), sigma=sigma)
        u = acceptable_report(K, 4).uniform
        assert (u["A"], u["B"], u["C"]) == (5.0, 2.0, 12.0)
        got = {"delta": u["delta"], "delta_prime": u["delta_prime"], "eps_eta": u["eps_eta"],
               "lambda_eta": u["lambda_eta"] * sigma ** 2}
        for k, v in got.items():
            p = REFERENCE[k]
            e = abs(v - p) / p if k.startswith("delta") else abs(v - p)
            errs[k] = max(errs.get(k, 0.0), e)
        ok &= got["delta"] <= REFERENCE["delta"] and got["delta_prime"] <= REFERENCE["delta_prime"]
        ok &= got["eps_eta"] >= REFERENCE["eps_eta"] and got["lambda_eta"] >= REFERENCE["lambda_eta"]
    ok &= max(errs.values()) <= 1e-4
    report(1, ok, "max deviation from reference values " +
           ", ".join(f"{k}={v:.2e}" for k, v in errs.items()))


# ---------------------------------------------------------------------------------------- 2

def test_criterion_02_closed_form_vs_scan(report):
    # suprema rows: scan in [closed - 2%, closed]; infimum row lambda1: [closed, closed + 2%]
    bad = []
    worst = {}
    for sigma in (0.5, 1.0, 2.0):
        for d in (1, 2, 3):
            K = KernelModel("gaussian", Domain.box(d, 10 * sigma), sigma=sigma)
            rep = acceptable_report(K, 4)
            est = empirical_table2_scan(K, 4, rep.eps_near, rep.Delta, n_probe=2000)
            for row in ("c0", "v", "b2", "lambda1"):
                closed, scan = rep.table2[row], est.rows[row]
                r = scan / closed
                worst[row] = r if row not in worst or abs(r - 1) > abs(worst[row] - 1) else worst[row]
                lo, hi = (1.0, 1.02) if row == "lambda1" else (0.98, 1.0)
                if not lo - 1e-12 <= r <= hi + 1e-12:
                    bad.append(f"{row}(sigma={sigma},d={d})={r:.4f}")
    detail = "scan/closed " + ", ".join(f"{k}={v:.4f}" for k, v in worst.items())
    if bad:
        detail += f"; {len(bad)} out of band, e.g. {bad[0]}"
    report(2, not bad, detail)


# ---------------------------------------------------------------------------------------- 3

def test_criterion_03_derivative_oracles(report):
    errs = {}
    for name, K in [("gaussian_d1", KernelModel("gaussian", Domain.box(1, 2.0), sigma=1.0)),
                    ("gaussian_d2", KernelModel("gaussian", Domain.box(2, 1.0), sigma=0.5)),
                    ("fejer_d1", KernelModel("fejer", Domain.torus(1), f_c=16)),
                    ("fejer_d2", KernelModel("fejer", Domain.torus(2), f_c=8))]:
        errs["kernel_" + name] = max(derivative_errors(K, np.random.default_rng(11), n=100).values())
    for fam, par, dom in [("fejer_fourier", {"f_c": 16}, Domain.torus(2)),
                          ("weighted_gaussian_fourier", {"sigma": 1.0}, Domain.box(2, 3.0)),
                          ("gmm_characteristic", {"sigma_C": 1.0}, Domain.box(2, 3.0))]:
        fm = make_feature_map(fam, par, dom)
        errs["feature_" + fam] = max(feature_derivative_errors(fm, n=100, seed=3).values())
    worst = max(errs, key=errs.get)
    report(3, errs[worst] <= RTOL, f"worst relative FD error {errs[worst]:.2e} ({worst}), "
                                   f"tolerance {RTOL:.0e}")


# ---------------------------------------------------------------------------------------- 4

def random_config(i):
    """Config i: Gaussian family for even i, Fejer for odd i; d and s drawn per config."""
    rng = np.random.default_rng([i, 4])
    d = int(rng.integers(1, 3))
    s = int(rng.integers(1, 6))
    if i % 2 == 0:
        sigma = float(rng.uniform(0.5, 1.0))
        Delta = gaussian_delta(sigma, d, s)
        fm = make_feature_map("weighted_gaussian_fourier", {"sigma": sigma},
                              Domain.box(d, Delta * (s if d == 1 else 2)))
        sep = Delta
    else:
        fm = make_feature_map("fejer_fourier", {"f_c": 16 if d == 1 else 8}, Domain.torus(d))
        sep = 0.1 if d == 1 else 0.2
    K = fm.limit_kernel()
    x = random_separated_positions(fm.domain, s, sep, rng)
    return fm, K, make_system(x, rng.choice([-1.0, 1.0], size=s), fm.domain, K.v_diag), rng


def test_criterion_04_interpolation_identities(report):
    worst_v, worst_g, n_cert = 0.0, 0.0, 0
    for i in range(50):
        fm, K, sysm, rng = random_config(i)
        s, d = sysm.s, fm.d
        certs = [build_pre_certificate(sysm, K),
                 build_pre_certificate(sysm, draw_features(fm, 100 * s * (d + 1), i))]
        if fm.family == "weighted_gaussian_fourier":
            # grids coarsened: only the corrected certificate's interpolation is under test here
            sig = fm.params["sigma"]
            rep = acceptable_report(K, s)
            gc = golfing_config(rep, fm.lipschitz, s, 600, spacing_far=0.5 * sig,
                                spacing_near=0.1 * sig)
            cert, _ = golfing_certificate(draw_features(fm, 600, i), sysm, gc, K, rng)
            certs.append(cert)
        for c in certs:
            ev, eg = interpolation_errors(c, sysm)
            worst_v, worst_g = max(worst_v, ev), max(worst_g, eg)
            n_cert += 1
    ok = worst_v <= 1e-8 and worst_g <= 1e-6
    report(4, ok, f"{n_cert} certificates over 50 configs; max |eta(x_i)-sign| = {worst_v:.1e}, "
                  f"max |grad eta(x_i)| = {worst_g:.1e}")


# ---------------------------------------------------------------------------------------- 5

FOUR_SPIKES = {
    "experiment": "certificate-sweep",
    "family": "fejer_fourier",
    "params": {"f_c": 16},
    "domain": {"kind": "torus", "d": 1},
    "measure": {"atoms": [{"x": [0.2], "a": 1}, {"x": [0.35], "a": 1},
                          {"x": [0.5], "a": -1}, {"x": [0.65], "a": 1}]},
    "m": [10, 20, 30],
    "seeds": list(range(20)),
}


def test_criterion_05_four_spike_degeneracy_rates(report, tmp_path):
    run(json.dumps(FOUR_SPIKES), tmp_path)
    summ = json.loads((tmp_path / "summary.json").read_text())
    deg10 = summ["10"]["degenerate"]
    nondeg30 = summ["30"]["runs"] - summ["30"]["failures"] - summ["30"]["degenerate"]
    assert len(read_csv(tmp_path / "eta_m10.csv")) == 20 * 2048
    ok = deg10 >= 12 and nondeg30 >= 16
    report(5, ok, f"degenerate at m=10: {deg10}/20 (need >= 12); "
                  f"nondegenerate at m=30: {nondeg30}/20 (need >= 16)")


# ---------------------------------------------------------------------------------------- 6

def test_criterion_06_kernel_concentration(report):
    # prediction L0^2 sqrt(2 log(2 n_pairs / rho) / m) with rho = 0.05; the decay ratio
    # uses the seed-averaged sup
    fm = make_feature_map("weighted_gaussian_fourier", {"sigma": 1.0}, Domain.box(2, 3.0))
    K = fm.limit_kernel()
    rng = np.random.default_rng(6)
    x, xp = fm.domain.sample(50, rng), fm.domain.sample(50, rng)
    Kv = K.k(x - xp)
    L0 = fm.lipschitz.L0
    sups = {}
    for m in (10_000, 40_000):
        sups[m] = [float(np.max(np.abs(empirical_kernel(draw_features(fm, m, seed), x, xp) - Kv)))
                   for seed in range(10)]
    pred = L0 ** 2 * math.sqrt(2 * math.log(2 * 50 / 0.05) / 10_000)
    ratio = np.mean(sups[10_000]) / np.mean(sups[40_000])
    ok = max(sups[10_000]) <= 2 * pred and 1.5 <= ratio <= 3
    report(6, ok, f"max sup at m=1e4 {max(sups[10_000]):.4f} vs 2x prediction {2 * pred:.4f}; "
                  f"decay ratio {ratio:.2f} (need [1.5, 3])")


# ---------------------------------------------------------------------------------------- 7

def test_criterion_07_golfing(report, tmp_path):
    sigma = 0.3
    half = 0.75 * gaussian_delta(sigma, 1, 2)  # atoms at +-0.75 Delta: separation 1.5 Delta
    cfg = {"experiment": "golfing-demo", "family": "weighted_gaussian_fourier",
           "params": {"sigma": sigma}, "domain": {"kind": "box", "d": 1, "half_width": 3.0},
           "measure": {"atoms": [{"x": [-half], "a": 1}, {"x": [half], "a": -1}]},
           "m": 10_000, "seeds": list(range(10))}
    run(json.dumps(cfg), tmp_path)
    rows = read_csv(tmp_path / "summary.csv")
    assert all(r["error"] == "" for r in rows), [r["error"] for r in rows]
    succ = [r for r in rows if r["success"] == "True"]
    sound = all(r["post_conditions"] == "True" and r["nondegeneracy"] == "certified" for r in succ)
    post_all = sum(r["post_conditions"] == "True" for r in rows)
    accepted = [int(r["accepted"]) for r in rows]
    ok = len(succ) >= 8 and sound
    report(7, ok, f"successes {len(succ)}/10 (need >= 8, L={rows[0]['L']}); accepted blocks per "
                  f"seed {accepted}; post-conditions hold in {post_all}/10")


# ---------------------------------------------------------------------------------------- 8

def test_criterion_08_grid_oracle(report):
    fm = make_feature_map("weighted_gaussian_fourier", {"sigma": 0.3}, Domain.box(1, 3.0))
    grid = np.linspace(-3, 3, 1000).reshape(-1, 1)
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng([seed, 8])
        x = random_separated_positions(fm.domain, 3, 1.0, rng, margin=0.3)
        a = rng.choice([-1.0, 1.0], 3) * rng.uniform(0.5, 1.5, 3)
        dr = draw_features(fm, 200, seed)
        y = forward(dr, DiscreteMeasure(x, a, fm.domain))
        y = y + 0.01 * (rng.standard_normal(200) + 1j * rng.standard_normal(200)) / math.sqrt(2)
        _, obj = grid_lasso(dr, y, 0.01, grid)
        res = solve(BlassoProblem(MeasurementSet(y, dr), 0.01),
                    SolverConfig(grid=grid, tau_gap=1e-9, max_iter=400, max_spikes=400))
        worst = max(worst, abs(res.objective - obj) / abs(obj))
    report(8, worst <= 1e-6, f"max relative objective gap to the sklearn oracle {worst:.1e} "
                             f"over 10 problems (need <= 1e-6)")


# ---------------------------------------------------------------------------------------- 9

def test_criterion_09_support_stability(report):
    fm = make_feature_map("weighted_gaussian_fourier", {"sigma": 0.3}, Domain.box(1, 3.0))
    good, errs = 0, []
    for seed in range(10):
        rng = np.random.default_rng([seed, 9])
        x = random_separated_positions(fm.domain, 3, 1.2, rng, margin=0.3)
        a = rng.choice([-1.0, 1.0], 3) * rng.uniform(0.5, 1.5, 3)
        mu = DiscreteMeasure(x, a, fm.domain)
        dr = draw_features(fm, 2000, seed)
        res = solve(BlassoProblem(MeasurementSet(forward(dr, mu), dr), 1e-3))
        if res.measure.s != 3:
            errs.append(math.inf)
            continue
        e = float(np.max(np.abs(np.sort(res.measure.positions[:, 0]) - np.sort(x[:, 0]))))
        errs.append(e)
        good += e <= 1e-2
    report(9, good >= 9, f"exact support within 1e-2 in {good}/10 seeds (need >= 9); "
                         f"max position error {max(errs):.1e}")


# ---------------------------------------------------------------------------------------- 10

def test_criterion_10_gmm_pipeline(report, tmp_path):
    cfg = {"experiment": "gmm-pipeline", "means": [[3.0, 0.0], [-3.0, 0.0]],
           "weights": [0.5, 0.5], "n": 100_000, "m": 1000, "sigma_C": 1.0, "rho": 0.05,
           "seeds": list(range(50))}
    run(json.dumps(cfg), tmp_path)
    rows = read_csv(tmp_path / "results.csv")
    assert all(r["error"] == "" for r in rows), [r["error"] for r in rows if r["error"]]
    rec = sum(float(r["max_mean_err"]) <= 0.1 and float(r["max_weight_err"]) <= 0.05
              and r["components"] == "2" for r in rows)
    noise_ok = sum(r["noise_ok"] == "True" for r in rows)
    ok = rec == 50 and noise_ok >= 45
    report(10, ok, f"recovery (2 components, means within 0.1, weights within 0.05) in {rec}/50; "
                   f"noise <= bound in {noise_ok}/50 (need >= 45); worst mean error "
                   f"{max(float(r['max_mean_err']) for r in rows):.3f}")


# ---------------------------------------------------------------------------------------- 11

PT = {
    "experiment": "phase-transition",
    "family": "weighted_gaussian_fourier",
    "params": {"sigma": 0.08},
    "domain": {"kind": "box", "d": 1, "half_width": 1.0},
    "s": [2, 4, 8],
    "m": [10, 15, 20, 30, 40, 60, 80, 120, 160, 240, 320, 480, 640],
    "separation": 0.2,
    "margin": 0.05,
    "seeds": list(range(20)),
}


def test_criterion_11_sample_complexity(report, tmp_path):
    # count ratios for s -> 2s: golfing within [2, 4] / slack..slack, eta_V around 4, where
    # slack = log(2sd)/log(sd) * log(2sd/rho)/log(sd/rho) is the polylog factor of the bound
    fm = make_feature_map("weighted_gaussian_fourier", {"sigma": 1.0}, Domain.box(2, 3.0))
    rep = acceptable_report(fm.limit_kernel(), 16)
    d, rho, ok, parts = 2, 0.05, True, []
    for s in (2, 4):
        slack = (math.log(2 * s * d) / math.log(s * d)) * (math.log(2 * s * d / rho)
                                                            / math.log(s * d / rho))
        g = (predicted_sample_counts(2 * s, d, rep, fm.lipschitz, rho, "golfing")
             / predicted_sample_counts(s, d, rep, fm.lipschitz, rho, "golfing"))
        e = (predicted_sample_counts(2 * s, d, rep, fm.lipschitz, rho, "etaV")
             / predicted_sample_counts(s, d, rep, fm.lipschitz, rho, "etaV"))
        ok &= 2 / slack <= g <= 2 * slack and 4 / slack <= e <= 4 * slack and g < e
        parts.append(f"s={s}->{2 * s}: golfing x{g:.2f}, etaV x{e:.2f} (slack {slack:.2f})")
    res = run(json.dumps(PT), tmp_path)
    mstar = res["m_star"]["heuristic"]
    seq = [mstar[str(s)] for s in PT["s"]]
    # None means the success level is never reached: treat as beyond the grid
    vals = [math.inf if v is None else v for v in seq]
    mono = all(b >= a for a, b in zip(vals, vals[1:])) and math.isfinite(vals[0])
    report(11, ok and mono, "; ".join(parts) + f"; m*(s) for s=2,4,8: {seq}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
