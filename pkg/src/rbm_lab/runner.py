"""Command implementations behind the CLI; each returns a RunReport."""
from __future__ import annotations

import itertools
import math

import numpy as np

from . import grassmann as gm
from . import identities as ids
from . import supermatrix as smx
from .config import ExperimentConfig
from .covariance import (check_decay_bound, covariance, covariance_invariants,
                         ds_derivative_check, schur_mass_check)
from .ensemble import (CSV_COLUMNS, err_decrease_significant, dos_error_scan,
                       lorentzian_dos, resolvent_trace, sample_H)
from .lattice import BlockPartition, TorusLattice
from .reports import Check, RunReport, mc_check, value_check
from .saddle import saddle_data
from .susy import (brascamp_lieb_check, deformed_expectation, det_bound_suite,
                   direct_expectation, dual_expectation, measure_bound_suite, measure_scaling,
                   region_report, remainder_det_bound, richardson)


def _seeds(seed: int, n: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(int(seed)).spawn(n)


# ------------------------------------------------------------------ dos-scan

def run_dos_scan(cfg: ExperimentConfig, workers=1) -> RunReport:
    p = cfg.params
    s_scan, s_id = _seeds(cfg.seed, 2)
    samples = p["samples"] if len(p["samples"]) > 1 else p["samples"][0]
    rows, summary = dos_error_scan(p["W"], p["L"], p["E"], p["eps"], samples,
                                   int(s_scan.generate_state(1)[0]), p["method"], p["probes"],
                                   workers, p["eta"])
    rep = RunReport("dos-scan", cfg.echo())
    rep.columns = CSV_COLUMNS
    rep.table = [r.as_tuple() for r in rows]
    rep.data = {"rows": [dict(zip(CSV_COLUMNS, r.as_tuple())) | {"in_I": r.in_I} for r in rows],
                "summary": summary}
    Wmin, Wmax = min(p["W"]), max(p["W"])
    for e in p["E"]:
        sub = [r for r in rows if r.E == e]
        lo = min(sub, key=lambda r: r.W)
        hi = max(sub, key=lambda r: r.W)
        if Wmax > Wmin:
            rep.add(Check(f"err_decrease[E={e}]", {"E": e, "W_small": lo.W, "W_large": hi.W},
                          err_decrease_significant(lo, hi), lo.abs_err, hi.abs_err,
                          math.hypot(lo.rho_se, hi.rho_se),
                          (lo.abs_err - hi.abs_err) / max(math.hypot(lo.rho_se, hi.rho_se), 1e-300)))
        rep.add(value_check(f"tolerance[E={e}]", {"E": e, "W": hi.W, "L": hi.L},
                            hi.abs_err, p["tolerance"], hi.abs_err <= p["tolerance"]))
    if p["identity_samples"]:
        rng = np.random.default_rng(s_id)
        worst = 0.0
        used = []
        for W, L in zip(p["W"], p["L"]):
            if L > p["identity_max_L"]:
                continue
            J = covariance(TorusLattice(L, W), "J").dense()
            used.append([W, L])
            for _ in range(p["identity_samples"]):
                H = sample_H(J, rng)
                ev = np.linalg.eigvalsh(H)
                t_eig = resolvent_trace(H, p["E"], p["eps"], "eigen")
                t_inv = resolvent_trace(H, p["E"], p["eps"], "inverse")
                rho_l = lorentzian_dos(ev, p["E"], p["eps"])
                worst = max(worst, float(np.max(np.abs(t_eig - t_inv))),
                            float(np.max(np.abs(-t_eig.imag / np.pi - rho_l))))
        if used:
            rep.add(value_check("eigen_vs_resolvent", {"pairs": used, "per_pair": p["identity_samples"]},
                                worst, 1e-8, worst <= 1e-8))
    return rep


# ----------------------------------------------------------- verify-duality

def run_verify_duality(cfg: ExperimentConfig, workers=1) -> RunReport:
    p = cfg.params
    lat = TorusLattice(p["L"], p["W"])
    E, eps = p["E"], p["eps"]
    s = _seeds(cfg.seed, 6)
    base = {"L": p["L"], "W": p["W"], "E": E, "eps": eps}
    rep = RunReport("verify-duality", cfg.echo())

    dual = dual_expectation(lat, E, eps, "a0", p["samples"], s[0], workers=workers)
    direct = direct_expectation(lat, E, eps, p["direct_samples"], s[1], workers=workers)
    rep.add(mc_check("dual_vs_direct", base | {"samples": p["samples"],
                                               "direct_samples": p["direct_samples"]}, dual, direct))

    norm = dual_expectation(lat, E, eps, "one", p["samples"], s[2], workers=workers)
    rep.add(mc_check("normalization", base | {"samples": p["samples"]}, norm, 1.0))

    k = p["restrict_sites"]
    Jr = covariance(lat, "J").restrict(np.arange(k))
    norm_r = dual_expectation(lat, E, eps, "one", p["samples"], s[3], workers=workers, J=Jr)
    rep.add(mc_check("normalization_restricted", base | {"samples": p["samples"], "sites": k},
                     norm_r, 1.0))

    der = dual_expectation(lat, E, eps, "derivative", p["derivative_samples"], s[4], n=1,
                           workers=workers)
    fd = direct_expectation(lat, E, eps, p["direct_samples"], s[5], workers=workers,
                            fd_step=p["fd_step"])
    rep.add(mc_check("derivative_vs_fd", base | {"samples": p["derivative_samples"],
                                                 "fd_step": p["fd_step"]}, der, fd))
    rep.data = {c.check_id: c.to_json() for c in rep.checks}
    return rep


# -------------------------------------------------------- verify-deformation

def run_verify_deformation(cfg: ExperimentConfig, workers=1) -> RunReport:
    p = cfg.params
    lat = TorusLattice(p["L"], p["W"])
    E = p["E"]
    s = _seeds(cfg.seed, 5)
    base = {"L": p["L"], "W": p["W"], "E": E, "samples": p["samples"], "mixture": p["mixture"]}
    rep = RunReport("verify-deformation", cfg.echo())

    norm = deformed_expectation(lat, E, p["samples"], s[0], "one", workers, p["mixture"])
    rep.add(mc_check("deformed_normalization", base, norm, 1.0, ess=norm.ess))

    val = deformed_expectation(lat, E, p["samples"], s[1], "a0", workers, p["mixture"])
    directs = [direct_expectation(lat, E, e, p["direct_samples"], sq, workers)
               for e, sq in zip(p["eps_list"], s[2:5])]
    extrap = richardson(directs, p["eps_list"])
    rep.add(mc_check("deformed_vs_richardson",
                     base | {"eps_list": p["eps_list"], "direct_samples": p["direct_samples"]},
                     val, extrap, ess=val.ess, weight_var=val.weight_var,
                     direct=[d.to_json() for d in directs]))
    rep.add(value_check("weights_not_degenerate", base, val.ess, 0.01 * p["samples"],
                        not (val.flagged or norm.flagged)))
    rep.data = {c.check_id: c.to_json() for c in rep.checks}
    return rep


# --------------------------------------------------------- covariance-report

def run_covariance_report(cfg: ExperimentConfig, workers=1) -> RunReport:
    p = cfg.params
    rep = RunReport("covariance-report", cfg.echo())
    rng = np.random.default_rng(_seeds(cfg.seed, 1)[0])
    E = p["E"]
    lat = TorusLattice(p["L"], p["W"])
    cov = covariance(lat, p["kind"], E)
    d = check_decay_bound(cov)
    base = {"L": p["L"], "W": p["W"], "E": E, "kind": p["kind"]}
    rep.add(value_check("decay_regime", base, d.valid, True, d.valid))
    rep.add(value_check("entries_positive", base, d.positive, True, d.positive))
    rep.add(value_check("tail_rate", base, d.fitted_rate, p["rate_fraction"] * d.bound_rate,
                        d.fitted_rate >= p["rate_fraction"] * d.bound_rate))
    K1 = d.diag_lower_fit["K1"]
    rep.add(value_check("diag_log_growth", base, K1, 0.0, K1 > 0, K2=d.diag_lower_fit["K2"]))

    inv = [covariance_invariants(TorusLattice(L, W), e)
           for L, W, e in itertools.product(p["grid_L"], p["grid_W"], p["grid_E"])]
    bad = [r for r in inv if not r["pass"]]
    worst = max(max(r["J_rowsum_err"], r["C_rowsum_err"], r.get("dense_vs_spectral_err", 0))
                for r in inv)
    rep.add(value_check("invariants_grid", {"L": p["grid_L"], "W": p["grid_W"], "E": p["grid_E"]},
                        worst, 1e-10, not bad, failures=bad))

    slat = TorusLattice(p["schur_L"], p["schur_W"])
    B = covariance(slat, "B", E)
    mr2 = saddle_data(E).mr2
    lam = []
    for _ in range(p["schur_subsets"]):
        k = int(rng.integers(1, slat.n_sites + 1))
        Y = np.sort(rng.choice(slat.n_sites, size=k, replace=False))
        lam.append(schur_mass_check(B, Y))
    rep.add(value_check("schur_mass", {"L": p["schur_L"], "W": p["schur_W"], "E": E,
                                       "subsets": p["schur_subsets"]},
                        min(lam), mr2 - 1e-9, min(lam) >= mr2 - 1e-9))

    ilat = TorusLattice(p["interp_L"], p["interp_W"])
    C = covariance(ilat, "C", E)
    errs = {}
    for blocks, width in ((2, p["interp_L"] // 2), (3, -(-p["interp_L"] // 3))):
        part = BlockPartition.strips(ilat, width)
        r = part.n_blocks - 1
        s = np.full(r, 0.5) if blocks == 2 else rng.uniform(0.1, 0.9, r)
        errs[blocks] = max(ds_derivative_check(C, part, q, s) for q in range(1, r + 1))
    worst = max(errs.values())
    rep.add(value_check("interpolation_derivative", {"L": p["interp_L"], "W": p["interp_W"],
                                                     "E": E, "blocks": [2, 3]},
                        worst, 1e-6, worst <= 1e-6, per_partition=errs))
    rep.data = {"decay": d.to_json(), "decay_extra": {"valid": d.valid, "positive": d.positive,
                                                      "K_log": d.K_log, "K_tail": d.K_tail,
                                                      "tail_profile": d.tail_profile},
                "invariants": inv, "schur_min": min(lam), "interp_errors": errs}
    return rep


# -------------------------------------------------------- grassmann-selftest

SELFTEST_COLUMNS = ("identity", "n", "trials", "max_rel_err", "pass")


def _row(rep, identity, n, trials, err, ok, **extra):
    cid = f"{identity}[n={n}]" if n is not None else identity
    rep.add(Check(cid, {"n": n, "trials": trials}, ok, err, None, None, extra.get("sigma"), extra))
    rep.table.append((identity, n, trials, err, bool(ok)))


def run_grassmann_selftest(cfg: ExperimentConfig, workers=1) -> RunReport:
    p = cfg.params
    s = _seeds(cfg.seed, 4)
    rng = np.random.default_rng(s[0])
    rep = RunReport("grassmann-selftest", cfg.echo())
    rep.table, rep.columns = [], SELFTEST_COLUMNS
    G = gm.GrassmannElement

    # algebra axioms
    g = 6
    err = 0.0
    for _ in range(p["trials"]):
        x, y, z = (G.random(g, rng) for _ in range(3))
        e = G.random(g, rng, "even")
        c = complex(rng.standard_normal(), rng.standard_normal())
        err = max(err, ((x * y) * z - x * (y * z)).max_abs(),
                  (x * (y + z * c) - (x * y + (x * z) * c)).max_abs(),
                  (e * x - x * e).max_abs())
    for i in range(g):
        ai = G.generator(g, i)
        err = max(err, (ai * ai).max_abs())
        for j in range(g):
            aj = G.generator(g, j)
            err = max(err, (ai * aj + aj * ai).max_abs())
    _row(rep, "algebra_axioms", g, p["trials"], err, err <= 1e-12)

    for n in range(1, p["n_max"] + 1):
        err = max(gm.fermionic_gaussian_check(rng.standard_normal((n, n))
                                              + 1j * rng.standard_normal((n, n)))[2]
                  for _ in range(p["trials"]))
        _row(rep, "fermionic_gaussian", n, p["trials"], err, err <= 1e-10)

    for n in range(1, p["minor_n_max"] + 1):
        M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        err, count = 0.0, 0
        for I, J in gm.all_index_pairs(n):
            val, sign, det = gm.minor_formula_check(M, I, J)
            ref = sign * det * (2 * math.pi) ** -n
            err = max(err, abs(val - ref) / max(abs(ref), 1.0 if sign == 0 else 1e-300))
            count += 1
        _row(rep, "minor_formula", n, count, err, err <= 1e-10)

    m_err = i_err = s_err = 0.0
    for _ in range(p["trials"]):
        M1, M2 = smx.SuperMatrix.random(4, rng), smx.SuperMatrix.random(4, rng)
        m_err = max(m_err, ((M1 @ M2).sdet() - M1.sdet() * M2.sdet()).max_abs()
                    / max((M1.sdet() * M2.sdet()).max_abs(), 1e-300))
        i_err = max(i_err, (M1.sdet() * M1.inv().sdet() - 1.0).max_abs())
        s_err = max(s_err, ((M1 @ M2).str() - (M2 @ M1).str()).max_abs())
    _row(rep, "sdet_multiplicative", 1, p["trials"], m_err, m_err <= 1e-10)
    _row(rep, "sdet_inverse", 1, p["trials"], i_err, i_err <= 1e-10)
    _row(rep, "str_cyclic", 1, p["trials"], s_err, s_err <= 1e-10)

    for k in (1, 2, 3):
        err = max(smx.sdet_integral_check(smx.random_site_matrices(k, 4, rng), 4)
                  for _ in range(p["sdet_trials"]))
        _row(rep, "sdet_integral", k, p["sdet_trials"], err, err <= 1e-9)

    b_err = s_err = 0.0
    for E in (0.5, 1.0, 1.5):
        for _ in range(p["potential_points"]):
            a, b = rng.uniform(-1, 1, 2)
            r = smx.supermatrix_potential_check(a, b, E)
            b_err, s_err = max(b_err, r["body_err"]), max(s_err, r["soul_err"])
    _row(rep, "potential_body", None, 3 * p["potential_points"], b_err, b_err <= 1e-10)
    _row(rep, "potential_soul", None, 3 * p["potential_points"], s_err, s_err <= 1e-10)
    t_err = 0.0
    for _ in range(20):
        a, b = rng.uniform(-1, 1, 2)
        r = smx.supermatrix_potential_check(a, b, 1.0, tform=True)
        t_err = max(t_err, r["literal_err"], r["tform_err"], r["literal_tform_err"])
    _row(rep, "potential_three_forms", None, 20, t_err, t_err <= 1e-10)

    lat2 = TorusLattice(2, 1.0)
    err = n_err = 0.0
    for _ in range(10):
        r = smx.susy_rep_check(lat2, rng.standard_normal(4), rng.standard_normal(4), 1.0)
        err, n_err = max(err, r["rel_err"]), max(n_err, r["norm_err"])
    _row(rep, "susy_rep_det", 4, 10, err, err <= 1e-10)
    _row(rep, "susy_rep_normalization", 4, 10, n_err, n_err <= 1e-12)

    ibp = ids.ibp_check(lat2, 0, p["ibp_samples"], s[1], workers)
    worst_sigma = max(v["sigma"] for v in ibp["mc"].values())
    _row(rep, "ibp_wick_oracle", 4, 7, ibp["oracle_max_err"]["standard"],
         ibp["verdict"] == "standard", verdict=ibp["verdict"],
         printed_err=ibp["oracle_max_err"]["printed"])
    _row(rep, "ibp_mc", 4, len(ibp["mc"]), worst_sigma, ibp["pass"], sigma=worst_sigma)

    err = 0.0
    for _ in range(20):
        z = complex(*rng.normal(0, 0.8, 2))
        lhs, rhs = ids.hs_exact_single(z)
        err = max(err, abs(lhs - rhs))
    _row(rep, "hs_exact", 1, 20, err, err <= 1e-12)
    z = rng.normal(0, 0.6, 4) + 1j * rng.normal(0, 0.6, 4)
    hs = ids.hs_identity_check(lat2, z, p["hs_samples"], s[2], workers)
    _row(rep, "hs_mc", 4, p["hs_samples"], hs["sigma"], hs["pass"], sigma=hs["sigma"])
    err = max(ids.hs_grassmann_check(complex(*rng.normal(0, 0.8, 2)))["max_abs_err"]
              for _ in range(20))
    _row(rep, "hs_grassmann", 1, 20, err, err <= 1e-12)

    rep.data = [dict(zip(SELFTEST_COLUMNS, r)) for r in rep.table]
    return rep


# ------------------------------------------------------------- region-report

REGION_COLUMNS = ("L", "W", "E", "delta", "samples", "region", "count", "probability",
                  "probability_se", "contribution", "contribution_se")


def run_region_report(cfg: ExperimentConfig, workers=1) -> RunReport:
    p = cfg.params
    rep = RunReport("region-report", cfg.echo())
    rep.table, rep.columns = [], REGION_COLUMNS
    seeds = _seeds(cfg.seed, len(p["W"]))
    runs = []
    for L, W, sq in zip(p["L"], p["W"], seeds):
        delta = p["delta"] if p["delta"] is not None else W ** -p["nu"]
        r = region_report(TorusLattice(L, W), p["E"], delta, p["samples"], sq, workers,
                          p["mixture"])
        runs.append(r)
        for name, reg in r["regions"].items():
            rep.table.append((L, W, p["E"], delta, p["samples"], name, reg["count"],
                              reg["probability"], reg["probability_se"], reg["contribution"],
                              reg["contribution_se"]))
        tol = 1e-12 * max(1.0, abs(r["total"]))
        rep.add(value_check(f"partition[L={L},W={W}]", {"L": L, "W": W, "delta": delta},
                            r["partition_error"], tol, r["partition_error"] <= tol))

    def ratio(r):
        c1 = r["regions"]["I1"]["contribution"]
        return r["regions"]["I2"]["contribution"] / c1 if c1 > 0 else float("nan")

    ratios = [ratio(r) for r in runs]
    for r, q in zip(runs, ratios):
        r["I2_over_I1"] = q
    if len(runs) > 1:
        order = np.argsort(p["W"])
        first, last = ratios[order[0]], ratios[order[-1]]
        ok = bool(math.isfinite(first) and math.isfinite(last) and last < first)
        rep.add(value_check("I2_over_I1_decreases",
                            {"W": [p["W"][i] for i in order], "L": [p["L"][i] for i in order]},
                            last, first, ok, ratios=[ratios[i] for i in order]))
    rep.data = runs
    return rep


# ------------------------------------------------------------- bounds-report

def run_bounds_report(cfg: ExperimentConfig, workers=1) -> RunReport:
    p = cfg.params
    s = _seeds(cfg.seed, 3 + len(p["bl_lambdas"]))
    rep = RunReport("bounds-report", cfg.echo())
    E = p["E"]
    r = det_bound_suite(p["trials"], p["n_max"], s[0])
    rep.add(value_check("det_bound_random", {"trials": p["trials"], "n_max": p["n_max"]},
                        r["violations"], 0, r["violations"] == 0, min_slack=r["min_slack"]))
    lat = TorusLattice(p["L"], p["W"])
    r = remainder_det_bound(lat, E, p["trials"], s[1])
    rep.add(value_check("det_bound_remainder", {"L": p["L"], "W": p["W"], "E": E,
                                                "trials": p["trials"]},
                        r["violations"], 0, r["violations"] == 0, min_slack=r["min_slack"]))
    r = measure_bound_suite(p["trials"], s[2])
    rep.add(value_check("measure_bound", {"instances": p["trials"]}, r["violations"], 0,
                        r["violations"] == 0, fitted_K=r["fitted_K"]))
    sc = measure_scaling(p["W"], E, tuple(p["scaling_Ls"]))
    rep.add(value_check("measure_linear_in_volume", {"W": p["W"], "E": E, "L": p["scaling_Ls"]},
                        sc["r2"], 0.99, sc["r2"] > 0.99, fitted_K=sc["fitted_K"]))
    C = covariance(TorusLattice(p["bl_L"], p["bl_W"]), "C", E)
    N = C.lattice.n_sites
    v = np.full(N, 0.1)
    bl = []
    for lam, sq in zip(p["bl_lambdas"], s[3:]):
        r = brascamp_lieb_check(C, lam, (1, 2, 3, 4), p["bl_samples"], sq, v=v)
        bl.append(r)
        rep.add(value_check(f"brascamp_lieb[lambda={lam}]", {"lambda": lam, "N": N,
                                                             "samples": p["bl_samples"]},
                            r["violations"], 0, r["violations"] == 0, rows=r["rows"]))
    rep.data = {"checks": [c.to_json() for c in rep.checks], "measure_scaling": sc}
    return rep


RUNNERS = {
    "dos-scan": run_dos_scan,
    "verify-duality": run_verify_duality,
    "verify-deformation": run_verify_deformation,
    "covariance-report": run_covariance_report,
    "grassmann-selftest": run_grassmann_selftest,
    "region-report": run_region_report,
    "bounds-report": run_bounds_report,
}


def run(cfg: ExperimentConfig, workers=1) -> RunReport:
    return RUNNERS[cfg.command](cfg, workers)
