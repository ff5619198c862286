"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the collected lines are
printed in the terminal summary (see ``conftest.py``). The file also runs
standalone: ``python3 tests/test_acceptance.py``.
"""
import json
import math
import time

import numpy as np
import pytest
from scipy import stats
from scipy.special import gammaln

from _oracles import brute_force_2d, fixture, synthetic
from _stats import ALPHA, chi2_gof_pvalue, chi2_two_sample_pvalue
from dcpp.cli import EXIT_OK, run
from dcpp.concentration import bound_remark, bound_thm32, dominance_suite
from dcpp.core import DcpParams, NbParams, jump_mean, nb_pmf, nb_to_dcp, pmf_matrix, pmf_partition, pmf_vector
from dcpp.regression import (
    ExperimentConfig,
    SolverConfig,
    _weight_constants,
    fit_weighted_lasso,
    kkt_probability_experiment,
    make_design,
    nb_cell_weights,
    nb_embedding,
    nb_neg_loglik,
    nb_score,
)
from dcpp.rng import RngStream
from dcpp.sampler import (
    Region,
    campbell_check,
    sample_dcp_rv,
    sample_dcpp,
    sample_layer_counts,
    sample_nb_direct,
    stochastic_integral,
)

RESULTS: list[str] = []


def record(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def random_params(gen, max_order=8, max_lam=5.0):
    order = int(gen.integers(1, max_order + 1))
    w = gen.uniform(0.0, 1.0, order)
    w[-1] = max(w[-1], 0.05)
    w /= w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return DcpParams(float(gen.uniform(0.05, max_lam)), tuple(w))


def test_criterion_01_pmf_equivalence():
    gen = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        p = random_params(gen)
        mass = float(gen.uniform(0.05, 5.0))
        vec = pmf_vector(p, mass, 20)
        for k in range(21):
            worst = max(worst, abs(pmf_partition(p, mass, k) - vec[k]))
    elapsed = time.perf_counter() - t0
    record(1, worst <= 1e-10 and elapsed < 10,
           f"max |partition - matrix| = {worst:.2e} (<= 1e-10), {elapsed:.2f} s (< 10 s)")


def test_criterion_02_special_cases():
    k = np.arange(31)
    pois = stats.poisson.pmf(k, 1.7)
    p = DcpParams.poisson(1.7)
    e_pois = max(
        np.max(np.abs(pmf_vector(p, 1.7, 30) - pois)),
        max(abs(pmf_partition(p, 1.7, int(i)) - pois[i]) for i in k),
    )
    q = 0.5
    g = nb_to_dcp(NbParams(1.0, q), tol=1e-10)
    n = np.arange(21)
    e_geo = max(
        np.max(np.abs(pmf_vector(g, g.lam, 20) - (1 - q) * q**n)),
        max(abs(pmf_partition(g, g.lam, int(i)) - (1 - q) * q**i) for i in n),
    )
    r, q = 2.0, 0.3
    b = nb_to_dcp(NbParams(r, q), tol=1e-10)
    closed = np.exp(gammaln(n + r) - gammaln(r) - gammaln(n + 1)) * (1 - q) ** r * q**n
    e_nb = max(
        np.max(np.abs(pmf_vector(b, b.lam, 20) - closed)),
        max(abs(pmf_partition(b, b.lam, int(i)) - closed[i]) for i in n),
    )
    ok = e_pois <= 1e-12 and e_geo <= 1e-8 and e_nb <= 1e-7
    record(2, ok, f"Poisson {e_pois:.1e} (<= 1e-12), geometric {e_geo:.1e} (<= 1e-8), NB(2,0.3) {e_nb:.1e} (<= 1e-7)")


def test_criterion_03_sampler_law():
    t0 = time.perf_counter()
    pvals = []
    rv = [DcpParams.poisson(2.0), DcpParams(1.5, (0.5, 0.5)), DcpParams(3.0, (0.1, 0.0, 0.6, 0.3))]
    for i, p in enumerate(rv):
        x = sample_dcp_rv(p, 10_000, RngStream(3000 + i))
        pm = pmf_vector(p, p.lam, 300)
        pvals.append(chi2_gof_pvalue(x, lambda k: pm[k]))
    for i, nb in enumerate([NbParams(1.0, 0.5), NbParams(2.0, 0.3), NbParams(3.0, 0.4)]):
        x = sample_nb_direct(nb, 10_000, RngStream(3100 + i))
        pvals.append(chi2_gof_pvalue(x, lambda k: nb_pmf(nb, k)))
    for i, (masses, alphas) in enumerate([([2.0], (1.0,)), ([1.0, 2.0], (0.5, 0.5)), ([0.5, 0.5, 1.0], (0.2, 0.0, 0.8))]):
        region = Region.from_masses(masses)
        base = RngStream(3200 + i)
        cp = np.array([sample_dcpp(region, alphas, base.child(t)).weighted_count() for t in range(10_000)])
        pm = pmf_vector(DcpParams(sum(masses), alphas), sum(masses), 300)
        pvals.append(chi2_gof_pvalue(cp, lambda k: pm[k]))
    elapsed = time.perf_counter() - t0
    record(3, min(pvals) > ALPHA and elapsed < 60,
           f"9 chi-square tests, min p = {min(pvals):.3g} (> 1e-3), {elapsed:.1f} s (< 60 s)")


def test_criterion_04_campbell():
    fixtures = [
        (Region.unit_cell(1.0), (1.0,), np.ones(1)),
        (Region.from_masses([1.0, 2.0]), (0.5, 0.5), np.array([0.3, 1.0])),
        (Region.from_masses([0.5, 1.5, 1.0], dim=2), (0.2, 0.3, 0.5), lambda x: 0.5 + x[:, 0]),
    ]
    worst = 0.0
    exact_ok = False
    for i, (region, alphas, f) in enumerate(fixtures):
        for j, theta in enumerate((-2.0, -1.0, -0.5)):
            res = campbell_check(region, alphas, f, theta, 100_000, RngStream(4000 + i, j))
            worst = max(worst, abs(res.mc_estimate - res.closed_form) / res.std_error)
            if i == 0 and theta == -1.0:
                exact_ok = abs(res.closed_form - math.exp(math.exp(-1) - 1)) <= 1e-15 \
                    and round(res.closed_form, 6) == 0.531464
    record(4, worst <= 4 and exact_ok,
           f"9 (fixture, theta) combos, max |MC - closed| = {worst:.2f} SE (<= 4); Poisson unit closed form 0.531464")


def test_criterion_05_dominance():
    t0 = time.perf_counter()
    reports = dominance_suite(100_000, RngStream(5000))
    elapsed = time.perf_counter() - t0
    failed = [r for r in reports if not r.passed]
    exact = float(stats.poisson.sf(3, 1.0))
    ok = not failed and len(reports) >= 45 and round(exact, 6) == 0.018988 and exact <= math.exp(-1) and elapsed < 300
    record(5, ok, f"{len(reports)} grid cases, {len(failed)} contradicted at Wilson 99%; "
                  f"exact Poisson tail {exact:.6f} <= {math.exp(-1):.6f}; {elapsed:.1f} s (< 300 s)")


def test_criterion_06_remark_identity():
    gen = np.random.default_rng(606)
    mismatches = 0
    for _ in range(10):
        p = random_params(gen, max_lam=20.0)
        y = float(gen.uniform(0.01, 10.0))
        display = jump_mean(p) * (math.sqrt(2.0 * y * p.lam) + y / 3.0)
        s = bound_thm32(Region.unit_cell(p.lam), p, np.ones(1), y)
        mismatches += not (s.threshold == display == bound_remark(p, y).threshold)
    record(6, mismatches == 0, f"10 random (lam, alphas, y), {mismatches} bit-level mismatches")


def test_criterion_07_gradient():
    worst = 0.0
    h = 1e-6
    for i in range(20):
        prob, beta = fixture(i)
        fd = np.array([(nb_neg_loglik(prob, beta + h * e) - nb_neg_loglik(prob, beta - h * e)) / (2 * h)
                       for e in np.eye(prob.p)])
        g = nb_score(prob, beta)
        worst = max(worst, np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-8))
    record(7, worst <= 1e-5, f"20 fixtures, max relative error {worst:.2e} (<= 1e-5)")


def test_criterion_08_solver():
    prob = synthetic(100, 2, [0.8, -0.4], 4.0, 3, weights=[0.1, 0.1])
    fit = fit_weighted_lasso(prob, SolverConfig(tol=1e-6))
    _, oracle = brute_force_2d(prob)
    gap = abs(fit.objective - oracle)
    ok = gap <= 1e-6 and fit.converged and fit.kkt.all_satisfied
    record(8, ok, f"p=2 objective gap to grid+refine oracle {gap:.1e} (<= 1e-6); "
                  f"converged={fit.converged}, max KKT residual {fit.kkt.max_residual:.1e} (<= 1e-6)")


def test_criterion_09_kkt_experiment():
    t0 = time.perf_counter()
    rep = kkt_probability_experiment(ExperimentConfig(n=200, p=50, d_star=3, theta=5.0, gamma=2.0, replicates=500),
                                     RngStream(9000))
    elapsed = time.perf_counter() - t0
    b = 2 * 50 ** (1 - 2.0)
    limit = b + 4 * math.sqrt(b * (1 - b) / 500)
    medians = [
        kkt_probability_experiment(ExperimentConfig(n=n, replicates=200), RngStream(9001)).median_l1_error
        for n in (100, 200, 400)
    ]
    decreasing = all(m2 < m1 for m1, m2 in zip(medians, medians[1:]))
    ok = rep.exceed_frequency <= limit and elapsed < 600 and decreasing
    record(9, ok, f"exceedance {rep.exceed_frequency:.3f} <= {limit:.4f}, {elapsed:.1f} s (< 600 s); "
                  f"median l1 error over n=100,200,400: " + ", ".join(f"{m:.3f}" for m in medians))


def test_criterion_10_embedding():
    pvals = []
    for f, (h, theta) in enumerate([((1.0, 2.0, 3.0), 2.0), ((0.5, 4.0, 1.5), 5.0), ((2.0, 2.0, 8.0), 1.0)]):
        region = nb_embedding(h)
        counts = sample_layer_counts(region, nb_cell_weights(h, theta), 10_000, RngStream(10_000 + f))
        per_cell = counts @ np.arange(1, counts.shape[2] + 1)
        for i, hi in enumerate(h):
            nb = NbParams.from_mean(hi, theta)
            direct = sample_nb_direct(nb, 10_000, RngStream(10_100 + f, i))
            pvals.append(chi2_two_sample_pvalue(per_cell[:, i], direct))
            pvals.append(chi2_gof_pvalue(per_cell[:, i], lambda k: nb_pmf(nb, k)))
    gen = np.random.default_rng(10)
    X = make_design(3, 2, gen)
    h = np.exp(X @ [0.4, -0.2])
    pat = sample_dcpp(nb_embedding(h), nb_cell_weights(h, 2.0), RngStream(10_200))
    _, _, _, phi_t = _weight_constants(X, h, 2.0)
    Y = pat.counts_per_cell()
    gap = max(abs(stochastic_integral(pat, phi_t[:, j]) - float(phi_t[:, j] @ Y)) for j in range(2))
    ok = min(pvals) > ALPHA and gap <= 1e-12
    record(10, ok, f"3 fixtures x 3 cells, min chi-square p = {min(pvals):.3g} (> 1e-3); "
                   f"stochastic integral vs sum phi~ Y gap {gap:.1e}")


def test_criterion_11_cli_determinism(tmp_path):
    gen = np.random.default_rng(11)
    X = gen.uniform(-1, 1, (80, 3))
    y = gen.poisson(np.exp(X @ [0.7, 0.0, -0.5]))
    data = tmp_path / "data.csv"
    data.write_text("y,x1,x2,x3\n" + "".join(
        ",".join([str(v)] + [repr(float(c)) for c in row]) + "\n" for v, row in zip(y, X)))
    configs = {
        "pmf": {"lam": 2.0, "alphas": [0.5, 0.25, 0.25], "k_max": 15},
        "sample": {"mode": "pattern", "region": Region.from_masses([1.0, 3.0], dim=2).to_dict(), "alphas": [0.5, 0.5]},
        "bounds": {"kind": "thm31", "laws": [{"lam": 1.0, "alphas": [1.0]}], "grid": [0.25, 1.0, 4.0]},
        "verify": {"trials": 2000, "fixtures": ["two_point"], "masses": [1.0], "levels": [1.0, 2.0]},
        "regress": {"data": str(data), "theta": 4.0, "gamma": 1.0},
        "experiment": {"n": 80, "p": 10, "replicates": 100},
    }
    identical = []
    for sub, cfg in configs.items():
        path = tmp_path / f"{sub}.json"
        path.write_text(json.dumps(cfg))
        outs = []
        for run_id in ("a", "b"):
            out = tmp_path / f"{sub}_{run_id}.out"
            assert run(sub, str(path), 12345, str(out)) == EXIT_OK
            outs.append(out.read_bytes() + (tmp_path / f"{sub}_{run_id}.out.config.json").read_bytes())
        identical.append(outs[0] == outs[1])
    record(11, all(identical), f"{sum(identical)}/{len(configs)} subcommands byte-identical across two runs")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
