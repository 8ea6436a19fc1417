"""Acceptance suite: one verdict line per numbered criterion.

Run with ``pytest tests/test_acceptance.py -v``. Each check prints
``criterion N: PASS|FAIL | details`` and a summary table closes the session.
Tolerances are fixed here and must not be loosened to make a check pass.
"""

import io
import json
import math
import time

import numpy as np
import pytest
from oracles import brute_force_ot, random_metric, random_prob

from lillab.cli import run
from lillab.corrector import OuCorrector, corrector_ctmc, poisson_residual, sigma_pairing
from lillab.functionals import (
    additive_functional,
    exact_second_moment_ctmc,
    heyde_scott_diagnostics,
    martingale_property_test,
    simulate_martingale,
    simulate_paths,
)
from lillab.lil import lil_envelope, sigma_triple
from lillab.models import OuModel, invariant_measure, two_state_chain
from lillab.space import EmpiricalMeasure, Metric, Observable, tanh_observable
from lillab.transport import certify_contraction, certify_ergodicity, w1_discrete

pytestmark = pytest.mark.acceptance

CHAIN = two_state_chain(1.0)
G = Observable.from_values([1.0, -1.0])


@pytest.fixture(scope="module")
def chain_chi():
    return corrector_ctmc(CHAIN, G)


@pytest.fixture(scope="module")
def ou_setup():
    ou = OuModel()
    g = tanh_observable(1.0)
    return ou, g, OuCorrector(ou, g)


def test_c1_poisson_exactness(criterion):
    t0 = time.perf_counter()
    chi = corrector_ctmc(CHAIN, G)
    res = poisson_residual(CHAIN, G, chi)
    sigma = sigma_pairing(G, chi, invariant_measure(CHAIN))
    elapsed = time.perf_counter() - t0
    ok = np.array_equal(chi, [0.5, -0.5]) and res < 1e-12 and sigma == 1.0 and elapsed < 1.0
    criterion(1, ok, f"chi={chi.tolist()} residual={res:.1e} sigma_pair={sigma!r} time={elapsed:.3f}s")


def test_c2_variance_triple(criterion, chain_chi, ou_setup):
    t0 = time.perf_counter()
    rc = sigma_triple(CHAIN, G, chain_chi, n_paths=100_000, horizon=200.0, seed=2, threads=8)
    ou, g, chi = ou_setup
    ro = sigma_triple(ou, g, chi, n_paths=100_000, horizon=100.0, seed=2, threads=8)
    elapsed = time.perf_counter() - t0
    chain_ok = abs(rc.sigma_mart - 1.0) <= 0.02 and abs(rc.sigma_growth - 1.0) <= 0.02
    ou_ok = all(z <= 4.0 for z in ro.pairwise_z.values())
    zs = ", ".join(f"{k}={v:.2f}" for k, v in ro.pairwise_z.items())
    criterion(2, chain_ok and ou_ok and elapsed < 120.0,
              f"chain mart={rc.sigma_mart:.4f} growth={rc.sigma_growth:.4f} pair={rc.sigma_pair}; "
              f"ou mart={ro.sigma_mart:.4f} pair={ro.sigma_pair:.4f} growth={ro.sigma_growth:.4f} "
              f"z[{zs}]; time={elapsed:.1f}s")


def test_c3_exact_second_moment(criterion):
    exact = exact_second_moment_ctmc(CHAIN, G, 0, 1.0)
    closed = 1.0 - (1.0 - math.exp(-2.0)) / 2.0
    b = simulate_paths(CHAIN, EmpiricalMeasure.dirac(0, "discrete"), 1.0, 1.0, 3, 100_000, threads=8)
    i1 = additive_functional(b, G).values[:, -1]
    est, se = float(np.mean(i1**2)), float(np.std(i1**2, ddof=1) / math.sqrt(i1.size))
    ok = abs(exact - 0.5676676) < 1e-7 and abs(exact - closed) < 1e-9 and abs(est - exact) <= 4 * se
    criterion(3, ok, f"exact={exact:.10f} closed={closed:.10f} mc={est:.5f}+-{se:.5f}")


def test_c4_contraction_certificate(criterion):
    ou = certify_contraction(OuModel(), np.linspace(-3, 3, 10), np.linspace(-2.7, 3.3, 10), np.linspace(0, 4.5, 10))
    dev = float(np.max(np.abs(np.array([r["ratio"] for r in ou.grid]) - 1.0)))
    ch = certify_contraction(CHAIN, [0, 1], [0, 1], np.linspace(0.1, 3.0, 10))
    ok = len(ou.grid) == 1000 and dev <= 1e-12 and abs(ch.gamma_hat - 2.0) < 1e-6 and ch.fit_r2 > 0.999
    criterion(4, ok, f"ou max|ratio-1|={dev:.1e} over {len(ou.grid)} points; "
                     f"ctmc slope=-{ch.gamma_hat:.6f} R2={ch.fit_r2:.6f}")


def test_c5_ergodicity_decay(criterion):
    ro = certify_ergodicity(OuModel(), EmpiricalMeasure.dirac(3.0), np.linspace(0.25, 4.0, 16), seed=1)
    rc = certify_ergodicity(CHAIN, EmpiricalMeasure.dirac(0, "discrete"), np.linspace(0.25, 6.0, 24))
    ok_o = abs(ro.fitted_slope + ro.gamma) <= 0.1 * ro.gamma
    ok_c = abs(rc.fitted_slope + rc.gamma) <= 0.1 * rc.gamma
    criterion(5, ok_o and ok_c, f"ou slope={ro.fitted_slope:.4f} (gamma {ro.gamma}); "
                                f"ctmc slope={rc.fitted_slope:.4f} (gamma {rc.gamma})")


def test_c6_transport_oracle_and_axioms(criterion):
    rng = np.random.default_rng(606)
    worst, axioms = 0.0, True
    for _ in range(200):
        n = int(rng.integers(1, 5))
        rho = random_metric(rng, n)
        m = Metric.explicit(rho)
        mu, nu, la = random_prob(rng, n), random_prob(rng, n), random_prob(rng, n)
        d = w1_discrete(mu, nu, m)
        worst = max(worst, abs(d - brute_force_ot(mu, nu, rho)))
        axioms &= d >= 0 and w1_discrete(mu, mu, m) <= 1e-14
        axioms &= abs(d - w1_discrete(nu, mu, m)) <= 1e-12
        axioms &= d <= w1_discrete(mu, la, m) + w1_discrete(la, nu, m) + 1e-12
    criterion(6, worst <= 1e-10 and axioms, f"max|w1-oracle|={worst:.1e} over 200 instances; axioms={axioms}")


def _b2_check(trace, points=(10, 100, 1000)):
    rep = heyde_scott_diagnostics(trace, 1.0)
    rows = [(n, rep.b2_series[n - 1], rep.b2_stderr[n - 1]) for n in points]
    return rows, all(abs(v - 1.0) <= 3 * se for _, v, se in rows)


def test_c7_heyde_scott_b2(criterion, chain_chi):
    stat = simulate_martingale(CHAIN, G, chain_chi, invariant_measure(CHAIN), 1000.0, 1.0, 7, 4000, threads=8)
    rows_s, ok_s = _b2_check(stat)
    point = simulate_martingale(CHAIN, G, chain_chi, EmpiricalMeasure.dirac(0, "discrete"), 1000.0, 1.0, 8, 4000,
                                threads=8)
    rows_p, _ = _b2_check(point)
    n, v, se = rows_p[-1]
    ok_p = abs(v - 1.0) <= 3 * se
    fmt = lambda rows: " ".join(f"n={n}:{v:.4f}+-{se:.4f}" for n, v, se in rows)  # noqa: E731
    criterion(7, ok_s and ok_p, f"stationary {fmt(rows_s)}; from delta_0 {fmt(rows_p)}")


def test_c8_martingale_property(criterion, chain_chi):
    maps = {
        "one": lambda s: np.ones(np.shape(s)),
        "indicator_0": lambda s: (np.asarray(s) == 0).astype(float),
        "g": lambda s: G(s),
        "chi": lambda s: chain_chi[s],
    }
    mu = invariant_measure(CHAIN)
    good = martingale_property_test(simulate_martingale(CHAIN, G, chain_chi, mu, 10.0, 1.0, 8, 10_000), maps)
    bad = martingale_property_test(simulate_martingale(CHAIN, G, 1.5 * chain_chi, mu, 10.0, 1.0, 8, 10_000), maps)
    criterion(8, good.passed and not bad.passed,
              f"max|t| correct corrector={good.max_abs_t:.2f}, corrupted={bad.max_abs_t:.1f} (threshold 4)")


@pytest.fixture(scope="module")
def lil_report(chain_chi):
    t0 = time.perf_counter()
    rep = lil_envelope(CHAIN, G, 1.0, chain_chi, n_paths=1000, horizon=1e4, delta=0.5, mesh=0.1, seed=9, threads=8)
    return rep, time.perf_counter() - t0


def test_c9a_envelope_exceedance(criterion, lil_report):
    rep, elapsed = lil_report
    table = " ".join(f"n>={s}:{f:.3f}" for s, f in rep.exceedance_by_start.items())
    criterion(9, rep.envelope_exceedance_fraction <= 0.05 and elapsed < 600,
              f"paths exceeding 1.5 envelope {rep.envelope_exceedance_fraction:.3f} (limit 0.05); "
              f"by start {table}; time={elapsed:.1f}s", part="a")


def test_c9b_running_sup_trend(criterion, lil_report):
    rep, _ = lil_report
    criterion(9, rep.upward_trend, f"median running sup n=10: {rep.median_sup_at_10:.3f}, "
                                   f"n=1e4: {rep.median_sup_at_horizon:.3f}", part="b")


def test_c9c_gap_median_decreases(criterion, lil_report):
    rep, _ = lil_report
    d = rep.discretization
    ns = np.asarray(d.n)
    m10 = d.median[int(np.searchsorted(ns, 10))]
    m1000 = d.median[int(np.searchsorted(ns, 1000))]
    criterion(9, m1000 < m10 and d.within_ceiling,
              f"gap median n=10: {m10:.4f}, n=1000: {m1000:.4f}, slope={d.loglog_slope:.2f}", part="c")


DETERMINISM_RUNS = [
    ("sigma", {"params": {"n_paths": 4000, "horizon": 20.0, "chunk": 500}}),
    ("martingale-check", {"params": {"n_paths": 3000, "horizon": 5.0, "chunk": 400}}),
    ("heyde-scott", {"params": {"n_paths": 1000, "horizon": 50.0, "chunk": 150}}),
    ("lil", {"params": {"n_paths": 120, "horizon": 300.0, "chunk": 25}}),
    ("clt-proxy", {"params": {"n_paths": 3000, "t_eval": 10.0, "chunk": 400}}),
    ("discretization", {"params": {"n_paths": 120, "horizon": 100.0, "chunk": 25}}),
    ("ergodicity", {"params": {"samples_per_t": 20000}}),
]


def test_c10_thread_determinism(criterion):
    base = {"model": {"kind": "ctmc", "q": [[-1, 1], [1, -1]]}, "seed": 12345}
    bad = []
    for command, extra in DETERMINISM_RUNS:
        for model in (base["model"], {"kind": "ou", "gamma": 1.0, "sigma": math.sqrt(2.0)}):
            texts = []
            for threads in (1, 4, 8):
                buf = io.StringIO()
                run(command, dict(base, model=model, **extra), threads=threads, stdout=buf)
                d = json.loads(buf.getvalue())
                d.pop("timestamp")
                texts.append(json.dumps(d, sort_keys=True))
            if not texts[0] == texts[1] == texts[2]:
                bad.append(f"{command}/{model['kind']}")
    criterion(10, not bad, f"{2 * len(DETERMINISM_RUNS)} experiments x threads 1,4,8; differing: {bad or 'none'}")
