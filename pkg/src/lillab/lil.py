"""Headline experiments: variance consistency, LIL envelope, discretization
gap and a CLT proxy.

The envelope ``+-1`` of the iterated-logarithm normalization is only reached
as ``t -> infinity`` and ``ln ln t`` grows extremely slowly (about 2.22 at
``t = 1e4``). The experiments here therefore check envelope containment and
monotone trends rather than the limit values themselves.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .corrector import sigma_pairing
from .errors import DegenerateVarianceError, ValidationError
from .functionals import (
    FunctionalValues,
    additive_functional,
    exact_second_moment_ctmc,
    lil_scale,
    martingale_decompose,
    simulate_paths,
)
from .models import CtmcModel, Model, OuModel, invariant_measure
from .report import ReportMixin, series_csv
from .space import Observable

QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)
EXCEEDANCE_STARTS = (3, 10, 100, 1000)


def _is_degenerate(g: Observable) -> bool:
    if g.values is not None:
        return not np.any(np.asarray(g.values) != 0)
    return g.sup_norm == 0


def _map_chunks(fn, n_paths: int, chunk: int, threads: int, start: int = 0):
    bounds = [(s, min(chunk, start + n_paths - s)) for s in range(start, start + n_paths, chunk)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda b: fn(*b), bounds))
    return [fn(*b) for b in bounds]


# ------------------------------------------------------------ variance triple


@dataclass
class VarianceReport(ReportMixin):
    sigma_mart: float
    sigma_mart_se: float
    sigma_pair: float
    sigma_pair_se: float
    sigma_growth: float
    sigma_growth_se: float
    growth_curve: dict
    pairwise_z: dict
    tolerance_se: float
    n_paths: int
    horizon: float
    degenerate: bool
    verdict: str


def _default_mesh(model: Model) -> float:
    return 1.0 if isinstance(model, CtmcModel) else 1.0 / 256.0


def sigma_triple(
    model: Model,
    g: Observable,
    chi,
    mu=None,
    n_paths: int = 100_000,
    horizon: float = 200.0,
    seed: int = 0,
    mart_mesh: Optional[float] = None,
    growth_mesh: Optional[float] = None,
    n_growth_points: int = 20,
    mart_paths: Optional[int] = None,
    tolerance_se: float = 4.0,
    threads: int = 1,
    chunk: int = 2000,
) -> VarianceReport:
    """Three estimates of the asymptotic variance.

    * ``sigma_mart``: Monte Carlo mean of ``M_1^2`` from stationary starts.
    * ``sigma_pair``: ``2 <g chi, mu_*>`` against the exact invariant law.
    * ``sigma_growth``: slope of ``t -> E_mu[I_t^2]`` fitted per path by least
      squares over ``[horizon/10, horizon]``. Using the slope rather than the
      ratio at ``horizon`` removes the ``O(1/t)`` offset; the ratio curve is
      reported alongside so the finite-``t`` correction stays visible.

    The martingale and growth estimates use disjoint path index ranges.
    """
    if n_paths < 2:
        raise ValidationError("need at least two paths")
    if horizon < 1:
        raise ValidationError("horizon must be at least 1")
    mu_star = invariant_measure(model)
    mu = mu_star if mu is None else mu
    mart_paths = n_paths if mart_paths is None else mart_paths
    if _is_degenerate(g):
        zero_curve = {"t": [], "ratio": [], "se": []}
        return VarianceReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, zero_curve, {}, tolerance_se, n_paths, horizon,
                              True, "degenerate variance")
    mart_mesh = _default_mesh(model) if mart_mesh is None else mart_mesh
    growth_mesh = (1.0 if isinstance(model, CtmcModel) else 1.0 / 16.0) if growth_mesh is None else growth_mesh

    sigma_pair = sigma_pairing(g, chi, mu_star)
    pair_se = 0.0
    if isinstance(model, OuModel) and hasattr(chi, "error_bound"):
        # |2<g (chi - chi_hat), mu_*>| <= 2 ||g|| sup|chi - chi_hat|
        pair_se = 2.0 * g.sup_norm * chi.error_bound

    def mart_chunk(start, count):
        b = simulate_paths(model, mu_star, 1.0, mart_mesh, seed, count, start=start)
        tr = martingale_decompose(b, g, chi, model=model)
        return tr.Z[:, 0] ** 2

    m2 = np.concatenate(_map_chunks(mart_chunk, mart_paths, chunk, threads))
    sigma_mart = float(m2.mean())
    mart_se = float(m2.std(ddof=1) / math.sqrt(len(m2)))

    steps = int(round(horizon / growth_mesh))
    grid_t = np.arange(steps + 1) * growth_mesh
    pick = np.unique(np.round(np.linspace(0.1 * steps, steps, n_growth_points)).astype(int))
    pick = pick[pick > 0]
    tp = grid_t[pick]

    def growth_chunk(start, count):
        b = simulate_paths(model, mu, horizon, growth_mesh, seed, count, start=start)
        i2 = additive_functional(b, g, model=model).values[:, pick] ** 2
        tc = tp - tp.mean()
        slopes = (i2 - i2.mean(axis=1, keepdims=True)) @ tc / (tc @ tc)
        return i2, slopes

    parts = _map_chunks(growth_chunk, n_paths, chunk, threads, start=mart_paths)
    i2 = np.concatenate([p[0] for p in parts])
    slopes = np.concatenate([p[1] for p in parts])
    sigma_growth = float(slopes.mean())
    growth_se = float(slopes.std(ddof=1) / math.sqrt(len(slopes)))
    ratio = i2.mean(axis=0) / tp
    ratio_se = i2.std(axis=0, ddof=1) / math.sqrt(len(i2)) / tp
    curve = {"t": tp.tolist(), "ratio": ratio.tolist(), "se": ratio_se.tolist()}
    if isinstance(model, CtmcModel):
        curve["exact"] = [exact_second_moment_ctmc(model, g, mu, float(t)) / t for t in tp]

    est = {"mart": (sigma_mart, mart_se), "pair": (sigma_pair, pair_se), "growth": (sigma_growth, growth_se)}
    zs = {}
    names = list(est)
    for i in range(3):
        for j in range(i + 1, 3):
            (a, sa), (b, sb) = est[names[i]], est[names[j]]
            joint = math.hypot(sa, sb)
            zs[f"{names[i]}-{names[j]}"] = abs(a - b) / joint if joint > 0 else (0.0 if a == b else math.inf)
    ok = all(z <= tolerance_se for z in zs.values())
    degenerate = abs(sigma_pair) < 1e-12
    verdict = "degenerate variance" if degenerate else ("pass" if ok else "fail")
    return VarianceReport(sigma_mart, mart_se, sigma_pair, pair_se, sigma_growth, growth_se, curve, zs,
                          tolerance_se, n_paths, horizon, degenerate, verdict)


# ----------------------------------------------------- discretization bridge


def gap_matrix(I_values: np.ndarray, grid_times: np.ndarray, steps_per_unit: int) -> tuple:
    """Per-path ``G_n = sup_{t in [n, n+1)} |I_t/s(t) - I_n/s(n)|`` with ``s(t) = sqrt(t ln ln t)``.

    Returns ``(ns, G)`` for ``n = 3, ..., floor(horizon) - 1``.
    """
    k = steps_per_unit
    n_int = int(round(grid_times[-1]))
    if n_int < 4:
        return np.arange(0), np.zeros((I_values.shape[0], 0))
    lo, hi = 3 * k, n_int * k
    s = lil_scale(grid_times[lo:hi]) / math.sqrt(2.0)
    scaled = (I_values[:, lo:hi] / s).reshape(I_values.shape[0], n_int - 3, k)
    G = np.max(np.abs(scaled - scaled[:, :, :1]), axis=2)
    return np.arange(3, n_int), G


@dataclass
class DiscretizationReport(ReportMixin):
    n: list
    median: list
    maximum: list
    ceiling: list
    within_ceiling: bool
    initial_n: int
    median_initial: float
    median_terminal: float
    loglog_slope: float
    verdict: str


def summarize_gap(ns: np.ndarray, G: np.ndarray, g: Observable, initial_n: int = 10) -> DiscretizationReport:
    if G.shape[1] == 0:
        raise ValidationError("horizon too short for the discretization gap (need >= 4)")
    med = np.median(G, axis=0)
    mx = np.max(G, axis=0)
    s = lambda n: np.sqrt(n * np.log(np.log(n)))  # noqa: E731
    # |I_t - I_n| <= ||g|| (t - n) and |I_n| <= ||g|| n
    ceiling = g.sup_norm * (1.0 / s(ns) + ns * (1.0 / s(ns) - 1.0 / s(ns + 1.0)))
    within = bool(np.all(mx <= ceiling * (1 + 1e-9) + 1e-15))
    i0 = int(np.searchsorted(ns, initial_n)) if ns[-1] >= initial_n else 0
    med0, med1 = float(med[i0]), float(med[-1])
    tail = slice(i0, None)
    good = med[tail] > 0
    if np.count_nonzero(good) >= 2:
        slope = float(np.polyfit(np.log(ns[tail][good]), np.log(med[tail][good]), 1)[0])
    else:
        slope = 0.0
    if not np.any(G):
        verdict = "pass"
    else:
        verdict = "pass" if (slope < 0 and med1 < 0.5 * med0 and within) else "fail"
    return DiscretizationReport(ns.tolist(), med.tolist(), mx.tolist(), ceiling.tolist(), within, int(ns[i0]),
                                med0, med1, slope, verdict)


def discretization_gap(I, grid_times, g: Observable, initial_n: int = 10) -> DiscretizationReport:
    """Gap between the continuous and integer-sampled normalized functional."""
    values = I.values if isinstance(I, FunctionalValues) else np.atleast_2d(np.asarray(I, dtype=float))
    grid_times = np.asarray(grid_times, dtype=float)
    k = int(round(1.0 / (grid_times[1] - grid_times[0])))
    ns, G = gap_matrix(values, grid_times, k)
    return summarize_gap(ns, G, g, initial_n)


# ---------------------------------------------------------------- LIL runner


@dataclass
class LilReport(ReportMixin):
    sigma_used: float
    delta: float
    horizon: float
    n_paths: int
    checkpoints: list
    martingale_sup_quantiles: dict
    martingale_neg_inf_quantiles: dict
    functional_sup_quantiles: dict
    functional_neg_inf_quantiles: dict
    terminal_sup_quantiles: dict
    envelope_exceedance_fraction: float
    functional_exceedance_fraction: float
    exceedance_by_start: dict
    median_sup_at_10: float
    median_sup_at_horizon: float
    upward_trend: bool
    discretization: Optional[DiscretizationReport]
    note: str
    running_sup: np.ndarray = field(default=None, repr=False)
    running_inf: np.ndarray = field(default=None, repr=False)

    def to_csv(self) -> str:
        p, k = self.running_sup.shape
        return series_csv({
            "path_id": np.repeat(np.arange(p), k),
            "n": np.tile(self.checkpoints, p),
            "running_sup": self.running_sup.ravel(),
            "running_inf": self.running_inf.ravel(),
        })


NOTE = ("The iterated-logarithm limits +-1 are asymptotic; at desk horizons (ln ln 1e4 ~ 2.22) "
        "the report checks envelope containment and monotone trends only.")


def _checkpoints(n_max: int) -> np.ndarray:
    pts = np.unique(np.round(np.logspace(np.log10(3), np.log10(n_max), 60)).astype(int))
    return np.unique(np.concatenate([pts, [10, n_max]]))


def lil_envelope(
    model: Model,
    g: Observable,
    sigma: float,
    chi,
    mu=None,
    n_paths: int = 1000,
    horizon: float = 10_000.0,
    delta: float = 0.5,
    mesh: float = 0.1,
    seed: int = 0,
    threads: int = 1,
    chunk: int = 100,
    with_gap: bool = True,
) -> LilReport:
    """Running extrema of ``M_n / sqrt(2 sigma^2 n ln ln n)`` and of the same for ``I_t``.

    ``sigma`` is the variance ``sigma_g^2``. Extrema start at ``n = 3``, the
    first integer where ``ln ln n > 0``. The exceedance fraction counts paths
    whose running sup ever passes ``1 + delta``.
    """
    if not sigma > 0:
        raise DegenerateVarianceError()
    if horizon < math.exp(math.e):
        raise ValidationError("horizon must be at least e^e")
    if not delta > 0:
        raise ValidationError("delta must be positive")
    mu = invariant_measure(model) if mu is None else mu
    sd = math.sqrt(sigma)
    n_max = int(math.floor(horizon))
    cps = _checkpoints(n_max)
    starts = [s for s in EXCEEDANCE_STARTS if s < n_max]

    def work(start, count):
        b = simulate_paths(model, mu, horizon, mesh, seed, count, start=start)
        I = additive_functional(b, g, model=model)
        tr = martingale_decompose(b, g, chi, I)
        n = np.arange(3, n_max + 1)
        mn = tr.M_values[:, tr.integer_index[3:]] / (sd * lil_scale(n))
        sup_m = np.maximum.accumulate(mn, axis=1)
        inf_m = np.minimum.accumulate(mn, axis=1)
        exceed = {s: np.any(mn[:, s - 3:] > 1.0 + delta, axis=1) for s in starts}
        k = b.steps_per_unit
        t = b.grid_times[3 * k:]
        it = I.values[:, 3 * k:] / (sd * lil_scale(t))
        sup_i = np.maximum.accumulate(it, axis=1)
        inf_i = np.minimum.accumulate(it, axis=1)
        cp_grid = (cps - 3) * k
        out = {
            "sup_m": sup_m[:, cps - 3], "inf_m": inf_m[:, cps - 3],
            "sup_i": sup_i[:, cp_grid], "inf_i": inf_i[:, cp_grid],
            "exceed": exceed, "exceed_i": sup_i[:, -1] > 1.0 + delta,
        }
        if with_gap:
            out["gap"] = gap_matrix(I.values, b.grid_times, k)
        return out

    parts = _map_chunks(work, n_paths, chunk, threads)
    cat = lambda key: np.concatenate([p[key] for p in parts])  # noqa: E731
    sup_m, inf_m, sup_i, inf_i = cat("sup_m"), cat("inf_m"), cat("sup_i"), cat("inf_i")
    exceed = {str(s): float(np.mean(np.concatenate([p["exceed"][s] for p in parts]))) for s in starts}

    def q(a):
        return {str(qq): np.quantile(a, qq, axis=0).tolist() for qq in QUANTILES}

    i10 = int(np.searchsorted(cps, 10))
    med = np.median(sup_m, axis=0)
    gap_report = None
    if with_gap:
        ns = parts[0]["gap"][0]
        G = np.concatenate([p["gap"][1] for p in parts])
        gap_report = summarize_gap(ns, G, g)
    return LilReport(
        sigma_used=float(sigma), delta=float(delta), horizon=float(horizon), n_paths=n_paths,
        checkpoints=cps.tolist(),
        martingale_sup_quantiles=q(sup_m), martingale_neg_inf_quantiles=q(-inf_m),
        functional_sup_quantiles=q(sup_i), functional_neg_inf_quantiles=q(-inf_i),
        terminal_sup_quantiles={str(qq): float(np.quantile(sup_m[:, -1], qq)) for qq in QUANTILES},
        envelope_exceedance_fraction=exceed[str(starts[0])],
        functional_exceedance_fraction=float(np.mean(cat("exceed_i"))),
        exceedance_by_start=exceed,
        median_sup_at_10=float(med[i10]), median_sup_at_horizon=float(med[-1]),
        upward_trend=bool(med[-1] > med[i10]),
        discretization=gap_report, note=NOTE, running_sup=sup_m, running_inf=inf_m,
    )


# ------------------------------------------------------------------- CLT proxy


@dataclass
class CltReport(ReportMixin):
    t_eval: float
    n_paths: int
    ks_statistic: float
    critical_value: float
    p_value: float
    passed: bool


def clt_proxy(paths, g: Optional[Observable] = None, sigma: float = 1.0, t_eval: Optional[float] = None,
              model: Optional[Model] = None, alpha: float = 0.01) -> CltReport:
    """KS test of ``I_t / sqrt(sigma^2 t)`` against N(0, 1).

    ``paths`` is a PathBatch (then ``g`` and ``t_eval`` are required) or a
    1-D array of already-normalized statistics.
    """
    if not sigma > 0:
        raise DegenerateVarianceError()
    if isinstance(paths, np.ndarray) and paths.ndim == 1:
        z = paths
        t_eval = float("nan") if t_eval is None else t_eval
    else:
        if g is None or t_eval is None:
            raise ValidationError("g and t_eval are required for path input")
        I = additive_functional(paths, g, model=model)
        idx = int(np.argmin(np.abs(paths.grid_times - t_eval)))
        if abs(paths.grid_times[idx] - t_eval) > 1e-9:
            raise ValidationError("t_eval is not a grid time")
        z = I.values[:, idx] / math.sqrt(sigma * t_eval)
    res = stats.kstest(z, "norm")
    crit = float(stats.kstwo.ppf(1.0 - alpha, len(z)))
    return CltReport(float(t_eval), len(z), float(res.statistic), crit, float(res.pvalue),
                     bool(res.statistic < crit))


def run_discretization(model: Model, g: Observable, mu=None, n_paths: int = 1000, horizon: float = 1000.0,
                       mesh: float = 0.1, seed: int = 0, threads: int = 1, chunk: int = 100,
                       initial_n: int = 10) -> DiscretizationReport:
    """Simulate paths and summarize the integer-sampling gap of the normalized functional."""
    if horizon < 4:
        raise ValidationError("horizon must be at least 4")
    mu = invariant_measure(model) if mu is None else mu

    def work(start, count):
        b = simulate_paths(model, mu, horizon, mesh, seed, count, start=start)
        I = additive_functional(b, g, model=model)
        return gap_matrix(I.values, b.grid_times, b.steps_per_unit)

    parts = _map_chunks(work, n_paths, chunk, threads)
    return summarize_gap(parts[0][0], np.concatenate([p[1] for p in parts]), g, initial_n)
