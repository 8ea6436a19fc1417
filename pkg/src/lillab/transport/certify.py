"""Numerical certificates for Wasserstein contraction, exponential ergodicity,
moment bounds, Cesaro convergence and Lipschitz propagation."""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gamma as gamma_fn
from scipy.special import ndtr

from ..errors import ValidationError
from ..models import CtmcModel, Model, OuModel, ctmc_transition, invariant_measure
from ..report import ReportMixin, series_csv
from ..rng import aux_stream
from ..space import (
    DISCRETE,
    DiscreteMeasure,
    EmpiricalMeasure,
    GaussianMeasure,
    LyapunovConfig,
    Observable,
    gaussian_expectation,
    gh_rule,
    measure_mean,
    moment,
)
from .distance import w1_discrete, w1_empirical_1d

ANALYTIC_TOL = 1e-9
N_REPLICATES = 8


@dataclass
class MixingCertificate(ReportMixin):
    gamma_nominal: float
    gamma_hat: float
    fit_r2: float
    max_ratio_violation: float
    tol: float
    passed: bool
    method: str
    grid: list = field(default_factory=list)
    skipped_pairs: int = 0
    measure_checks: list = field(default_factory=list)

    def to_csv(self) -> str:
        return series_csv({k: [row[k] for row in self.grid] for k in ("x", "y", "t", "distance", "ratio")})


@dataclass
class ErgodicityReport(ReportMixin):
    times: list
    distances: list
    stderr: list
    noise_floor: list
    fitted_slope: float
    fitted_C: float
    fit_r2: float
    n_fit_points: int
    C_bound: float
    gamma: float
    V_nu: float
    bound_holds: bool
    samples_per_t: Optional[int] = None

    def to_csv(self) -> str:
        return series_csv({"t": self.times, "distance": self.distances})


@dataclass
class MomentReport(ReportMixin):
    times: list
    values: list
    stderr: list
    zeta: float
    max_value: float
    burn_in: float
    non_increasing_after_burn_in: bool
    method: str


@dataclass
class CesaroReport(ReportMixin):
    times: list
    averages: list
    gaps: list
    target: float
    fitted_C: float
    shrinking: bool


@dataclass
class LipschitzReport(ReportMixin):
    lip_estimate: float
    bound: float
    tol: float
    passed: bool
    s1: float
    s2: float
    gamma: float


# --------------------------------------------------------------- helpers


def _linear_fit(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        return float("nan"), float("nan"), float("nan")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def _gamma_of(model: Model, gamma: Optional[float] = None) -> float:
    if gamma is not None:
        return float(gamma)
    if model.contraction_rate is not None:
        return float(model.contraction_rate)
    return estimate_contraction_rate(model)


def estimate_contraction_rate(model: CtmcModel, t_grid: Optional[Sequence[float]] = None) -> float:
    """Largest rate with ``W1(row_x, row_y) <= e^{-rate t} rho(x, y)`` on a time grid."""
    t_grid = np.asarray(t_grid if t_grid is not None else np.linspace(0.05, 5.0, 100), dtype=float)
    rho = model.metric.matrix
    n = model.n_states
    rate = math.inf
    for t in t_grid[t_grid > 0]:
        p = ctmc_transition(model, t)
        worst = 0.0
        for x in range(n):
            for y in range(x + 1, n):
                worst = max(worst, w1_discrete(p[x], p[y], model.metric) / rho[x, y])
        if worst > 0:
            rate = min(rate, -math.log(worst) / t)
    return rate


def _gaussian_mixture_w1(m1, w1, m2, w2, sd, n_grid=20001):
    """W1 between two equal-variance Gaussian mixtures via the CDF gap integral."""
    m1, m2 = np.asarray(m1, float), np.asarray(m2, float)
    if sd == 0:
        return w1_empirical_1d(m1, m2, w1, w2)
    lo = min(m1.min(), m2.min()) - 12 * sd
    hi = max(m1.max(), m2.max()) + 12 * sd
    z = np.linspace(lo, hi, n_grid)
    f1 = ndtr((z[:, None] - m1[None, :]) / sd) @ np.asarray(w1, float)
    f2 = ndtr((z[:, None] - m2[None, :]) / sd) @ np.asarray(w2, float)
    return float(trapezoid(np.abs(f1 - f2), z))


def _as_vector(model: CtmcModel, nu) -> np.ndarray:
    if isinstance(nu, DiscreteMeasure):
        return nu.probs
    if isinstance(nu, EmpiricalMeasure):
        return nu.to_vector(model.n_states)
    return np.asarray(nu, dtype=float)


# ----------------------------------------------------------- contraction


def certify_contraction(
    model: Model,
    x_grid,
    y_grid,
    t_grid,
    n_kernel_samples: Optional[int] = None,
    tol: Optional[float] = None,
    measure_pairs: Sequence = (),
    cfg: Optional[LyapunovConfig] = None,
    gamma: Optional[float] = None,
    seed: int = 0,
) -> MixingCertificate:
    """Check ``d_W(delta_x P_t, delta_y P_t) <= e^{-gamma t} rho(x, y)`` on a grid.

    OU is checked analytically unless ``n_kernel_samples`` asks for the
    sampled route; CTMC rows of ``exp(tQ)`` are compared exactly. Pairs with
    ``rho(x, y) = 0`` are skipped. ``measure_pairs`` additionally checks the
    bound ``e^{-gamma t} <V, nu1 + nu2>`` for pairs of empirical measures.
    """
    x_grid = np.asarray(x_grid)
    y_grid = np.asarray(y_grid)
    t_grid = np.asarray(t_grid, dtype=float)
    if x_grid.size == 0 or y_grid.size == 0 or t_grid.size == 0:
        raise ValidationError("grids must be nonempty")
    if np.any(t_grid < 0):
        raise ValidationError("times must be nonnegative")
    g = _gamma_of(model, gamma)
    rho = model.metric
    sampled = isinstance(model, OuModel) and n_kernel_samples is not None
    rng = aux_stream(seed, "contraction") if sampled else None
    rows = []
    skipped = 0
    worst = -math.inf
    violation_ok = True
    transitions = {float(t): ctmc_transition(model, t) for t in t_grid} if isinstance(model, CtmcModel) else None
    for t in t_grid:
        decay = math.exp(-g * t)
        for x in x_grid:
            for y in y_grid:
                d_xy = float(rho(x, y))
                if d_xy == 0:
                    skipped += 1
                    continue
                se = 0.0
                if isinstance(model, CtmcModel):
                    p = transitions[float(t)]
                    dist = w1_discrete(p[int(x)], p[int(y)], model.metric)
                elif sampled:
                    dist, se = _sampled_kernel_w1(model, float(x), float(y), float(t), n_kernel_samples, rng)
                else:
                    e = math.exp(-model.gamma * t)
                    # equal kernel variances: W1 is the mean gap
                    dist = abs(float(x) * e - float(y) * e)
                bound = decay * d_xy
                ratio = dist / bound
                allowed = 1.0 + (3.0 * se / bound if sampled else (tol if tol is not None else ANALYTIC_TOL))
                violation_ok &= ratio <= allowed
                worst = max(worst, ratio - 1.0)
                rows.append({"x": float(x), "y": float(y), "t": float(t), "distance": dist, "ratio": ratio, "stderr": se})
    fit_t = [r["t"] for r in rows if r["distance"] > 1e-300]
    fit_y = [math.log(r["distance"] / float(rho(r["x"], r["y"]))) for r in rows if r["distance"] > 1e-300]
    slope, _, r2 = _linear_fit(fit_t, fit_y)
    checks = _measure_pair_checks(model, measure_pairs, cfg, t_grid, g)
    passed = bool(violation_ok) and all(c["holds"] for c in checks)
    eff_tol = tol if tol is not None else (ANALYTIC_TOL if not sampled else float("nan"))
    return MixingCertificate(
        gamma_nominal=g,
        gamma_hat=-slope,
        fit_r2=r2,
        max_ratio_violation=worst if rows else 0.0,
        tol=eff_tol,
        passed=passed,
        method="exact" if isinstance(model, CtmcModel) else ("sampled" if sampled else "analytic"),
        grid=rows,
        skipped_pairs=skipped,
        measure_checks=checks,
    )


def _sampled_kernel_w1(model: OuModel, x, y, t, n, rng):
    e = math.exp(-model.gamma * t)
    sd = math.sqrt(float(model.kernel_var(t)))
    a = x * e + sd * rng.standard_normal(n)
    b = y * e + sd * rng.standard_normal(n)
    dist = w1_empirical_1d(a, b)
    parts = [w1_empirical_1d(pa, pb) for pa, pb in zip(np.array_split(a, N_REPLICATES), np.array_split(b, N_REPLICATES))]
    return dist, float(np.std(parts, ddof=1) / math.sqrt(N_REPLICATES))


def _measure_pair_checks(model, pairs, cfg, t_grid, g):
    out = []
    if not pairs:
        return out
    if cfg is None:
        anchor = 0 if model.kind == DISCRETE else 0.0
        cfg = LyapunovConfig(anchor, 3.0, model.metric)
    for k, (nu1, nu2) in enumerate(pairs):
        mass_v = moment(nu1, cfg, 1.0) + moment(nu2, cfg, 1.0)
        for t in t_grid:
            if isinstance(model, CtmcModel):
                p = ctmc_transition(model, t)
                dist = w1_discrete(_as_vector(model, nu1) @ p, _as_vector(model, nu2) @ p, model.metric)
            else:
                e = math.exp(-model.gamma * t)
                sd = math.sqrt(float(model.kernel_var(t)))
                dist = _gaussian_mixture_w1(nu1.atoms * e, nu1.weights, nu2.atoms * e, nu2.weights, sd)
            bound = math.exp(-g * t) * mass_v
            out.append({"pair": k, "t": float(t), "distance": dist, "bound": bound, "holds": dist <= bound + 1e-9})
    return out


# ------------------------------------------------------------ ergodicity


def certify_ergodicity(
    model: Model,
    nu,
    t_grid,
    samples_per_t: int = 100_000,
    cfg: Optional[LyapunovConfig] = None,
    seed: int = 0,
) -> ErgodicityReport:
    """Distances ``d_W(nu P_t, mu_*)`` on a time grid and a log-linear decay fit.

    The fit stops at the first point on the noise floor: 3 standard errors
    for sampled distances (never less than 3 times the distance between two
    independent invariant samples), 1e-13 for exact ones.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or np.any(np.diff(t_grid) <= 0):
        raise ValidationError("t_grid must be strictly increasing")
    mu_star = invariant_measure(model)
    g = _gamma_of(model)
    if cfg is None:
        cfg = LyapunovConfig(0 if model.kind == DISCRETE else 0.0, 3.0, model.metric)
    dists, ses, floors = [], [], []
    if isinstance(model, CtmcModel):
        v0 = _as_vector(model, nu)
        for t in t_grid:
            dists.append(w1_discrete(v0 @ ctmc_transition(model, t), mu_star.probs, model.metric))
            ses.append(0.0)
            floors.append(1e-13)
        n_used = None
    else:
        rng = aux_stream(seed, "ergodicity")
        n = int(samples_per_t)
        # error level of the estimator when the true distance is zero
        null_level = w1_empirical_1d(mu_star.sample(rng, n), mu_star.sample(rng, n))
        for t in t_grid:
            e = math.exp(-model.gamma * t)
            sd = math.sqrt(float(model.kernel_var(t)))
            a = nu.sample(rng, n) * e + sd * rng.standard_normal(n)
            b = mu_star.sample(rng, n)
            dists.append(w1_empirical_1d(a, b))
            parts = [w1_empirical_1d(pa, pb) for pa, pb in zip(np.array_split(a, N_REPLICATES), np.array_split(b, N_REPLICATES))]
            se = float(np.std(parts, ddof=1) / math.sqrt(N_REPLICATES))
            ses.append(se)
            floors.append(3.0 * max(se, null_level))
        n_used = n
    dists = np.asarray(dists)
    below = dists <= np.asarray(floors)
    # fit only the region before the first point at the noise floor
    keep = np.arange(len(dists)) < (np.argmax(below) if below.any() else len(dists))
    slope, intercept, r2 = _linear_fit(t_grid[keep], np.log(dists[keep]))
    v_nu = moment(nu, cfg, 1.0)
    c_bound = moment(mu_star, cfg, 1.0) + 1.0
    fitted_c = float(np.max(dists * np.exp(g * t_grid)) / (v_nu + 1.0))
    holds = bool(np.all(dists <= c_bound * np.exp(-g * t_grid) * (v_nu + 1.0) + np.asarray(floors)))
    return ErgodicityReport(
        times=t_grid.tolist(),
        distances=dists.tolist(),
        stderr=ses,
        noise_floor=floors,
        fitted_slope=slope,
        fitted_C=fitted_c,
        fit_r2=r2,
        n_fit_points=int(keep.sum()),
        C_bound=c_bound,
        gamma=g,
        V_nu=v_nu,
        bound_holds=holds,
        samples_per_t=n_used,
    )


# --------------------------------------------------------------- moments


def certify_moments(
    model: Model,
    mu,
    cfg: LyapunovConfig,
    t_grid,
    samples_per_t: Optional[int] = None,
    burn_in: float = 0.0,
    rtol: float = 1e-3,
    seed: int = 0,
) -> MomentReport:
    """Track ``<V^zeta, mu P_t>`` over a time grid.

    CTMC values are exact. OU values use quadrature over the Gaussian-mixture
    law ``mu P_t`` unless ``samples_per_t`` requests Monte Carlo.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    zeta = cfg.zeta
    vals, ses = [], []
    if isinstance(model, CtmcModel):
        v0 = _as_vector(model, mu)
        vz = cfg.V(np.arange(model.n_states)) ** zeta
        for t in t_grid:
            vals.append(float(v0 @ ctmc_transition(model, t) @ vz))
            ses.append(0.0)
        method = "exact"
    elif samples_per_t is None:
        a = cfg.anchor.value
        if isinstance(mu, GaussianMeasure):
            atoms, weights, var0 = np.array([mu.mean]), np.array([1.0]), mu.var
        else:
            atoms, weights, var0 = np.asarray(mu.atoms, dtype=float), mu.weights, 0.0
        for t in t_grid:
            e = math.exp(-model.gamma * t)
            sd = math.sqrt(float(model.kernel_var(t)) + var0 * e * e)
            per_atom = gaussian_expectation(lambda x: np.abs(x - a) ** zeta, atoms * e, np.full(len(atoms), sd), smooth=False)
            vals.append(float(np.dot(weights, per_atom)))
            ses.append(0.0)
        method = "quadrature"
    else:
        rng = aux_stream(seed, "moments")
        for t in t_grid:
            e = math.exp(-model.gamma * t)
            sd = math.sqrt(float(model.kernel_var(t)))
            draws = cfg.V(mu.sample(rng, samples_per_t) * e + sd * rng.standard_normal(samples_per_t)) ** zeta
            vals.append(float(draws.mean()))
            ses.append(float(draws.std(ddof=1) / math.sqrt(samples_per_t)))
        method = "monte_carlo"
    vals_a, ses_a = np.asarray(vals), np.asarray(ses)
    late = t_grid >= burn_in
    v, s = vals_a[late], ses_a[late]
    steps = v[1:] - v[:-1]
    allowed = 3.0 * np.hypot(s[1:], s[:-1]) + rtol * np.abs(v[:-1]) + 1e-12
    return MomentReport(
        times=t_grid.tolist(),
        values=vals,
        stderr=ses,
        zeta=zeta,
        max_value=float(vals_a.max()),
        burn_in=burn_in,
        non_increasing_after_burn_in=bool(np.all(steps <= allowed)),
        method=method,
    )


def ou_lyapunov_constants(model: OuModel, zeta: float):
    """Constants ``(a, delta, b)`` with ``P_t V^zeta(x) <= a e^{-delta t} V^zeta(x) + b``, ``V = |x|``.

    From ``|u + v|^z <= 2^{z-1}(|u|^z + |v|^z)`` applied to the kernel
    ``x e^{-gamma t} + sqrt(v(t)) Z``.
    """
    a = 2.0 ** (zeta - 1.0)
    abs_moment = 2.0 ** (zeta / 2.0) * gamma_fn((zeta + 1.0) / 2.0) / math.sqrt(math.pi)
    b = a * model.stationary_var ** (zeta / 2.0) * abs_moment
    return a, zeta * model.gamma, b


def lyapunov_check(model: OuModel, zeta: float, x_grid, t_grid) -> dict:
    """Evaluate ``P_t V^zeta`` on a grid against :func:`ou_lyapunov_constants`."""
    a, delta, b = ou_lyapunov_constants(model, zeta)
    worst = -math.inf
    for t in np.asarray(t_grid, dtype=float):
        e = math.exp(-model.gamma * t)
        sd = math.sqrt(float(model.kernel_var(t)))
        x = np.asarray(x_grid, dtype=float)
        pv = gaussian_expectation(lambda z: np.abs(z) ** zeta, x * e, np.full(x.shape, sd), smooth=False)
        rhs = a * math.exp(-delta * t) * np.abs(x) ** zeta + b
        worst = max(worst, float(np.max(pv - rhs)))
    return {"a": a, "delta": delta, "b": b, "max_excess": worst, "holds": worst <= 1e-9}


# ---------------------------------------------------------------- Cesaro


def cesaro_convergence(model: Model, nu, f: Observable, horizon: float, mesh: float = 0.01) -> CesaroReport:
    """Running time averages ``(1/t) int_0^t <f, nu P_s> ds`` and their gap to ``<f, mu_*>``."""
    if not horizon > 0 or not mesh > 0:
        raise ValidationError("horizon and mesh must be positive")
    s = np.linspace(0.0, horizon, int(round(horizon / mesh)) + 1)
    mu_star = invariant_measure(model)
    target, _ = measure_mean(f, mu_star)
    if isinstance(model, CtmcModel):
        v = _as_vector(model, nu).copy()
        step = ctmc_transition(model, s[1] - s[0])
        h = np.empty_like(s)
        for k in range(len(s)):
            h[k] = v @ f.values
            v = v @ step
    else:
        e = np.exp(-model.gamma * s)
        sd = np.sqrt(model.kernel_var(s))
        means = e[:, None] * nu.atoms[None, :]
        sds = np.broadcast_to(sd[:, None], means.shape)
        h = gaussian_expectation(f, means, sds, smooth=f.smooth) @ nu.weights
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (h[1:] + h[:-1]) * np.diff(s))])
    t = s[1:]
    avg = cum[1:] / t
    gaps = np.abs(avg - target)
    return CesaroReport(
        times=t.tolist(),
        averages=avg.tolist(),
        gaps=gaps.tolist(),
        target=target,
        fitted_C=float(np.max(gaps * t)),
        shrinking=bool(gaps[-1] <= gaps[0] + 1e-12),
    )


# ------------------------------------------------- Lipschitz propagation


def lipschitz_propagation_check(
    model: Model,
    f: Callable,
    lip1: float,
    lip2: float,
    s1: float,
    s2: float,
    x_grid,
    tol: float = 1e-6,
    nodes: int = 96,
    gamma: Optional[float] = None,
) -> LipschitzReport:
    """Compare the Lipschitz constant of ``F(x) = E_x f(Phi_s1, Phi_s2)`` with its bound.

    ``f`` takes two arrays (states at ``s1`` and ``s2``). The estimate is the
    largest divided difference over pairs of ``x_grid``.
    """
    if not 0 < s1 < s2:
        raise ValidationError("need 0 < s1 < s2")
    g = _gamma_of(model, gamma)
    x = np.asarray(x_grid)
    if isinstance(model, CtmcModel):
        p1 = ctmc_transition(model, s1)
        p2 = ctmc_transition(model, s2 - s1)
        idx = np.arange(model.n_states)
        table = np.asarray(f(idx[:, None], idx[None, :]), dtype=float)
        vals = (p1 @ (p2 * table).sum(axis=1))[x.astype(int)]
    else:
        z, w = gh_rule(nodes)
        e1 = math.exp(-model.gamma * s1)
        e2 = math.exp(-model.gamma * (s2 - s1))
        sd1 = math.sqrt(float(model.kernel_var(s1)))
        sd2 = math.sqrt(float(model.kernel_var(s2 - s1)))
        x1 = x.astype(float)[:, None, None] * e1 + sd1 * z[None, :, None]
        x2 = x1 * e2 + sd2 * z[None, None, :]
        vals = np.einsum("kij,i,j->k", np.asarray(f(np.broadcast_to(x1, x2.shape), x2), dtype=float), w, w)
    d = model.metric(x[:, None], x[None, :])
    dv = np.abs(vals[:, None] - vals[None, :])
    mask = d > 0
    est = float(np.max(dv[mask] / d[mask])) if mask.any() else 0.0
    bound = lip1 * math.exp(-g * s1) + lip2 * math.exp(-g * s2)
    return LipschitzReport(est, bound, tol, est <= bound + tol, s1, s2, g)
