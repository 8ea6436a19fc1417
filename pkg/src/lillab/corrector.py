"""Corrector functions ``chi_g = int_0^inf P_t g dt`` and the pairing form of
the asymptotic variance.

For a finite chain the corrector solves the Poisson equation ``Q chi = -g``
normalized by ``<chi, pi> = 0``. For the OU process it is a truncated time
integral of ``P_t g`` with an explicit bound on the discarded tail.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicSpline

from .errors import KindMismatchError, ValidationError
from .models import CtmcModel, OuModel, ctmc_transition, invariant_measure
from .report import ReportMixin
from .space import (
    DISCRETE,
    DiscreteMeasure,
    GaussianMeasure,
    LyapunovConfig,
    Observable,
    gaussian_expectation,
    measure_mean,
    moment,
)

CENTER_TOL = 1e-10
PANEL_GROWTH = 1.1
MAX_PANEL_MULT = 16.0


@dataclass
class CorrectorEstimate(ReportMixin):
    value: float
    truncation_T: float
    tail_bound: float
    quadrature_mesh: float
    quadrature_error: float = 0.0


def _require_centered(g: Observable, mu_star, tol: float = CENTER_TOL):
    mean, _ = measure_mean(g, mu_star)
    if abs(mean) > tol:
        raise ValidationError(
            f"observable is not centered (<g, mu_*> = {mean:.3e}); the corrector integral diverges"
        )


# ------------------------------------------------------------------- CTMC


def corrector_ctmc(model: CtmcModel, g: Observable) -> np.ndarray:
    """Solve ``Q chi = -g`` with ``<chi, pi> = 0`` (rank-one completed LU)."""
    if g.kind != DISCRETE or g.n_states != model.n_states:
        raise KindMismatchError("corrector_ctmc needs a discrete observable on the chain's states")
    pi = invariant_measure(model).probs
    _require_centered(g, DiscreteMeasure(pi))
    q = model.q_matrix
    # Q + 1 pi^T is nonsingular for an irreducible chain and shares the
    # normalized Poisson solution
    a = q + np.outer(np.ones(model.n_states), pi)
    lu = scipy.linalg.lu_factor(a)
    rhs = -np.asarray(g.values, dtype=float)
    chi = scipy.linalg.lu_solve(lu, rhs)
    for _ in range(2):
        chi += scipy.linalg.lu_solve(lu, rhs - a @ chi)
    residual = poisson_residual(model, g, chi)
    if residual >= 1e-12 * max(1.0, g.sup_norm):
        raise ValidationError(f"Poisson system is ill-conditioned (residual {residual:.2e})")
    return chi


def poisson_residual(model: CtmcModel, g: Observable, chi) -> float:
    return float(np.max(np.abs(model.q_matrix @ np.asarray(chi) + g.values)))


def corrector_ctmc_quadrature(model: CtmcModel, g: Observable, T: float = 20.0, mesh: float = 0.01):
    """Cross-check ``int_0^T exp(tQ) g dt`` by composite Simpson on a uniform grid.

    Returns ``(vector, tail_bound)``; the tail bound uses the chain's
    contraction rate and the invariant-measure constant.
    """
    n = int(round(T / mesh))
    n += n % 2
    h = T / n
    step = ctmc_transition(model, h)
    vals = np.empty((n + 1, model.n_states))
    v = np.asarray(g.values, dtype=float)
    for k in range(n + 1):
        vals[k] = v
        v = step @ v
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    integral = (h / 3.0) * (w @ vals)
    gamma = model.contraction_rate
    if gamma is None:
        from .transport import estimate_contraction_rate

        gamma = estimate_contraction_rate(model)
    cfg = LyapunovConfig(0, 3.0, model.metric)
    c = moment(invariant_measure(model), cfg, 1.0) + 1.0
    V = cfg.V(np.arange(model.n_states))
    tail = c * g.lip_const / gamma * math.exp(-gamma * T) * (V + 1.0)
    return integral, tail


# --------------------------------------------------------------------- OU


def _panel_edges(T: float, mesh: float) -> np.ndarray:
    """Geometric panels: width ``mesh`` at t=0, growing up to 16 * mesh."""
    edges = [0.0]
    w = mesh
    while edges[-1] < T:
        edges.append(min(edges[-1] + w, T))
        w = min(w * PANEL_GROWTH, MAX_PANEL_MULT * mesh)
    return np.asarray(edges)


def _simpson_semigroup(model: OuModel, g: Observable, x: np.ndarray, edges: np.ndarray, nodes: int):
    a, b = edges[:-1], edges[1:]
    ts = np.concatenate([edges, 0.5 * (a + b)])
    e = np.exp(-model.gamma * ts)
    sd = np.sqrt(model.kernel_var(ts))
    vals = gaussian_expectation(g, x[:, None] * e[None, :], np.broadcast_to(sd, (len(x), len(ts))), smooth=g.smooth, nodes=nodes)
    k = len(edges)
    f_edges, f_mid = vals[:, :k], vals[:, k:]
    return np.sum((b - a) / 6.0 * (f_edges[:, :-1] + 4.0 * f_mid + f_edges[:, 1:]), axis=1)


def ou_tail_constant(model: OuModel, anchor: float = 0.0) -> float:
    """``C = <V, mu_*> + 1`` with ``V(x) = |x - anchor|``."""
    return moment(invariant_measure(model), LyapunovConfig(anchor, 3.0), 1.0) + 1.0


def corrector_quadrature(
    model: OuModel,
    g: Observable,
    x,
    T: float = 40.0,
    mesh: float = 0.02,
    nodes: int = 64,
    anchor: float = 0.0,
    estimate_error: bool = True,
):
    """Truncated corrector ``int_0^T P_t g(x) dt`` for OU.

    Returns a :class:`CorrectorEstimate` for scalar ``x``, a list of them for
    array ``x``. The value is Richardson-extrapolated from the panel rule and
    its bisection; ``quadrature_error`` is the unextrapolated error estimate.
    """
    if not T > 0 or not mesh > 0:
        raise ValidationError("T and mesh must be positive")
    if g.kind != "real":
        raise KindMismatchError("corrector_quadrature needs a real-valued observable")
    _require_centered(g, invariant_measure(model))
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    edges = _panel_edges(T, mesh)
    coarse = _simpson_semigroup(model, g, xs, edges, nodes)
    if estimate_error:
        # bisect every panel so the Richardson factor 1/15 applies
        halved = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
        fine = _simpson_semigroup(model, g, xs, halved, nodes)
        err = np.abs(fine - coarse) / 15.0
        # extrapolated value; err then over-covers its (higher order) error
        value = fine + (fine - coarse) / 15.0
    else:
        err = np.zeros_like(coarse)
        value = coarse
    c = ou_tail_constant(model, anchor)
    tail = c * g.lip_const / model.gamma * math.exp(-model.gamma * T) * (np.abs(xs - anchor) + 1.0)
    out = [
        CorrectorEstimate(float(v), float(T), float(tb), float(mesh), float(e))
        for v, tb, e in zip(value, tail, err)
    ]
    return out[0] if scalar else out


class OuCorrector:
    """Tabulated OU corrector with cubic interpolation.

    The table covers +-``width`` invariant standard deviations; states outside
    it are evaluated by direct quadrature.
    """

    def __init__(self, model: OuModel, g: Observable, width: float = 8.0, n_points: int = 801,
                 T: float = 40.0, mesh: float = 0.02, nodes: int = 64):
        self.model = model
        self.g = g
        self.T = T
        self.mesh = mesh
        self.nodes = nodes
        sd = math.sqrt(model.stationary_var)
        self.lo, self.hi = -width * sd, width * sd
        self.grid = np.linspace(self.lo, self.hi, n_points)
        est = corrector_quadrature(model, g, self.grid, T=T, mesh=mesh, nodes=nodes)
        self.values = np.array([e.value for e in est])
        self.tail_bound = float(max(e.tail_bound for e in est))
        self.quadrature_error = float(max(e.quadrature_error for e in est))
        self._spline = CubicSpline(self.grid, self.values)
        mid = 0.5 * (self.grid[:-1] + self.grid[1:])[:: max(1, n_points // 40)]
        direct = self._direct(mid)
        self.interpolation_error = float(np.max(np.abs(self._spline(mid) - direct)))

    def _direct(self, x):
        est = corrector_quadrature(self.model, self.g, np.atleast_1d(x), T=self.T, mesh=self.mesh,
                                   nodes=self.nodes)
        return np.array([e.value for e in est])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self._spline(x)
        outside = (x < self.lo) | (x > self.hi)
        if np.any(outside):
            out = np.array(out, dtype=float, copy=True)
            out[outside] = self._direct(x[outside])
        return out

    @property
    def error_bound(self) -> float:
        return self.tail_bound + self.quadrature_error + self.interpolation_error

    def to_table(self) -> dict:
        return {
            "x": self.grid.tolist(),
            "chi": self.values.tolist(),
            "tail_bound": self.tail_bound,
            "quadrature_error": self.quadrature_error,
            "interpolation_error": self.interpolation_error,
        }


def corrector_lipschitz_bound(g: Observable, gamma: float) -> float:
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    return g.lip_const / gamma


def sigma_pairing(g: Observable, chi, mu_star, tol: float = 1e-10) -> float:
    """``2 <g chi, mu_*>``. A clearly negative value signals a bad corrector."""
    if isinstance(mu_star, DiscreteMeasure):
        chi = np.asarray(chi, dtype=float)
        if chi.shape != (mu_star.n_states,) or g.n_states != mu_star.n_states:
            raise ValidationError("observable, corrector and measure must share the state count")
        value = 2.0 * float(np.sum(mu_star.probs * g.values * chi))
    elif isinstance(mu_star, GaussianMeasure):
        value = 2.0 * mu_star.expect(lambda x: g(x) * chi(x), smooth=g.smooth)
    else:
        raise ValidationError("sigma_pairing needs an exact invariant measure")
    if value < -tol:
        warnings.warn(f"negative pairing variance {value:.3e}: corrector inconsistent with g", RuntimeWarning)
    return value
