"""State points, metrics, observables and measures shared by every module.

Two state-space kinds are supported: ``"real"`` (the real line with the
Euclidean metric) and ``"discrete"`` (states ``0..N-1`` with an explicit or
uniform metric). Values are immutable once constructed.
"""

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .errors import KindMismatchError, ValidationError

REAL = "real"
DISCRETE = "discrete"
KINDS = (REAL, DISCRETE)

WEIGHT_TOL = 1e-12
GH_NODES = 64


# ---------------------------------------------------------------- state points


@dataclass(frozen=True)
class StatePoint:
    """A single state: a finite real for ``"real"``, an index for ``"discrete"``."""

    kind: str
    value: Union[float, int]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown state kind {self.kind!r}")
        if self.kind == REAL:
            v = float(self.value)
            if not math.isfinite(v):
                raise ValidationError(f"state coordinate must be finite, got {self.value!r}")
            object.__setattr__(self, "value", v)
        else:
            if isinstance(self.value, (bool, np.bool_)) or int(self.value) != self.value:
                raise ValidationError(f"discrete state must be an integer, got {self.value!r}")
            if int(self.value) < 0:
                raise ValidationError("discrete state must be nonnegative")
            object.__setattr__(self, "value", int(self.value))

    def check_bound(self, n_states: int) -> "StatePoint":
        if self.kind == DISCRETE and self.value >= n_states:
            raise ValidationError(f"state {self.value} out of range for {n_states} states")
        return self


def as_state(x, kind: str) -> StatePoint:
    """Coerce a raw value (or an existing StatePoint) to a StatePoint of ``kind``."""
    if isinstance(x, StatePoint):
        if x.kind != kind:
            raise KindMismatchError(f"expected a {kind} state, got a {x.kind} state")
        return x
    if kind == DISCRETE and isinstance(x, (float, np.floating)) and not float(x).is_integer():
        raise KindMismatchError(f"expected a discrete state index, got {x!r}")
    return StatePoint(kind, x)


def _raw(x):
    return x.value if isinstance(x, StatePoint) else x


# --------------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Metric:
    """Ground metric on a state space.

    ``kind`` is one of ``"euclidean_1d"``, ``"discrete_uniform"`` (distance 1
    between distinct states) or ``"explicit_matrix"``. Explicit matrices are
    checked for symmetry, zero diagonal, nonnegativity and the triangle
    inequality on construction.
    """

    kind: str = "euclidean_1d"
    matrix: Optional[np.ndarray] = None
    n_states: Optional[int] = None

    def __post_init__(self):
        if self.kind == "euclidean_1d":
            return
        if self.kind == "discrete_uniform":
            if self.n_states is None or self.n_states < 1:
                raise ValidationError("discrete_uniform metric needs n_states >= 1")
            n = int(self.n_states)
            object.__setattr__(self, "matrix", 1.0 - np.eye(n))
            return
        if self.kind != "explicit_matrix":
            raise ValidationError(f"unknown metric kind {self.kind!r}")
        if self.matrix is None:
            raise ValidationError("explicit_matrix metric needs a matrix")
        m = np.array(self.matrix, dtype=float)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "n_states", m.shape[0])
        check_metric_axioms(m)

    @classmethod
    def euclidean(cls) -> "Metric":
        return cls("euclidean_1d")

    @classmethod
    def uniform(cls, n_states: int) -> "Metric":
        return cls("discrete_uniform", n_states=n_states)

    @classmethod
    def explicit(cls, matrix) -> "Metric":
        return cls("explicit_matrix", matrix=np.asarray(matrix, dtype=float))

    @classmethod
    def from_json(cls, source) -> "Metric":
        """Load ``{"states": N, "rho": [[...]]}`` from a dict, JSON string or path."""
        data = _load_json(source)
        rho = np.asarray(data["rho"], dtype=float)
        if "states" in data and rho.shape != (data["states"], data["states"]):
            raise ValidationError(
                f"rho has shape {rho.shape}, expected ({data['states']}, {data['states']})"
            )
        return cls.explicit(rho)

    def to_json(self) -> dict:
        if self.kind == "euclidean_1d":
            return {"kind": self.kind}
        return {"states": int(self.n_states), "rho": self.matrix.tolist()}

    @property
    def state_kind(self) -> str:
        return REAL if self.kind == "euclidean_1d" else DISCRETE

    def __call__(self, x, y):
        """Distance between states (vectorized over numpy arrays)."""
        x, y = _raw(x), _raw(y)
        if self.kind == "euclidean_1d":
            return np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        return self.matrix[np.asarray(x, dtype=int), np.asarray(y, dtype=int)]


def check_metric_axioms(m: np.ndarray, tol: float = 1e-12) -> None:
    """Raise ValidationError unless ``m`` is a (pseudo-free) metric matrix."""
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError("metric matrix must be square")
    if not np.all(np.isfinite(m)):
        raise ValidationError("metric matrix must be finite")
    if np.any(m < 0):
        raise ValidationError("metric matrix has negative entries")
    if np.any(np.abs(np.diag(m)) > tol):
        raise ValidationError("metric matrix must have zero diagonal")
    if not np.allclose(m, m.T, atol=tol, rtol=0):
        raise ValidationError("metric matrix must be symmetric")
    off = ~np.eye(m.shape[0], dtype=bool)
    if np.any(m[off] <= 0):
        raise ValidationError("distinct states must be at positive distance")
    # rho(i,k) <= rho(i,j) + rho(j,k) for all i, j, k
    via = m[:, :, None] + m[None, :, :]
    if np.any(m[:, None, :] > via + tol):
        raise ValidationError("metric matrix violates the triangle inequality")


def _load_json(source) -> dict:
    if isinstance(source, dict):
        return source
    if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
        return json.loads(Path(source).read_text())
    return json.loads(source)


# ---------------------------------------------------------------- observables


@dataclass(frozen=True)
class Observable:
    """A bounded Lipschitz test function with its declared constants.

    ``func`` must accept a numpy array of states and return an array of the
    same shape. ``sup_norm`` and ``lip_const`` are declarations; use
    :meth:`check_declared` to validate them on a sample grid.
    """

    func: Callable[[np.ndarray], np.ndarray]
    sup_norm: float
    lip_const: float
    kind: str = REAL
    is_centered: bool = False
    smooth: bool = True
    values: Optional[np.ndarray] = None
    name: str = "g"
    centering_stderr: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown observable kind {self.kind!r}")
        if self.sup_norm < 0 or self.lip_const < 0:
            raise ValidationError("sup_norm and lip_const must be nonnegative")

    def __call__(self, x):
        if self.kind == DISCRETE:
            return self.values[np.asarray(x, dtype=int)]
        return self.func(np.asarray(x, dtype=float))

    @property
    def n_states(self) -> Optional[int]:
        return None if self.values is None else len(self.values)

    @classmethod
    def from_values(cls, values, metric: Optional[Metric] = None, lip_const=None, name="g"):
        """Observable on a finite space given by its value vector.

        Without an explicit ``lip_const`` the tightest constant for ``metric``
        (uniform metric by default) is used.
        """
        v = np.array(values, dtype=float)
        if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
            raise ValidationError("observable values must be a finite nonempty vector")
        v.setflags(write=False)
        if lip_const is None:
            metric = metric or Metric.uniform(len(v))
            lip_const = _table_lipschitz(v, metric.matrix)
        return cls(
            func=lambda idx, _v=v: _v[np.asarray(idx, dtype=int)],
            sup_norm=float(np.max(np.abs(v))),
            lip_const=float(lip_const),
            kind=DISCRETE,
            values=v,
            name=name,
        )

    def with_scale(self, factor: float) -> "Observable":
        """``factor * g`` with constants scaled accordingly."""
        f = float(factor)
        if self.kind == DISCRETE:
            return replace(
                self,
                values=_frozen(self.values * f),
                sup_norm=self.sup_norm * abs(f),
                lip_const=self.lip_const * abs(f),
                func=lambda idx, _v=self.values * f: _v[np.asarray(idx, dtype=int)],
            )
        base = self.func
        return replace(
            self,
            func=lambda x: f * base(x),
            sup_norm=self.sup_norm * abs(f),
            lip_const=self.lip_const * abs(f),
        )

    def check_declared(self, points, metric: Optional[Metric] = None, tol: float = 1e-12) -> dict:
        """Check the sup-norm and Lipschitz declarations on all pairs of ``points``."""
        pts = np.asarray(points)
        metric = metric or (Metric.euclidean() if self.kind == REAL else Metric.uniform(self.n_states))
        vals = np.asarray(self(pts), dtype=float)
        sup_seen = float(np.max(np.abs(vals))) if vals.size else 0.0
        d = metric(pts[:, None], pts[None, :])
        dv = np.abs(vals[:, None] - vals[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, dv / np.where(d > 0, d, 1.0), 0.0)
        lip_seen = float(np.max(ratio)) if ratio.size else 0.0
        return {
            "sup_seen": sup_seen,
            "lip_seen": lip_seen,
            "sup_ok": sup_seen <= self.sup_norm + tol,
            "lip_ok": lip_seen <= self.lip_const + tol,
        }


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _table_lipschitz(values: np.ndarray, rho: np.ndarray) -> float:
    dv = np.abs(values[:, None] - values[None, :])
    off = ~np.eye(len(values), dtype=bool)
    if not off.any():
        return 0.0
    return float(np.max(dv[off] / rho[off]))


def constant_observable(c: float, kind: str = REAL, n_states: Optional[int] = None) -> Observable:
    if kind == DISCRETE:
        if n_states is None:
            raise ValidationError("a discrete constant observable needs n_states")
        return Observable.from_values(np.full(n_states, float(c)), lip_const=0.0, name=f"const({c})")
    return Observable(
        func=lambda x: np.full(np.shape(x), float(c)),
        sup_norm=abs(float(c)),
        lip_const=0.0,
        name=f"const({c})",
    )


def clipped_identity(level: float = 1.0) -> Observable:
    """``x -> min(max(x, -level), level)``; odd, Lipschitz 1, not smooth."""
    a = float(level)
    return Observable(
        func=lambda x: np.clip(x, -a, a),
        sup_norm=a,
        lip_const=1.0,
        smooth=False,
        name=f"clip({a})",
    )


def tanh_observable(scale: float = 1.0) -> Observable:
    """``x -> tanh(x / scale)``; odd, smooth, sup-norm 1, Lipschitz ``1/scale``."""
    s = float(scale)
    return Observable(func=lambda x: np.tanh(x / s), sup_norm=1.0, lip_const=1.0 / s, name=f"tanh(x/{s})")


# -------------------------------------------------------------------- measures


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finitely supported probability measure; weights are renormalized."""

    atoms: np.ndarray
    weights: np.ndarray
    kind: str = REAL

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=int if self.kind == DISCRETE else float).reshape(-1)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if atoms.size == 0:
            raise ValidationError("an empirical measure needs at least one atom")
        if atoms.shape != w.shape:
            raise ValidationError("atoms and weights must have the same length")
        if self.kind == REAL and not np.all(np.isfinite(atoms)):
            raise ValidationError("atoms must be finite")
        if self.kind == DISCRETE and np.any(atoms < 0):
            raise ValidationError("discrete atoms must be nonnegative indices")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise ValidationError("weights must be finite and strictly positive")
        w = w / w.sum()
        atoms.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, x, kind: Optional[str] = None) -> "EmpiricalMeasure":
        if isinstance(x, StatePoint):
            kind, x = x.kind, x.value
        kind = kind or (DISCRETE if isinstance(x, (int, np.integer)) else REAL)
        return cls(np.array([x]), np.ones(1), kind)

    @classmethod
    def uniform(cls, points, kind: str = REAL) -> "EmpiricalMeasure":
        pts = np.asarray(points)
        return cls(pts, np.ones(len(pts)), kind)

    @classmethod
    def from_vector(cls, probs) -> "EmpiricalMeasure":
        """Discrete measure from a probability vector; zero entries are dropped."""
        p = np.asarray(probs, dtype=float)
        keep = p > 0
        return cls(np.flatnonzero(keep), p[keep], DISCRETE)

    def to_vector(self, n_states: int) -> np.ndarray:
        if self.kind != DISCRETE:
            raise KindMismatchError("only discrete measures convert to probability vectors")
        if np.any(self.atoms >= n_states):
            raise ValidationError("atom index exceeds the number of states")
        out = np.zeros(n_states)
        np.add.at(out, self.atoms, self.weights)
        return out

    def expect(self, f) -> float:
        return float(np.dot(self.weights, f(self.atoms)))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        idx = rng.choice(len(self.atoms), size=size, p=self.weights)
        return self.atoms[idx]


@dataclass(frozen=True)
class GaussianMeasure:
    """Exact Normal(mean, var) measure on the real line."""

    mean: float
    var: float
    kind: str = field(default=REAL, init=False)

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.var)) or self.var < 0:
            raise ValidationError("Gaussian measure needs finite mean and var >= 0")

    @property
    def sd(self) -> float:
        return math.sqrt(self.var)

    def expect(self, f, smooth: bool = True, nodes: int = GH_NODES) -> float:
        return float(gaussian_expectation(f, self.mean, self.sd, smooth=smooth, nodes=nodes))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + self.sd * rng.standard_normal(size)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Exact probability vector on ``0..N-1`` (zero entries allowed)."""

    probs: np.ndarray
    kind: str = field(default=DISCRETE, init=False)

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p < -1e-15) or not np.all(np.isfinite(p)):
            raise ValidationError("probability vector must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-10:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self) -> int:
        return len(self.probs)

    def expect(self, f) -> float:
        return float(np.dot(self.probs, f(np.arange(self.n_states))))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.choice(self.n_states, size=size, p=self.probs)


Measure = Union[EmpiricalMeasure, GaussianMeasure, DiscreteMeasure]


# ---------------------------------------------------------------- quadrature

_GH_CACHE = {}
_DENSE_Z = np.linspace(-12.0, 12.0, 9601)
_DENSE_W = np.exp(-0.5 * _DENSE_Z**2) / math.sqrt(2 * math.pi) * (_DENSE_Z[1] - _DENSE_Z[0])
_DENSE_W[[0, -1]] *= 0.5


def gh_rule(nodes: int = GH_NODES):
    """Probabilists' Gauss-Hermite nodes/weights for E[f(Z)], Z ~ N(0, 1)."""
    if nodes not in _GH_CACHE:
        z, w = np.polynomial.hermite_e.hermegauss(nodes)
        _GH_CACHE[nodes] = (z, w / math.sqrt(2 * math.pi))
    return _GH_CACHE[nodes]


def gaussian_expectation(f, mean, sd, smooth: bool = True, nodes: int = GH_NODES):
    """E[f(mean + sd Z)] vectorized over array-valued ``mean``/``sd``.

    Smooth integrands use Gauss-Hermite; others a dense trapezoid rule on
    +-12 sd, which converges at second order across kinks.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    z, w = gh_rule(nodes) if smooth else (_DENSE_Z, _DENSE_W)
    x = mean[..., None] + sd[..., None] * z
    return np.asarray(f(x)) @ w


# ----------------------------------------------------------------- operations


@dataclass(frozen=True)
class LyapunovConfig:
    """Anchor and exponent of the moment condition; ``V(x) = rho(anchor, x)``."""

    anchor: StatePoint
    zeta: float = 3.0
    metric: Optional[Metric] = None

    def __post_init__(self):
        if not isinstance(self.anchor, StatePoint):
            kind = DISCRETE if isinstance(self.anchor, (int, np.integer)) else REAL
            object.__setattr__(self, "anchor", StatePoint(kind, self.anchor))
        if not self.zeta > 2:
            raise ValidationError(f"zeta must exceed 2, got {self.zeta}")
        if self.metric is None:
            if self.anchor.kind == DISCRETE:
                raise ValidationError("a discrete Lyapunov config needs a metric")
            object.__setattr__(self, "metric", Metric.euclidean())

    def V(self, x):
        return self.metric(self.anchor.value, x)


def eval_observable(obs: Observable, x) -> float:
    """Evaluate ``obs`` at a single state, checking the kind."""
    point = as_state(x, obs.kind)
    if obs.kind == DISCRETE:
        point.check_bound(obs.n_states)
    return float(obs(np.asarray(point.value)))


def measure_mean(obs: Observable, mu: Measure):
    """``<g, mu>`` and its Monte Carlo standard error (zero for exact measures)."""
    if mu.kind != obs.kind:
        raise KindMismatchError(f"{obs.kind} observable against a {mu.kind} measure")
    if isinstance(mu, GaussianMeasure):
        return mu.expect(obs, smooth=obs.smooth), 0.0
    if isinstance(mu, DiscreteMeasure):
        if obs.n_states != mu.n_states:
            raise ValidationError("observable and measure live on different state counts")
        return float(np.dot(mu.probs, obs.values)), 0.0
    vals = np.asarray(obs(mu.atoms), dtype=float)
    mean = float(np.dot(mu.weights, vals))
    # Kish effective sample size for weighted atoms
    n_eff = 1.0 / float(np.sum(mu.weights**2))
    var = float(np.dot(mu.weights, (vals - mean) ** 2))
    se = math.sqrt(var / n_eff) if n_eff > 1 else 0.0
    return mean, se


def center_observable(obs: Observable, mu_star: Measure) -> Observable:
    """Subtract ``<g, mu_star>`` so that the returned observable is centered."""
    mean, se = measure_mean(obs, mu_star)
    if obs.kind == DISCRETE:
        vals = _frozen(obs.values - mean)
        return replace(
            obs,
            values=vals,
            func=lambda idx, _v=vals: _v[np.asarray(idx, dtype=int)],
            sup_norm=obs.sup_norm + abs(mean),
            is_centered=True,
            centering_stderr=se,
        )
    base = obs.func
    return replace(
        obs,
        func=lambda x: base(x) - mean,
        sup_norm=obs.sup_norm + abs(mean),
        is_centered=True,
        centering_stderr=se,
    )


def moment(measure: Measure, cfg: LyapunovConfig, r: float) -> float:
    """``<V^r, nu>`` with ``V = rho(anchor, .)``."""
    if not r > 0:
        raise ValidationError("moment order r must be positive")
    if measure.kind != cfg.anchor.kind:
        raise KindMismatchError("measure and Lyapunov anchor have different kinds")
    if isinstance(measure, GaussianMeasure):
        a = cfg.anchor.value
        return float(gaussian_expectation(lambda x: np.abs(x - a) ** r, measure.mean, measure.sd, smooth=False))
    if isinstance(measure, DiscreteMeasure):
        v = cfg.V(np.arange(measure.n_states)) ** r
        return float(np.dot(measure.probs, v))
    return float(np.dot(measure.weights, cfg.V(measure.atoms) ** r))
