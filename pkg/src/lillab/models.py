"""Exactly solvable continuous-time Markov models.

``OuModel`` is the Ornstein-Uhlenbeck process ``dX = -gamma X dt + sigma dW``
sampled from its closed-form Gaussian kernel; ``CtmcModel`` is a finite-state
chain with generator ``Q`` whose semigroup ``exp(tQ)`` is evaluated by
uniformization.
"""

import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Union

import numpy as np

from .errors import KindMismatchError, ValidationError
from .space import (
    DISCRETE,
    GH_NODES,
    REAL,
    DiscreteMeasure,
    GaussianMeasure,
    Metric,
    Observable,
    _load_json,
    as_state,
    gaussian_expectation,
)

UNIFORMIZATION_TAIL = 1e-14
# Poisson weights e^{-lt} underflow for large lt; larger horizons use squaring.
_MAX_UNIFORMIZATION_LT = 32.0


@dataclass(frozen=True)
class KernelMoments:
    mean: float
    variance: float


@dataclass(frozen=True)
class OuModel:
    gamma: float = 1.0
    noise_sigma: float = math.sqrt(2.0)
    kind: str = field(default=REAL, init=False)

    def __post_init__(self):
        if not (self.gamma > 0 and self.noise_sigma > 0):
            raise ValidationError("OU model needs gamma > 0 and noise_sigma > 0")

    @property
    def metric(self) -> Metric:
        return Metric.euclidean()

    @property
    def stationary_var(self) -> float:
        return self.noise_sigma**2 / (2.0 * self.gamma)

    @property
    def contraction_rate(self) -> float:
        return self.gamma

    def kernel_var(self, t):
        # -expm1 keeps relative precision for small t
        return self.noise_sigma**2 * (-np.expm1(-2.0 * self.gamma * np.asarray(t, dtype=float))) / (2.0 * self.gamma)

    def to_json(self) -> dict:
        return {"kind": "ou", "gamma": self.gamma, "sigma": self.noise_sigma}


@dataclass(frozen=True, eq=False)
class CtmcModel:
    """Finite-state chain. ``gamma`` optionally declares its contraction rate."""

    q_matrix: np.ndarray
    metric: Optional[Metric] = None
    gamma: Optional[float] = None
    kind: str = field(default=DISCRETE, init=False)

    def __post_init__(self):
        q = np.array(self.q_matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] == 0:
            raise ValidationError("generator must be a nonempty square matrix")
        if not np.all(np.isfinite(q)):
            raise ValidationError("generator must be finite")
        off = ~np.eye(q.shape[0], dtype=bool)
        if np.any(q[off] < 0):
            raise ValidationError("generator off-diagonal entries must be nonnegative")
        if np.max(np.abs(q.sum(axis=1))) >= 1e-12:
            raise ValidationError("generator rows must sum to zero")
        q.setflags(write=False)
        object.__setattr__(self, "q_matrix", q)
        metric = self.metric or Metric.uniform(q.shape[0])
        if metric.kind == "euclidean_1d" or metric.n_states != q.shape[0]:
            raise ValidationError("CTMC metric must be a matrix over the chain's states")
        object.__setattr__(self, "metric", metric)
        if self.gamma is not None and not self.gamma > 0:
            raise ValidationError("declared gamma must be positive")

    @property
    def n_states(self) -> int:
        return self.q_matrix.shape[0]

    @property
    def rates(self) -> np.ndarray:
        return -np.diag(self.q_matrix)

    @cached_property
    def is_irreducible(self) -> bool:
        return _strongly_connected(self.q_matrix)

    @property
    def contraction_rate(self) -> Optional[float]:
        return self.gamma

    def to_json(self) -> dict:
        out = {"kind": "ctmc", "q": self.q_matrix.tolist(), "rho": self.metric.matrix.tolist()}
        if self.gamma is not None:
            out["gamma"] = self.gamma
        return out


Model = Union[OuModel, CtmcModel]


def two_state_chain(rate: float = 1.0) -> CtmcModel:
    """Symmetric two-state chain ``Q = [[-r, r], [r, -r]]``; spectral gap ``2r``."""
    return CtmcModel(np.array([[-rate, rate], [rate, -rate]]), Metric.uniform(2), gamma=2.0 * rate)


def _strongly_connected(q: np.ndarray) -> bool:
    adj = (q > 0) & ~np.eye(q.shape[0], dtype=bool)

    def reach(a):
        seen = {0}
        todo = deque([0])
        while todo:
            i = todo.popleft()
            for j in np.flatnonzero(a[i]):
                if j not in seen:
                    seen.add(int(j))
                    todo.append(int(j))
        return len(seen)

    n = q.shape[0]
    return reach(adj) == n and reach(adj.T) == n


def load_model(source) -> Model:
    """Build a model from ``{"kind": "ou", ...}`` or ``{"kind": "ctmc", ...}``."""
    data = _load_json(source)
    kind = data.get("kind")
    if kind == "ou":
        return OuModel(gamma=float(data.get("gamma", 1.0)), noise_sigma=float(data.get("sigma", math.sqrt(2.0))))
    if kind == "ctmc":
        q = np.asarray(data["q"], dtype=float)
        metric = Metric.explicit(data["rho"]) if "rho" in data else Metric.uniform(q.shape[0])
        return CtmcModel(q, metric, gamma=data.get("gamma"))
    raise ValidationError(f"unknown model kind {kind!r}")


# ------------------------------------------------------------------ kernels


def ou_kernel_moments(model: OuModel, x: float, t: float) -> KernelMoments:
    if t < 0:
        raise ValidationError("time must be nonnegative")
    return KernelMoments(float(x) * math.exp(-model.gamma * t), float(model.kernel_var(t)))


def ctmc_transition(model: CtmcModel, t: float) -> np.ndarray:
    """``exp(tQ)`` by uniformization, truncating the Poisson tail at 1e-14."""
    if t < 0:
        raise ValidationError("time must be nonnegative")
    return _uniformized(model.q_matrix, float(t))


def _uniformized(q: np.ndarray, t: float) -> np.ndarray:
    n = q.shape[0]
    lam = float(np.max(-np.diag(q)))
    if t == 0 or lam == 0:
        return np.eye(n)
    lt = lam * t
    if lt > _MAX_UNIFORMIZATION_LT:
        m = math.ceil(math.log2(lt / _MAX_UNIFORMIZATION_LT))
        out = _uniformized(q, t / 2**m)
        for _ in range(m):
            out = out @ out
        return _restochastize(out)
    p = np.eye(n) + q / lam
    w = math.exp(-lt)
    term = np.eye(n)
    acc = w * term
    cum = w
    k = 0
    while 1.0 - cum > UNIFORMIZATION_TAIL and k < 10_000:
        k += 1
        w *= lt / k
        term = term @ p
        acc += w * term
        cum += w
    return _restochastize(acc)


def _restochastize(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 0.0, 1.0)
    return p / p.sum(axis=1, keepdims=True)


def invariant_measure(model: Model):
    """Exact invariant law: Gaussian for OU, probability vector for a CTMC."""
    if isinstance(model, OuModel):
        return GaussianMeasure(0.0, model.stationary_var)
    if not model.is_irreducible:
        raise ValidationError("generator is reducible; the invariant measure is not unique")
    return DiscreteMeasure(_stationary_vector(model.q_matrix))


def _stationary_vector(q: np.ndarray) -> np.ndarray:
    n = q.shape[0]
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    pi = np.linalg.solve(a, b)
    # one refinement step against the full system
    r = np.concatenate([pi @ q, [pi.sum() - 1.0]])
    a_full = np.vstack([q.T, np.ones((1, n))])
    pi -= np.linalg.lstsq(a_full, r, rcond=None)[0]
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


# ---------------------------------------------------------------- semigroup


def _check_kind(model: Model, f: Observable):
    if f.kind != model.kind:
        raise KindMismatchError(f"{f.kind} observable used with a {model.kind} model")
    if model.kind == DISCRETE and f.n_states != model.n_states:
        raise ValidationError("observable and chain have different numbers of states")


def apply_semigroup(model: Model, f: Observable, t: float, x=None, nodes: int = GH_NODES):
    """``P_t f(x)``.

    CTMC: exact ``(exp(tQ) f)[x]``; ``x=None`` returns the whole vector. OU:
    quadrature against the Gaussian kernel (``x`` may be an array).
    """
    if t < 0:
        raise ValidationError("time must be nonnegative")
    _check_kind(model, f)
    if isinstance(model, CtmcModel):
        vec = ctmc_transition(model, t) @ f.values
        if x is None:
            return vec
        return vec[np.asarray(x.value if hasattr(x, "value") else x, dtype=int)]
    x = np.asarray(x.value if hasattr(x, "value") else x, dtype=float)
    mean = x * math.exp(-model.gamma * t)
    sd = math.sqrt(float(model.kernel_var(t)))
    out = gaussian_expectation(f, mean, np.full_like(mean, sd), smooth=f.smooth, nodes=nodes)
    return float(out) if np.ndim(out) == 0 else out


def apply_semigroup_mc(model: OuModel, f: Observable, t: float, x: float, mc_samples: int, rng):
    """Monte Carlo ``P_t f(x)`` for OU; returns ``(estimate, standard_error)``."""
    if mc_samples < 2:
        raise ValidationError("need at least two Monte Carlo samples")
    m = ou_kernel_moments(model, x, t)
    draws = f(m.mean + math.sqrt(m.variance) * rng.standard_normal(mc_samples))
    return float(np.mean(draws)), float(np.std(draws, ddof=1) / math.sqrt(mc_samples))


# ----------------------------------------------------------------- sampling


def sample_step(model: Model, x, dt: float, rng: np.random.Generator):
    """Draw ``Phi_{t+dt}`` given ``Phi_t = x`` from the exact transition law."""
    if dt < 0:
        raise ValidationError("dt must be nonnegative")
    point = as_state(x, model.kind)
    if isinstance(model, OuModel):
        if dt == 0:
            return point.value
        m = ou_kernel_moments(model, point.value, dt)
        return m.mean + math.sqrt(m.variance) * float(rng.standard_normal())
    point.check_bound(model.n_states)
    state, _ = ctmc_jumps(model, point.value, dt, rng)
    return state


def ctmc_jumps(model: CtmcModel, state: int, dt: float, rng: np.random.Generator):
    """Run the jump chain for ``dt`` time units; returns ``(end_state, [(time, state), ...])``."""
    q = model.q_matrix
    rates = model.rates
    t = 0.0
    events = []
    while True:
        rate = rates[state]
        if rate <= 0:
            break
        t += rng.exponential(1.0 / rate)
        if t > dt:
            break
        probs = q[state].copy()
        probs[state] = 0.0
        state = int(np.searchsorted(np.cumsum(probs / rate), rng.random(), side="right"))
        state = min(state, model.n_states - 1)
        events.append((t, state))
    return state, events
