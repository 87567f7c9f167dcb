"""Closed-form adversarial-score calculus for small feed-forward networks.

An adversarial score of a map is a non-decreasing concave upper bound on its
modulus of continuity with value 0 at t=0.  Scores compose across layers, so a
network certificate is built by alternating linear-layer gains with activation
scores and finishing with a task head; the result upper-bounds every growth
rate of the loss and hence the concave risk certificate at any budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .curves import Curve, curve_from_samples
from .errors import InvalidScoreError, UnboundedOutputError, UnknownActivationError
from .rates import CostConfig

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ScoreExpr:
    """Base class; subclasses implement value(t) on t >= 0."""

    lipschitz: float = math.inf

    def value(self, t: float) -> float:
        raise NotImplementedError

    def values(self, ts) -> np.ndarray:
        return np.array([self.value(float(t)) for t in np.asarray(ts, dtype=float)])

    def __call__(self, t: float) -> float:
        return self.value(t)


@dataclass(frozen=True)
class LinearGain(ScoreExpr):
    """F(t) = a * t (linear layers, Lipschitz maps, identity at a=1)."""

    gain: float

    def __post_init__(self):
        if self.gain < 0 or not math.isfinite(self.gain):
            raise InvalidScoreError("linear gain must be finite and non-negative")

    @property
    def lipschitz(self) -> float:
        return self.gain

    def value(self, t: float) -> float:
        return self.gain * t


def identity_score() -> LinearGain:
    return LinearGain(1.0)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class SaturatingScore(ScoreExpr):
    """Coordinatewise saturating activation acting on width-n vectors.

    With s the activation's own scalar nonlinearity, the score is
    n*[s(t/2n) - s(-t/2n)] for r=1, sqrt(n)*[s(t/2 sqrt n) - s(-t/2 sqrt n)]
    for r=2 and s(t/2) - s(-t/2) for r=inf; softmax shares the sigmoid score.
    All three are strictly below Lip * t for t > 0.
    """

    kind: str  # "sigmoid" | "tanh" | "softmax"
    width: int = 1
    r: float = math.inf

    def __post_init__(self):
        if self.kind not in ("sigmoid", "tanh", "softmax"):
            raise UnknownActivationError(self.kind)
        if self.width < 1:
            raise ValueError("width must be >= 1")
        object.__setattr__(self, "r", float(self.r))

    def _sigma(self, x):
        if self.kind == "tanh":
            return np.tanh(x)
        return _sigmoid(x)

    @property
    def lipschitz(self) -> float:
        return 1.0 if self.kind == "tanh" else 0.25

    def value(self, t: float) -> float:
        r, n = self.r, self.width
        if r == 1.0:
            scale = float(n)
        elif r == 2.0:
            scale = math.sqrt(n)
        elif math.isinf(r):
            scale = 1.0
        else:
            raise ValueError("r must be one of 1, 2, inf")
        u = t / (2.0 * scale)
        return float(scale * (self._sigma(u) - self._sigma(-u)))


@dataclass(frozen=True)
class HolderScore(ScoreExpr):
    """Gamma(t) = c * t^alpha for alpha in (0, 1]; steeper powers have no
    finite score (infinite Lipschitz growth)."""

    c: float
    alpha: float

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidScoreError("scale must be positive")
        if not 0.0 < self.alpha <= 1.0:
            raise InvalidScoreError(
                "a power loss with exponent above 1 admits no finite score")

    @property
    def lipschitz(self) -> float:
        return self.c if self.alpha == 1.0 else math.inf

    def value(self, t: float) -> float:
        return float(self.c * t ** self.alpha)


@dataclass(frozen=True)
class HuberScore(ScoreExpr):
    """Huber loss at threshold c is c-Lipschitz and its score is exactly ct."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidScoreError("threshold must be positive")

    @property
    def lipschitz(self) -> float:
        return self.c

    def value(self, t: float) -> float:
        return self.c * t


@dataclass(frozen=True)
class TruncatedScore(ScoreExpr):
    """Truncated square loss min(c^2, t^2)/2: score (2tc - t^2)/2 capped at c^2/2."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidScoreError("threshold must be positive")

    @property
    def lipschitz(self) -> float:
        return self.c

    def value(self, t: float) -> float:
        if t <= self.c:
            return (2.0 * t * self.c - t * t) / 2.0
        return self.c * self.c / 2.0


_BARRON_A = 27.0 / 256.0


def _barron_gamma(u, c):
    return 0.5 * c * c * u * u / (_BARRON_A * c * c + u * u)


def _barron_shift(t, c):
    # base point maximizing gamma(s+t)-gamma(s); root of the stationarity
    # quartic (verified against a brute-force sup to <1e-9)
    a = _BARRON_A
    inner = math.sqrt(t**4 + 4.0 * a * c * c * t * t + 16.0 * a * a * c**4)
    return (math.sqrt(3.0 * t * t + 6.0 * inner - 12.0 * a * c * c) - 3.0 * t) / 6.0


@dataclass(frozen=True)
class BarronRobustScore(ScoreExpr):
    """Smooth redescending robust loss c^2 t^2 / (2(ac^2 + t^2)), a = 27/256
    (calibrated so the loss is exactly c-Lipschitz).  The score evaluates the
    worst base-point shift in closed form."""

    c: float

    def __post_init__(self):
        if self.c <= 0:
            raise InvalidScoreError("scale must be positive")

    @property
    def lipschitz(self) -> float:
        return self.c

    def value(self, t: float) -> float:
        if t == 0.0:
            return 0.0
        s = max(_barron_shift(t, self.c), 0.0)
        return float(_barron_gamma(s + t, self.c) - _barron_gamma(s, self.c))


@dataclass(frozen=True)
class EntropyScore(ScoreExpr):
    """-t log t on [0, 1/e], constant 1/e beyond: concave, non-Lipschitz at 0,
    and its own score."""

    @property
    def lipschitz(self) -> float:
        return math.inf

    def value(self, t: float) -> float:
        if t <= 0.0:
            return 0.0
        if t >= math.exp(-1.0):
            return math.exp(-1.0)
        return float(-t * math.log(t))


@dataclass(frozen=True)
class Compose(ScoreExpr):
    outer: ScoreExpr
    inner: ScoreExpr

    @property
    def lipschitz(self) -> float:
        return self.outer.lipschitz * self.inner.lipschitz

    def value(self, t: float) -> float:
        return self.outer.value(self.inner.value(t))


@dataclass(frozen=True)
class SupConvLinear(ScoreExpr):
    """sup over tau in [0, t] of inner(t - tau) + c * tau.

    Couples the feature budget with a linear label channel.  The objective is
    concave in tau, so a golden-section search plus the two endpoints is exact
    to the shrink tolerance (and exactly right for linear inner scores, whose
    sup sits at an endpoint).
    """

    inner: ScoreExpr
    c: float

    def __post_init__(self):
        if self.c < 0 or not math.isfinite(self.c):
            raise InvalidScoreError("linear channel gain must be finite and >= 0")

    @property
    def lipschitz(self) -> float:
        return max(self.inner.lipschitz, self.c)

    def value(self, t: float) -> float:
        if t <= 0.0:
            return self.inner.value(0.0)
        obj = lambda tau: self.inner.value(t - tau) + self.c * tau
        best = max(obj(0.0), obj(t))
        lo, hi = 0.0, t
        m1 = hi - _GOLDEN * (hi - lo)
        m2 = lo + _GOLDEN * (hi - lo)
        f1, f2 = obj(m1), obj(m2)
        while hi - lo > 1e-12 * max(1.0, t):
            if f1 < f2:
                lo, m1, f1 = m1, m2, f2
                m2 = lo + _GOLDEN * (hi - lo)
                f2 = obj(m2)
            else:
                hi, m2, f2 = m2, m1, f1
                m1 = hi - _GOLDEN * (hi - lo)
                f1 = obj(m1)
        return float(max(best, f1, f2))


@dataclass(frozen=True)
class PointwiseMax(ScoreExpr):
    """max of branch scores; used where one branch dominates (e.g. the two
    signed branches of a contraction argument for symmetric activations)."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise InvalidScoreError("need at least one branch")

    @property
    def lipschitz(self) -> float:
        return max(p.lipschitz for p in self.parts)

    def value(self, t: float) -> float:
        return max(p.value(t) for p in self.parts)


# -- constructors ---------------------------------------------------------------

_SATURATING = ("sigmoid", "tanh", "softmax")
_UNIT_LIPSCHITZ = ("relu", "softplus", "logsoftmax", "identity")


def activation_score(kind: str, width_n: int = 1, r=math.inf) -> ScoreExpr:
    """Score of a coordinatewise activation layer of the given width."""
    kind = kind.lower()
    if kind in _SATURATING:
        return SaturatingScore(kind, width_n, float(r))
    if kind in _UNIT_LIPSCHITZ:
        return identity_score()
    raise UnknownActivationError(kind)


def linear_layer_score(W, r) -> LinearGain:
    return LinearGain(nn.opnorm(np.asarray(W, dtype=float), r))


def margin_loss_score(r, n_classes: int = 10) -> LinearGain:
    """Score of the margin map f_i(x) = max_{j != i} x_j - x_i.

    Uses the worst-case +/-1 sparsity pattern: each row holds one -1 (its own
    class) and one +1 (the runner-up), with all runner-ups in one column.
    """
    if n_classes < 2:
        raise ValueError("margin needs at least two classes")
    J = np.zeros((n_classes, n_classes))
    for i in range(n_classes):
        J[i, i] = -1.0
        J[i, 1 if i == 0 else 0] = 1.0
    return LinearGain(nn.opnorm(J, r))


def compose(outer: ScoreExpr, inner: ScoreExpr) -> ScoreExpr:
    """Composition (outer after inner); adjacent linear gains collapse."""
    if isinstance(outer, LinearGain) and isinstance(inner, LinearGain):
        return LinearGain(outer.gain * inner.gain)
    if isinstance(outer, LinearGain) and outer.gain == 1.0:
        return inner
    if isinstance(inner, LinearGain) and inner.gain == 1.0:
        return outer
    return Compose(outer, inner)


def classification_head_score(F: ScoreExpr, cost: CostConfig, M=math.inf) -> ScoreExpr:
    """Head score for the inner-product classification loss <y, f(x)>.

    With labels pinned (kappa = inf) the network score passes through; with a
    finite kappa the outputs must be bounded by M, and the label channel
    enters through a sup-convolution with gain M/kappa.
    """
    if math.isinf(cost.kappa):
        return F
    if math.isinf(M):
        raise UnboundedOutputError(
            "label perturbations need a finite output bound M")
    return SupConvLinear(F, M / cost.kappa)


def gamma_score(kind: str, **params) -> ScoreExpr:
    """Score library for scalar regression losses gamma(|y - f(x)|)."""
    kind = kind.lower()
    if kind == "holder":
        return HolderScore(params.get("c", 1.0), params["alpha"])
    if kind == "huber":
        return HuberScore(params["c"])
    if kind == "truncated":
        return TruncatedScore(params["c"])
    if kind in ("barron", "barronrobust"):
        return BarronRobustScore(params["c"])
    if kind in ("entropy", "entropylike"):
        return EntropyScore()
    if kind in ("identity", "abs", "absdev"):
        return identity_score()
    raise InvalidScoreError(f"unknown regression loss kind {kind!r}")


def regression_head_score(F: ScoreExpr, Gamma: ScoreExpr, cost: CostConfig) -> ScoreExpr:
    """Head score for gamma(|y - f(x)|): Gamma o F, with the label channel
    entering at unit gain through a sup-convolution when kappa is finite."""
    if math.isinf(cost.kappa):
        return compose(Gamma, F)
    return compose(Gamma, SupConvLinear(F, 1.0 / cost.kappa))


def mlp_feature_score(net: nn.Mlp, r) -> ScoreExpr:
    """Score of the network map x -> f(x) (loss head excluded)."""
    F: ScoreExpr = identity_score()
    for layer in net.layers:
        F = compose(linear_layer_score(layer.W, r), F)
        F = compose(activation_score(layer.act, width_n=layer.W.shape[0], r=r), F)
    return F


def mlp_score(net: nn.Mlp, cost: CostConfig, head: str = "classification",
              M=math.inf, gamma: ScoreExpr | None = None) -> ScoreExpr:
    """Full loss score of a network: layer composition plus the task head.

    A log-softmax output doubles the feature score: the loss difference at a
    fixed simplex label splits into the log-sum-exp shift plus the label
    pairing, and each term moves by at most the pre-head output change
    (search-based rate estimates do exceed the bare feature score on such
    nets, so the factor is not droppable).
    """
    F = mlp_feature_score(net, cost.r)
    if head == "classification":
        if net.head == "logsoftmax":
            F = compose(LinearGain(2.0), F)
        return classification_head_score(F, cost, M=M)
    if head == "regression":
        return regression_head_score(F, gamma or identity_score(), cost)
    raise ValueError(f"unknown head {head!r}")


def score_to_curve(expr: ScoreExpr, grid) -> Curve:
    """Sample a score onto a budget grid (for CSV export)."""
    grid = np.asarray(grid, dtype=float)
    return curve_from_samples(zip(grid, expr.values(grid)), tail="slope")
