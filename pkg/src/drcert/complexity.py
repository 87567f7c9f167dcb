"""Monte-Carlo Rademacher estimation, adversarial-gap bounds, and the calculus
of the concave complexity on finite fixtures.

Estimates are reported with standard errors so gap checks can use 3-sigma
bands.  Sign draws are shared via explicit seeds: the adversarial estimator at
eps=0 reproduces the clean one bit for bit under the same seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .certificates import upper_bound
from .oracle import DiscreteInstance, instance_rate_profile


@dataclass(frozen=True)
class ComplexityEstimate:
    value: float
    std_error: float
    n_sigma_draws: int
    class_spec: str = ""

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error must be non-negative")
        if not math.isfinite(self.value):
            raise ValueError("estimate must be finite")

    def to_json(self) -> str:
        return json.dumps({"value": self.value, "se": self.std_error,
                           "draws": self.n_sigma_draws}, sort_keys=True)


def _sigma(rng, draws, n):
    return rng.choice([-1.0, 1.0], size=(draws, n))


def rademacher_mc(loss_values, draws: int = 2000, seed: int = 0,
                  class_spec: str = "grid") -> ComplexityEstimate:
    """Sign-correlation complexity of a finite parameter grid.

    ``loss_values`` has shape (n_theta, N): loss of each grid parameter at
    each sample.  The inner sup runs over the grid (a lower estimate of the
    class value); the outer expectation is Monte Carlo over sign vectors.
    """
    L = np.atleast_2d(np.asarray(loss_values, dtype=float))
    n_theta, n = L.shape
    if n_theta == 0 or n == 0:
        raise ValueError("need a non-empty loss table")
    rng = np.random.default_rng(seed)
    sig = _sigma(rng, draws, n)
    per_draw = np.max(L @ sig.T, axis=0) / n
    value = float(np.mean(per_draw))
    se = float(np.std(per_draw, ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return ComplexityEstimate(value, se, draws, class_spec)


def adversarial_rademacher_mc(adv_loss_values, draws: int = 2000, seed: int = 0,
                              class_spec: str = "grid") -> ComplexityEstimate:
    """Same estimator on the table of eps-ball worst-case losses l + rate(eps).

    With eps = 0 the table equals the clean one and, under a shared seed, the
    estimate collapses to :func:`rademacher_mc` exactly.
    """
    return rademacher_mc(adv_loss_values, draws=draws, seed=seed,
                         class_spec=class_spec)


def rademacher_mc_linear(features, radius: float, ball_norm=2.0,
                         draws: int = 2000, seed: int = 0) -> ComplexityEstimate:
    """Exact inner sup for a linear class over a norm ball.

    For losses <theta, phi_i> with ||theta|| <= radius the per-draw sup is
    radius * ||sum_i sigma_i phi_i||_* / N (dual norm), no grid needed.
    """
    phi = np.asarray(features, dtype=float)
    n = phi.shape[0]
    rng = np.random.default_rng(seed)
    sig = _sigma(rng, draws, n)
    corr = sig @ phi  # (draws, dim)
    q = nn.dual_exponent(ball_norm)
    per_draw = radius * np.array([nn.vector_norm(row, q) for row in corr]) / n
    value = float(np.mean(per_draw))
    se = float(np.std(per_draw, ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return ComplexityEstimate(value, se, draws,
                              f"linear ball r<={radius} norm={ball_norm}")


def paired_gap(loss_values, adv_loss_values, draws: int = 2000, seed: int = 0):
    """Adversarial-clean complexity gap with a paired-draw standard error.

    Returns (gap, gap_se, clean_estimate, adversarial_estimate); the gap SE
    comes from the per-draw differences under one shared sign stream, which is
    the combined error of the two estimates.
    """
    L = np.atleast_2d(np.asarray(loss_values, dtype=float))
    A = np.atleast_2d(np.asarray(adv_loss_values, dtype=float))
    if L.shape != A.shape:
        raise ValueError("clean and adversarial tables must share a shape")
    n = L.shape[1]
    rng = np.random.default_rng(seed)
    sig = _sigma(rng, draws, n)
    clean = np.max(L @ sig.T, axis=0) / n
    adv = np.max(A @ sig.T, axis=0) / n
    diffs = adv - clean
    gap = float(np.mean(diffs))
    gap_se = float(np.std(diffs, ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    rc = ComplexityEstimate(float(np.mean(clean)),
                            float(np.std(clean, ddof=1) / math.sqrt(draws)), draws)
    arc = ComplexityEstimate(float(np.mean(adv)),
                             float(np.std(adv, ddof=1) / math.sqrt(draws)), draws)
    return gap, gap_se, rc, arc


def arc_rc_gap_bound(sup_delta_max: float, n_samples: int) -> float:
    """Class-level bound on the adversarial-clean complexity gap: sup/sqrt(N)."""
    if n_samples < 1:
        raise ValueError("need at least one sample")
    return sup_delta_max / math.sqrt(n_samples)


def acc_cc_gap_bound(sup_rate_over_space: float) -> float:
    """Gap bound for the concave complexity itself: the global rate sup.

    Unlike the sign-correlation gap this does not shrink with the sample size;
    it is an intrinsic property of the loss class over the whole space.
    """
    return float(sup_rate_over_space)


def mlp_gap_bound(layer_norms, lip_f: float, eps: float, n_samples: int) -> float:
    """Network gap bound eps * Lip^K * prod ||W_k|| / sqrt(N)."""
    norms = [float(x) for x in layer_norms]
    if any(not math.isfinite(x) for x in norms):
        raise ValueError("layer norms must be finite")
    prod = 1.0
    for x in norms:
        prod *= x
    return eps * lip_f ** len(norms) * prod / math.sqrt(n_samples)


def trend_slope(xs, ys):
    """OLS slope and its standard error (for no-trend diagnostics)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size != y.size or x.size < 3:
        raise ValueError("need at least three paired observations")
    xc = x - x.mean()
    sxx = float(np.dot(xc, xc))
    slope = float(np.dot(xc, y - y.mean()) / sxx)
    resid = y - (y.mean() + slope * xc)
    s2 = float(np.dot(resid, resid)) / (x.size - 2)
    return slope, math.sqrt(s2 / sxx)


# -- concave complexity on finite fixtures --------------------------------------

@dataclass(frozen=True)
class FiniteLossClass:
    """A loss class tabulated on a finite support: one row per parameter.

    Rates, their majorants, and hence the concave complexity are exact here,
    which makes the calculus properties checkable to numerical precision.
    """

    tables: np.ndarray        # (n_theta, n_support)
    cost: np.ndarray          # (n_support, n_support)
    atom_index: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tables", np.atleast_2d(np.asarray(self.tables, dtype=float)))
        object.__setattr__(self, "cost", np.asarray(self.cost, dtype=float))
        object.__setattr__(self, "atom_index", np.asarray(self.atom_index, dtype=int))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))

    @property
    def n_theta(self) -> int:
        return self.tables.shape[0]

    def rate_profile(self, k: int):
        inst = DiscreteInstance(self.tables[k], self.atom_index, self.weights,
                                self.cost, p=1.0, eps=1.0)
        return instance_rate_profile(inst)

    def concave_complexity(self, eps: float) -> float:
        """sup over the parameter rows of the concave certificate at eps."""
        return max(upper_bound(self.rate_profile(k), 1.0, eps)
                   for k in range(self.n_theta))

    def with_tables(self, tables) -> "FiniteLossClass":
        return FiniteLossClass(tables, self.cost, self.atom_index, self.weights)


@dataclass
class CalculusReport:
    eps_monotone: bool = True
    subadditive: bool = True
    affine_scaling: bool = True
    class_monotone: bool = True
    hull_invariant: bool = True
    contraction: bool = True
    first_violation: str | None = None

    @property
    def ok(self) -> bool:
        return (self.eps_monotone and self.subadditive and self.affine_scaling
                and self.class_monotone and self.hull_invariant and self.contraction)


def complexity_calculus_checks(fixture: FiniteLossClass, eps: float, eps2: float,
                               scale: float = 2.0, shift: float = 1.0,
                               mixture_grid: int = 11,
                               contraction=None, tol: float = 1e-9) -> CalculusReport:
    """Verify the calculus of the concave complexity on a finite fixture.

    Checks, in order: monotonicity in the budget, subadditivity, affine
    scaling, class monotonicity under subsetting, convex-hull invariance over
    pairwise mixtures on a weight grid, and (when ``contraction`` supplies
    ``(ell, lip_ell, pre_tables)``) the contraction inequality for composed
    losses ell o F.
    """
    if not 0 < eps < eps2:
        raise ValueError("need 0 < eps < eps2")
    rep = CalculusReport()

    def fail(field, msg):
        setattr(rep, field, False)
        if rep.first_violation is None:
            rep.first_violation = msg

    c_eps = fixture.concave_complexity(eps)
    c_eps2 = fixture.concave_complexity(eps2)
    if c_eps > c_eps2 + tol:
        fail("eps_monotone", f"C({eps})={c_eps} > C({eps2})={c_eps2}")
    c_sum = fixture.concave_complexity(eps + eps2)
    if c_sum > c_eps + c_eps2 + tol:
        fail("subadditive", f"C({eps}+{eps2})={c_sum} > {c_eps + c_eps2}")
    scaled = fixture.with_tables(scale * fixture.tables + shift)
    c_scaled = scaled.concave_complexity(eps)
    if abs(c_scaled - scale * c_eps) > tol * max(1.0, abs(c_scaled)):
        fail("affine_scaling", f"C(c*L+b)={c_scaled} != c*C(L)={scale * c_eps}")
    if fixture.n_theta > 1:
        sub = fixture.with_tables(fixture.tables[: max(1, fixture.n_theta // 2)])
        if sub.concave_complexity(eps) > c_eps + tol:
            fail("class_monotone", "subset complexity exceeds the class value")
    lams = np.linspace(0.0, 1.0, mixture_grid)
    mixed_rows = []
    for a in range(fixture.n_theta):
        for b in range(a + 1, fixture.n_theta):
            for lam in lams:
                mixed_rows.append(lam * fixture.tables[a] + (1 - lam) * fixture.tables[b])
    if mixed_rows:
        hull = fixture.with_tables(np.vstack([fixture.tables] + mixed_rows))
        c_hull = hull.concave_complexity(eps)
        if abs(c_hull - c_eps) > tol * max(1.0, abs(c_eps)):
            fail("hull_invariant", f"C(conv)={c_hull} != C(L)={c_eps}")
    if contraction is not None:
        ell, lip_ell, pre_tables = contraction
        pre = np.atleast_2d(np.asarray(pre_tables, dtype=float))
        composed = fixture.with_tables(np.vectorize(ell)(pre))
        plus = fixture.with_tables(pre)
        minus = fixture.with_tables(-pre)
        lhs = composed.concave_complexity(eps)
        rhs = lip_ell * max(plus.concave_complexity(eps), minus.concave_complexity(eps))
        if lhs > rhs + tol * max(1.0, abs(rhs)):
            fail("contraction", f"C(ell o F)={lhs} > Lip*C(F+-)={rhs}")
    return rep
