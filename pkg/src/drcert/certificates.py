"""Per-budget robust-risk certificates assembled from rate profiles.

For a profile of growth-rate curves and an exponent p, the gap between the
robust risk at budget eps and the empirical risk is sandwiched between

* lower_bound: the weighted sum of least star-shaped majorants of the
  p-transformed per-sample rates, evaluated at eps^p, and
* upper_bound: the least concave majorant of the p-transformed maximal rate
  at eps^p.

At p = inf the lower bound is the weighted sum of raw rates at eps and the
upper bound is the right-limit of the maximal rate (conservatively, the value
at the next grid knot).  Extended arithmetic follows the 0*inf = 0 convention.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import nn
from .curves import least_concave_majorant, p_transform, star_majorant_after_power
from .rates import RateProfile


def _right_limit(curve, eps: float) -> float:
    """Value at the smallest grid knot strictly beyond eps (tail rule past the grid)."""
    idx = int(np.searchsorted(curve.t, eps, side="right"))
    if idx < curve.t.size:
        return float(curve.v[idx])
    return curve.value(eps, side="right")


def lower_bound(profile: RateProfile, p, eps: float) -> float:
    """Certified lower bound on the robust-empirical risk gap at budget eps."""
    if eps <= 0:
        raise ValueError("budget must be positive")
    total = 0.0
    for w, curve in zip(profile.weights, profile.per_sample):
        if w == 0.0:
            continue  # 0 * inf = 0
        if math.isinf(p):
            term = curve.value(eps, side="left")
        else:
            term = star_majorant_after_power(curve, float(p), eps)
        total += w * term
        if math.isinf(total):
            return math.inf
    return float(total)


def upper_bound(profile: RateProfile, p, eps: float) -> float:
    """Certified upper bound on the robust-empirical risk gap at budget eps.

    eps = 0 is allowed and reports the majorant value at 0 (which can exceed 0
    for rates with a jump at the origin).
    """
    if eps < 0:
        raise ValueError("budget must be non-negative")
    if math.isinf(p):
        return _right_limit(profile.maximal, eps)
    env = least_concave_majorant(p_transform(profile.maximal, float(p)))
    return env.value(eps ** p)


def lipschitz_certificate(L: float, eps: float) -> float:
    """Gap certificate from a global Lipschitz constant: L * eps."""
    if L < 0:
        raise ValueError("Lipschitz constant must be non-negative")
    return L * eps


def grad_dual_certificate(grads, p, eps: float, r=2.0) -> float:
    """First-order gap estimate eps * (mean ||g||_*^q)^(1/q), 1/p + 1/q = 1.

    Asymptotic in eps (not a certified bound); dual norms are taken against
    the feature norm r.
    """
    grads = [np.asarray(g, dtype=float) for g in grads]
    if not grads:
        raise ValueError("need at least one gradient")
    duals = np.array([nn.vector_norm(g, nn.dual_exponent(r)) for g in grads])
    q = nn.dual_exponent(p)
    if math.isinf(q):
        mag = float(np.max(duals))
    else:
        mag = float(np.mean(duals ** q) ** (1.0 / q))
    return eps * mag


def deterministic_generalization_gap(profiles, eps: float) -> float:
    """sup over a parameter grid of the concave certificate at p=1.

    With a finite grid this is a lower estimate of the class-level concave
    complexity; closed-form class bounds cover the upper direction.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one profile")
    return max(upper_bound(prof, 1.0, eps) for prof in profiles)


@dataclass
class OrderingResult:
    ok: bool
    first_violation: str | None = None


def p_ordering_check(profile: RateProfile, eps: float, p_list, tol: float = 1e-9) -> OrderingResult:
    """Verify that lower and upper bounds are non-increasing in p at eps.

    The p = inf slot of the upper chain is compared as the maximal rate value
    at eps (the chain's exact endpoint); the certification-grade right-limit
    convention of :func:`upper_bound` is deliberately conservative and only
    meaningful as a bound, not in this comparison.
    """
    ps = list(p_list)
    if any(ps[i] > ps[i + 1] for i in range(len(ps) - 1)):
        raise ValueError("p_list must be ascending")
    lbs, ccs = [], []
    for p in ps:
        lbs.append(lower_bound(profile, p, eps))
        if math.isinf(p):
            ccs.append(profile.maximal.value(eps, side="left"))
        else:
            ccs.append(upper_bound(profile, p, eps))
    for name, seq in (("lb", lbs), ("cc", ccs)):
        for k in range(len(ps) - 1):
            a, b = seq[k], seq[k + 1]
            if math.isinf(a) or math.isinf(b):
                if math.isinf(b) and not math.isinf(a):
                    return OrderingResult(False, f"{name}: p={ps[k]} -> p={ps[k+1]} "
                                                 f"({a} -> {b})")
                continue
            if b > a + tol * max(1.0, abs(a), abs(b)):
                return OrderingResult(False, f"{name}: p={ps[k]} -> p={ps[k+1]} "
                                             f"({a} -> {b})")
    return OrderingResult(True)


@dataclass
class CertificateReport:
    epsilon_grid: np.ndarray
    p: float
    lb: np.ndarray
    cc: np.ndarray
    lipschitz: np.ndarray
    grad_dual: np.ndarray
    empirical_risk: float
    finite: bool

    def to_json(self) -> str:
        def enc(x):
            return "inf" if math.isinf(x) else float(x)

        payload = {
            "p": enc(self.p),
            "eps": [float(e) for e in self.epsilon_grid],
            "lb": [enc(v) for v in self.lb],
            "cc": [enc(v) for v in self.cc],
            "lip": [enc(v) for v in self.lipschitz],
            "grad_dual": [enc(v) for v in self.grad_dual],
            "empirical_risk": float(self.empirical_risk),
            "finite": bool(self.finite),
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CertificateReport":
        def dec(x):
            return math.inf if x == "inf" else float(x)

        d = json.loads(text)
        return cls(
            epsilon_grid=np.array([float(e) for e in d["eps"]]),
            p=dec(d["p"]),
            lb=np.array([dec(v) for v in d["lb"]]),
            cc=np.array([dec(v) for v in d["cc"]]),
            lipschitz=np.array([dec(v) for v in d["lip"]]),
            grad_dual=np.array([dec(v) for v in d["grad_dual"]]),
            empirical_risk=float(d["empirical_risk"]),
            finite=bool(d["finite"]),
        )


def certificate_report(profile: RateProfile, p, eps_grid, empirical_risk: float,
                       L=None, grads=None, r=2.0) -> CertificateReport:
    """Evaluate all certificate columns over a budget grid."""
    eps_grid = np.asarray(eps_grid, dtype=float)
    if eps_grid.size == 0 or np.any(eps_grid <= 0) or np.any(np.diff(eps_grid) <= 0):
        raise ValueError("eps grid must be positive and ascending")
    lbs = np.array([lower_bound(profile, p, e) for e in eps_grid])
    ccs = np.array([upper_bound(profile, p, e) for e in eps_grid])
    lips = np.array([lipschitz_certificate(L, e) if L is not None else math.inf
                     for e in eps_grid])
    gds = np.array([grad_dual_certificate(grads, p, e, r) if grads is not None else 0.0
                    for e in eps_grid])
    finite = not (np.all(np.isinf(lbs)) and np.all(np.isinf(ccs)))
    return CertificateReport(eps_grid, float(p) if not math.isinf(p) else math.inf,
                             lbs, ccs, lips, gds, float(empirical_risk), finite)
