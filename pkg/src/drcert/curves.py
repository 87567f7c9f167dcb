"""Sampled univariate rate curves and their least concave / star-shaped majorants.

A :class:`Curve` is a non-decreasing, non-negative function sampled on a budget
grid starting at t=0.  Between knots a raw curve evaluates conservatively to the
right-knot value (an upper reading for non-decreasing functions); majorants are
exact on the knot set and interpolate linearly in between, which is exact for a
concave piecewise-linear function.

Beyond the last knot a curve behaves according to its ``tail``:

* ``"const"``  - constant at the last value (bounded rates, truncated domains);
* ``"slope"``  - linear extension with the last chord slope;
* ``"infinite"`` - superlinear unbounded growth.  Such a curve has no finite
  concave majorant and its star-shaped majorant diverges at every positive
  budget; ``tail_exponent`` records the asymptotic power so the p-transform can
  decide whether the divergence survives re-parameterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInputError, InvalidExponentError, NegativeBudgetError

TAILS = ("const", "slope", "infinite")

#: absolute/relative tolerance for curve value comparisons
VALUE_TOL = 1e-9
#: slope tolerance for the chord-monotonicity (concavity) test
SLOPE_TOL = 1e-12


def _close(a, b, tol=VALUE_TOL):
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class Curve:
    """Non-decreasing sampled curve on [0, inf) with first knot at t=0."""

    t: np.ndarray
    v: np.ndarray
    tail: str = "const"
    tail_exponent: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise EmptyInputError("curve needs matching non-empty knot arrays")
        if t[0] != 0.0:
            raise NegativeBudgetError("first knot must sit at t=0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("knot budgets must be strictly increasing")
        if v[0] < 0 or np.any(v[1:] < v[:-1]):
            raise ValueError("curve values must be non-negative and non-decreasing")
        if self.tail not in TAILS:
            raise ValueError(f"unknown tail kind {self.tail!r}")
        if self.tail == "infinite" and self.tail_exponent is not None:
            if self.tail_exponent <= 1.0:
                raise ValueError("an infinite tail implies superlinear growth (exponent > 1)")
        t.setflags(write=False)
        v.setflags(write=False)

    @property
    def n_knots(self) -> int:
        return self.t.size

    @property
    def tail_slope(self) -> float:
        """Slope of the last knot chord (0 for a single-knot curve)."""
        if self.t.size < 2:
            return 0.0
        return float((self.v[-1] - self.v[-2]) / (self.t[-1] - self.t[-2]))

    def value(self, t: float, side: str = "right") -> float:
        """Conservative evaluation at budget ``t``.

        ``side="right"`` returns the next knot's value between knots (an upper
        reading), ``side="left"`` the previous knot's value (a lower reading).
        Both coincide with the sample at knots.
        """
        if t < 0:
            raise NegativeBudgetError("budgets are non-negative")
        tk, vk = self.t, self.v
        if t > tk[-1]:
            if self.tail == "const":
                return float(vk[-1])
            if self.tail == "slope":
                return float(vk[-1] + self.tail_slope * (t - tk[-1]))
            return math.inf
        if side == "right":
            idx = int(np.searchsorted(tk, t, side="left"))
        elif side == "left":
            idx = int(np.searchsorted(tk, t, side="right")) - 1
        else:
            raise ValueError("side must be 'left' or 'right'")
        return float(vk[idx])


def curve_from_samples(pairs, tail: str = "const", tail_exponent: float | None = None) -> Curve:
    """Build a :class:`Curve` from (budget, value) samples.

    Samples are sorted; values are made non-decreasing by a running maximum
    (rates never decrease with budget) and clamped to be >= 0 at t=0.  A (0, 0)
    knot is prepended when the samples do not include t=0.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInputError("no samples")
    t = np.array([p[0] for p in pairs], dtype=float)
    v = np.array([p[1] for p in pairs], dtype=float)
    if np.any(t < 0):
        raise NegativeBudgetError("budgets must be non-negative")
    order = np.argsort(t, kind="stable")
    t, v = t[order], v[order]
    if np.any(np.diff(t) == 0):
        raise ValueError("duplicate budgets in samples")
    if t[0] != 0.0:
        t = np.concatenate([[0.0], t])
        v = np.concatenate([[0.0], v])
    v[0] = max(v[0], 0.0)
    v = np.maximum.accumulate(v)
    return Curve(t, np.ascontiguousarray(v), tail=tail, tail_exponent=tail_exponent)


@dataclass(frozen=True)
class ConcaveCurve:
    """Piecewise-linear concave majorant: hull knots plus a tail slope.

    ``infinite=True`` marks the everywhere-infinite majorant of a superlinearly
    growing source (finite value only at t=0).
    """

    t: np.ndarray
    v: np.ndarray
    tail_slope: float = 0.0
    infinite: bool = False

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)
        t.setflags(write=False)
        v.setflags(write=False)

    def value(self, t: float) -> float:
        if t < 0:
            raise NegativeBudgetError("budgets are non-negative")
        if self.infinite:
            return float(self.v[0]) if t == 0.0 else math.inf
        tk, vk = self.t, self.v
        if t >= tk[-1]:
            return float(vk[-1] + self.tail_slope * (t - tk[-1]))
        return float(np.interp(t, tk, vk))

    def values(self, ts) -> np.ndarray:
        return np.array([self.value(x) for x in np.asarray(ts, dtype=float)])


@dataclass
class StarCurve:
    """Least star-shaped majorant of a source curve, evaluated lazily."""

    source: Curve
    _cache: dict = field(default_factory=dict, repr=False)

    def value(self, t: float) -> float:
        key = float(t)
        if key not in self._cache:
            self._cache[key] = least_star_majorant(self.source, key)
        return self._cache[key]

    @property
    def anchors(self):
        return sorted(self._cache.items())


def star_curve(f: Curve) -> StarCurve:
    return StarCurve(f)


def _upper_hull(t: np.ndarray, v: np.ndarray):
    """Upper concave hull of the knot points; collinear points are retained."""
    ht, hv = [t[0]], [v[0]]
    for x, y in zip(t[1:], v[1:]):
        while len(ht) >= 2:
            s_in = (hv[-1] - hv[-2]) / (ht[-1] - ht[-2])
            s_out = (y - hv[-1]) / (x - ht[-1])
            if s_in < s_out:  # middle point lies strictly below the chord
                ht.pop()
                hv.pop()
            else:
                break
        ht.append(x)
        hv.append(y)
    return np.array(ht), np.array(hv)


def least_concave_majorant(f: Curve) -> ConcaveCurve:
    """Least concave majorant of the sampled curve.

    The result is the upper concave envelope of the knot points, extended
    beyond the last knot by the envelope's final slope.  A source flagged with
    an infinite tail (superlinear growth) or carrying infinite values yields
    the infinite majorant.
    """
    if f.tail == "infinite" or np.any(np.isinf(f.v)):
        return ConcaveCurve(f.t[:1], f.v[:1] if np.isfinite(f.v[0]) else np.array([0.0]),
                            tail_slope=math.inf, infinite=True)
    ht, hv = _upper_hull(f.t, f.v)
    if ht.size >= 2:
        tail = float((hv[-1] - hv[-2]) / (ht[-1] - ht[-2]))
    else:
        tail = 0.0
    return ConcaveCurve(ht, hv, tail_slope=tail)


def least_star_majorant(f: Curve, t: float) -> float:
    """Value at ``t`` of the least star-shaped majorant sup_{u>=t} t f(u)/u.

    The supremum runs over the sampled knots at or beyond ``t`` plus the tail
    of the curve; at t=0 the majorant is 0 by the through-origin convention.
    """
    value, _ = star_majorant_detail(f, t)
    return value


def star_majorant_detail(f: Curve, t: float):
    """Like :func:`least_star_majorant` but also reports tail contribution.

    Returns ``(value, tail_contributed)`` where the flag is True when the sup
    is attained beyond the sampled knots (useful to judge the truncation
    horizon).
    """
    if t < 0:
        raise NegativeBudgetError("budgets are non-negative")
    if t == 0.0:
        return 0.0, False
    if f.tail == "infinite":
        return math.inf, True
    tk, vk = f.t, f.v
    mask = tk >= t
    best = 0.0
    if np.any(mask):
        with np.errstate(invalid="ignore"):
            cand = t * vk[mask] / tk[mask]
        best = float(np.max(cand))
    tail_contributed = False
    if t > tk[-1]:
        # sup over u in [t, inf) of t*f(u)/u with f given by the tail rule;
        # for both tail kinds the value at u=t dominates the decaying branch.
        at_t = f.value(t, side="right")
        if at_t > best:
            best, tail_contributed = at_t, True
    if f.tail == "slope":
        asym = t * f.tail_slope  # limit of t*f(u)/u as u -> inf
        if asym > best:
            best, tail_contributed = asym, True
    return best, tail_contributed


def star_majorant_after_power(f: Curve, p: float, eps: float) -> float:
    """Least star-shaped majorant of t -> f(t^(1/p)), evaluated at eps^p.

    Equivalent to ``least_star_majorant(p_transform(f, p), eps**p)`` but
    computed on the original budget axis: candidates are (eps/t)^p * f(t) over
    knots t >= eps, so the t = eps candidate contributes with ratio exactly 1
    (separately powering the knots and the query can disagree by one ulp and
    silently drop that candidate).
    """
    if math.isinf(p):
        raise InvalidExponentError("p must be finite")
    if p < 1.0:
        raise InvalidExponentError("p must be >= 1")
    if eps < 0:
        raise NegativeBudgetError("budgets are non-negative")
    if eps == 0.0:
        return 0.0
    tail, expo = f.tail, f.tail_exponent
    if expo is not None and tail == "infinite":
        if expo / p > 1.0 + 1e-12:
            return math.inf
        tail = "slope"  # growth no longer superlinear after the transform
    elif tail == "infinite":
        return math.inf
    tk, vk = f.t, f.v
    mask = tk >= eps
    best = 0.0
    if np.any(mask):
        with np.errstate(invalid="ignore"):
            best = float(np.max((eps / tk[mask]) ** p * vk[mask]))
    if eps > tk[-1]:
        # inside the tail region the value at t = eps itself dominates
        if tail == "const":
            best = max(best, float(vk[-1]))
        elif tail == "slope":
            best = max(best, float(vk[-1] + f.tail_slope * (eps - tk[-1])))
    if tail == "slope" and tk.size >= 2:
        # limit of (eps/t)^p * f(t) as t -> inf along the linear extension,
        # written with ratios so the knot/query powers cannot disagree
        dv = float(vk[-1] - vk[-2])
        a = tk[-1] / eps
        b = tk[-2] / eps
        denom = a ** p - (b ** p if b > 0 else 0.0)
        if denom > 0:
            best = max(best, dv / denom)
    return best


def p_transform(f: Curve, p: float) -> Curve:
    """Re-parameterize the budget axis: returns the curve t -> f(t^(1/p)).

    Knots move to t_k^p with values unchanged, so no interpolation error is
    introduced at knots.  Tail growth of order q becomes order q/p, which
    resolves the infinite flag when q/p <= 1.
    """
    if math.isinf(p):
        raise InvalidExponentError("p must be finite for the transform")
    if p < 1.0:
        raise InvalidExponentError("p must be >= 1")
    if p == 1.0:
        return f
    t_new = np.power(f.t, p)
    tail, expo = f.tail, f.tail_exponent
    if expo is not None:
        expo = expo / p
        if tail == "infinite" and expo <= 1.0 + 1e-12:
            tail = "slope"
            expo = min(expo, 1.0)
    return Curve(t_new, f.v.copy(), tail=tail, tail_exponent=expo)


def sup_convolution_linear(F: ConcaveCurve, c: float, t: float) -> float:
    """sup over tau in [0, t] of F(t - tau) + c*tau.

    For a piecewise-linear concave ``F`` the objective is piecewise linear in
    tau, so the supremum sits at tau in {0, t} or where t - tau hits a knot;
    evaluating those candidates is exact.
    """
    if c < 0:
        raise ValueError("linear gain must be non-negative")
    if t < 0:
        raise NegativeBudgetError("budgets are non-negative")
    if F.infinite:
        return math.inf
    best = max(F.value(t), F.value(0.0) + c * t)
    inside = F.t[(F.t > 0) & (F.t < t)]
    for u in inside:
        best = max(best, F.value(float(u)) + c * (t - float(u)))
    return float(best)


def is_concave(obj, v=None, tol: float = SLOPE_TOL) -> bool:
    """Chord-slope monotonicity test (slopes non-increasing left to right).

    Accepts a :class:`ConcaveCurve` or explicit knot arrays ``(t, v)``.
    """
    if isinstance(obj, ConcaveCurve):
        if obj.infinite:
            return True
        t, vv = obj.t, obj.v
    else:
        t = np.asarray(obj, dtype=float)
        vv = np.asarray(v, dtype=float)
    if t.size <= 2:
        return True
    slopes = np.diff(vv) / np.diff(t)
    for s1, s2 in zip(slopes[:-1], slopes[1:]):
        if s2 > s1 + tol * max(1.0, abs(s1), abs(s2)):
            return False
    return True


def has_nonconcave_tail(f: Curve, factor: float = 1.0) -> bool:
    """Heuristic divergence flag: last chord slope exceeds the previous one.

    Advisory only; callers that know the asymptotic growth should set the tail
    explicitly instead.
    """
    if f.t.size < 3:
        return False
    s_last = (f.v[-1] - f.v[-2]) / (f.t[-1] - f.t[-2])
    s_prev = (f.v[-2] - f.v[-3]) / (f.t[-2] - f.t[-3])
    return bool(s_last > factor * s_prev + SLOPE_TOL)


def budget_grid(horizon: float, n: int = 256, lo_frac: float = 1e-6) -> np.ndarray:
    """Default budget grid: t=0 plus ``n`` log-spaced knots over (0, horizon]."""
    if horizon <= 0:
        raise NegativeBudgetError("horizon must be positive")
    if n < 1:
        raise EmptyInputError("need at least one positive knot")
    return np.concatenate([[0.0], np.geomspace(horizon * lo_frac, horizon, n)])


def curve_to_csv(curve: Curve, path) -> None:
    """Write knots as ``t,v`` rows ('inf' encodes infinity)."""
    lines = ["t,v"]
    for tk, vk in zip(curve.t, curve.v):
        vs = "inf" if math.isinf(vk) else repr(float(vk))
        lines.append(f"{repr(float(tk))},{vs}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def curve_from_csv(path, tail: str = "const") -> Curve:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "t,v":
            raise ValueError(f"expected 't,v' header, got {header!r}")
        pairs = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            ts, vs = line.split(",")
            pairs.append((float(ts), math.inf if vs == "inf" else float(vs)))
    return curve_from_samples(pairs, tail=tail)
