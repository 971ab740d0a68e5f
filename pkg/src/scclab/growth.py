"""Growth series analytics: exponents, Fekete limits, counting inequalities, density."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .contracting import CERTIFIED, REFUTED, UNDECIDED, generator_symmetries, is_contracting_element
from .presentations import CAYLEY, SpaceSpec, inverse
from .spaces import GrowthSeries, InsufficientRadius, SpaceGraph, build_ball
from .wordproblem import normal_form

log = logging.getLogger(__name__)


@dataclass
class ExponentEstimate:
    naive: float
    lo: float
    hi: float
    fekete: float | None = None
    window: tuple = ()
    constant: float | None = None

    @property
    def estimate(self) -> float:
        return self.naive

    def to_dict(self):
        return asdict(self)


@dataclass
class InequalityReport:
    inequality: str
    range: tuple
    violations: list
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, default=str)


class HypothesisViolation(ValueError):
    def __init__(self, msg, witness):
        super().__init__(msg)
        self.witness = witness


def _counts(series):
    return list(series.counts) if isinstance(series, GrowthSeries) else list(series)


def _delta(series):
    return series.delta if isinstance(series, GrowthSeries) else 0


# ---------------------------------------------------------------- series

def count_series(ball: SpaceGraph, predicate=None, delta: int = 0, n_max: int | None = None) -> GrowthSeries:
    """a_n = ♯(selected orbit vertices in A(o, n, Δ)) for n ≤ radius − Δ.

    ``predicate`` is None (all orbit vertices), a boolean mask, a collection of ids, or a
    callable on vertex ids.
    """
    top = ball.radius - delta if n_max is None else n_max
    if top < 0 or top + delta > ball.radius:
        raise InsufficientRadius(f"series to n={top} with delta={delta} exceeds radius {ball.radius}")
    mask = ball.orbit.copy()
    if predicate is not None:
        if callable(predicate):
            sel = np.fromiter((bool(predicate(v)) for v in range(ball.n)), dtype=bool, count=ball.n)
        else:
            arr = np.asarray(predicate)
            if arr.dtype == bool:
                sel = arr
            else:
                sel = np.zeros(ball.n, dtype=bool)
                sel[np.asarray(list(predicate), dtype=np.int64)] = True
        mask &= sel
    spheres = np.bincount(ball.dist0[mask], minlength=ball.radius + 1)
    csum = np.concatenate([[0], np.cumsum(spheres)])
    counts = tuple(int(csum[min(n + delta, ball.radius) + 1] - csum[max(0, n - delta)])
                   for n in range(top + 1))
    return GrowthSeries(delta, counts, f"{ball.space.text} r={ball.radius}")


def critical_exponent(series) -> ExponentEstimate:
    """Least-squares slope of log a_n over the last third of the nonzero terms."""
    a = _counts(series)
    ns = [n for n in range(1, len(a)) if a[n] > 0]
    if len(ns) < 4:
        raise ValueError("an exponent estimate needs at least 4 nonzero terms")
    w = ns[-max(3, math.ceil(len(ns) / 3)):]
    y = np.log([a[n] for n in w])
    slope = float(np.polyfit(w, y, 1)[0])
    ratios = [(y[i + 1] - y[i]) / (w[i + 1] - w[i]) for i in range(len(w) - 1)]
    return ExponentEstimate(slope, float(min(ratios + [slope])), float(max(ratios + [slope])),
                            window=(w[0], w[-1]))


def lower_window_slope(series) -> float:
    """Slope over the first third of the nonzero terms."""
    a = _counts(series)
    ns = [n for n in range(1, len(a)) if a[n] > 0]
    w = ns[:max(2, math.ceil(len(ns) / 3))]
    return float(np.polyfit(w, np.log([a[n] for n in w]), 1)[0])


# ---------------------------------------------------------------- Fekete

def _shifted_max(a, s, k):
    vals = [a[s - j] for j in range(-k, k + 1) if 0 <= s - j < len(a)]
    return max(vals) if vals else None


def fekete_violation(series, k: int):
    """First (n, m) with a_n a_m > Σ_{|j|≤k} a_{n+m−j} in range, or None."""
    a = _counts(series)
    top = len(a) - 1 - k
    for s in range(top + 1):
        rhs = sum(a[s - j] for j in range(-k, k + 1) if 0 <= s - j < len(a))
        for n in range(s + 1):
            if a[n] * a[s - n] > rhs:
                return (n, s - n)
    return None


def minimal_fekete_k(series, k_max: int = 10) -> int:
    for k in range(k_max + 1):
        if fekete_violation(series, k) is None:
            return k
    raise HypothesisViolation(f"no k <= {k_max} satisfies the Fekete hypothesis",
                              fekete_violation(series, k_max))


def fekete_limit(series, k: int) -> ExponentEstimate:
    """Limit estimate sup_n log(a_n / c) / (n + k), with c the least constant making
    a_n a_m ≤ c · max_{|j|≤k} a_{n+m−j} on the range."""
    a = _counts(series)
    bad = fekete_violation(a, k)
    if bad is not None:
        n, m = bad
        raise HypothesisViolation(f"a_{n}·a_{m} exceeds the windowed sum at k={k}", bad)
    top = len(a) - 1 - k
    c = 0.0
    for s in range(top + 1):
        mx = _shifted_max(a, s, k)
        for n in range(s + 1):
            if a[n] and a[s - n] and mx:
                c = max(c, a[n] * a[s - n] / mx)
    pos = [n for n in range(len(a)) if a[n] > 0 and n + k > 0]
    fek = max(math.log(a[n] / c) / (n + k) for n in pos)
    const = max(a[n] * math.exp(-n * fek) for n in range(len(a)) if a[n] > 0)
    est = critical_exponent(a) if sum(1 for x in a[1:] if x > 0) >= 4 else None
    if est is None:
        return ExponentEstimate(fek, fek, fek, fek, constant=const)
    return ExponentEstimate(est.naive, min(est.lo, fek), max(est.hi, fek), fek, est.window, const)


# ---------------------------------------------------------------- counting inequalities

def check_threeunion(V_series, O_series, M: int, n_max: int | None = None,
                     unit_in_series: bool = False) -> InequalityReport:
    """♯V(n+m,Δ) ≤ Σ_{1≤k≤n, 1≤j≤m} ♯V(k,Δ)·♯O(n+m−k−j,2Δ)·♯V(j,Δ) with Δ = 4M.

    The O-terms count O ∪ {1}; pass ``unit_in_series`` when the supplied counts already
    include the unit in every annulus that contains it.
    """
    D = 4 * M
    if _delta(V_series) != D or _delta(O_series) != 2 * D:
        raise ValueError(f"V needs delta={D} and O needs delta={2 * D} for M={M}")
    V = _counts(V_series)
    O = _counts(O_series)
    top = min(len(V) - 1, len(O) + 1) if n_max is None else n_max
    if top > len(V) - 1:
        raise InsufficientRadius(f"V series has no term {top}")
    Ou = [O[i] + (0 if unit_in_series and i <= 2 * D else 1) for i in range(len(O))]
    bad = []
    for s in range(2, top + 1):
        for n in range(1, s):
            m = s - n
            rhs = 0
            for k in range(1, n + 1):
                for j in range(1, m + 1):
                    rhs += V[k] * Ou[s - k - j] * V[j]
            if V[s] > rhs:
                bad.append((n, m, V[s], rhs))
    return InequalityReport("threeunion", (2, top), bad, {"M": M, "Delta": D})


def check_supermultiplicative(series, k: int, theta: float, n_max: int | None = None) -> InequalityReport:
    """θa_n·θa_m ≤ θ·Σ_{|j|≤k} a_{n+m+j} for n, m ≥ 1 with n+m+k in range."""
    a = _counts(series)
    top = len(a) - 1 if n_max is None else n_max
    bad = []
    for s in range(2, top - k + 1):
        rhs = theta * sum(a[s + j] for j in range(-k, k + 1) if 0 <= s + j < len(a))
        for n in range(1, s):
            lhs = theta * a[n] * theta * a[s - n]
            if lhs > rhs * (1 + 1e-12):
                bad.append((n, s - n, lhs, rhs))
    return InequalityReport("supmultipl", (2, top - k), bad, {"k": k, "theta": theta})


def minimal_supermultiplicative_k(series, theta: float, k_max: int = 10) -> int:
    for k in range(k_max + 1):
        if check_supermultiplicative(series, k, theta).passed:
            return k
    raise ValueError(f"no k <= {k_max} passes")


# ---------------------------------------------------------------- pure exponential growth

@dataclass
class RatioReport:
    c1: object
    c2: object
    ratios: list
    window: tuple
    refuted: bool
    trend: str


def purely_exponential_ratio(series, omega=None, base=None, start: int | None = None) -> RatioReport:
    """Bounds of a_n·exp(−ωn) over the window; exact Fractions when ω = ln(base) for integer base."""
    a = _counts(series)
    if base is not None:
        ratios = [Fraction(a[n], Fraction(base) ** n) for n in range(len(a))]
    else:
        if omega is None or omega <= 0:
            raise ValueError("omega must be positive")
        ratios = [a[n] * math.exp(-omega * n) for n in range(len(a))]
    lo = max(1, len(a) // 3) if start is None else start
    win = ratios[lo:]
    if len(win) < 3:
        raise ValueError("window too short")
    inc = all(y > x for x, y in zip(win, win[1:]))
    dec = all(y < x for x, y in zip(win, win[1:]))
    spread = float(max(win)) / float(min(win)) if min(win) > 0 else math.inf
    refuted = (inc or dec) and spread >= 2
    trend = "to infinity" if inc and refuted else "to zero" if dec and refuted else "bounded"
    return RatioReport(min(win), max(win), win, (lo, len(a) - 1), refuted, trend)


# ---------------------------------------------------------------- Poincaré series

@dataclass
class PoincareReport:
    s: float
    partial: list
    divergent: bool
    converging: bool
    increments: list


def poincare_partial(series, s: float, N: int | None = None) -> PoincareReport:
    """Σ_{1≤n≤N} a_n exp(−s n); partial sums growing at least linearly over the last third
    are flagged divergent-at-s (a finite proxy)."""
    a = _counts(series)
    N = len(a) - 1 if N is None else N
    inc = [a[n] * math.exp(-s * n) for n in range(1, N + 1)]
    partial = list(np.cumsum(inc))
    w = inc[-max(3, math.ceil(len(inc) / 3)):]
    divergent = min(w) >= 0.5 * max(w) and min(w) > 0
    ratios = [y / x for x, y in zip(w, w[1:]) if x > 0]
    converging = bool(ratios) and max(ratios) < 1 and not divergent
    return PoincareReport(s, [float(p) for p in partial], divergent, converging, inc)


# ---------------------------------------------------------------- growth tightness

@dataclass
class TightnessReport:
    gap: float
    lo: float
    hi: float
    verdict: str
    sub: ExponentEstimate
    ambient: ExponentEstimate


def tightness_report(sub_series, ambient_series) -> TightnessReport:
    sub = sub_series if isinstance(sub_series, ExponentEstimate) else _exponent_or_zero(sub_series)
    amb = ambient_series if isinstance(ambient_series, ExponentEstimate) else critical_exponent(ambient_series)
    gap = amb.estimate - sub.estimate
    lo, hi = amb.lo - sub.hi, amb.hi - sub.lo
    return TightnessReport(gap, lo, hi, "tight" if lo > 0 else "inconclusive", sub, amb)


def _exponent_or_zero(series):
    a = _counts(series)
    if sum(1 for x in a[1:] if x > 0) < 4:
        raise ValueError("subset series has fewer than 4 nonzero terms")
    return critical_exponent(a)


# ---------------------------------------------------------------- positive density

@dataclass
class DensityReport:
    certified: int
    refuted: int
    undecided: int
    total: int
    statuses: dict

    @property
    def density(self) -> float:
        return self.certified / self.total

    @property
    def undecided_fraction(self) -> float:
        return self.undecided / self.total


def positive_density(spec, radius: int, cert_radius: int | None = None, ball: SpaceGraph | None = None,
                     c_max: int | None = None) -> DensityReport:
    """Certify every element of N(1, radius); symmetric images share one certificate."""
    cert_radius = radius if cert_radius is None else cert_radius
    ball = ball or build_ball(SpaceSpec(CAYLEY, spec), radius)
    cball = ball if cert_radius == ball.radius else build_ball(SpaceSpec(CAYLEY, spec), cert_radius)
    syms = generator_symmetries(spec)
    nf = lambda w: normal_form(spec, w).canonical
    memo = {}
    statuses = {}
    for v in ball.orbit_ids():
        w = nf(ball.word(int(v)))
        if not w:
            statuses[w] = REFUTED
            continue
        if w in memo:
            statuses[w] = memo[w]
            continue
        st = is_contracting_element(spec, w, cert_radius, ball=cball, c_max=c_max).status
        for s in syms:
            img = nf(tuple(s[l] for l in w))
            memo[img] = st
        statuses[w] = st
        # the quasi-axis of h⁻¹ is the same set when normal forms invert letterwise
        winv = nf(inverse(w))
        if winv == inverse(w):
            for s in syms:
                memo[nf(tuple(s[l] for l in winv))] = st
    counts = {CERTIFIED: 0, REFUTED: 0, UNDECIDED: 0}
    for st in statuses.values():
        counts[st] += 1
    return DensityReport(counts[CERTIFIED], counts[REFUTED], counts[UNDECIDED], len(statuses), statuses)
