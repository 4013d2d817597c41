"""Sufficient conditions for the density process to be a true martingale.

Neither check needs the boundary analysis of the classifiers.  A positive
answer certifies the martingale property; a negative answer only means the
check cannot certify it.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .expr import DomainError, Expression, as_expression
from .field import CoefficientField, Domain, FieldError
from .logic import TriState
from .quad import QuadConfig, Verdict, l1loc_verdict

__all__ = [
    "GrowthKind",
    "GrowthReport",
    "NovikovReport",
    "SufficiencyConfig",
    "TimeWeightError",
    "benes_check",
    "elementary_inequality_check",
    "local_novikov_check",
]

SUFFICIENCY_NOTE = (
    "sufficient condition only: a violated or inconclusive result means this check cannot certify "
    "the martingale property, not that the density is a strict local martingale"
)


class TimeWeightError(ValueError):
    """The time weight is not integrable on some horizon ``[0, T]``."""


class GrowthKind(str, enum.Enum):
    SATISFIED_ON_RANGE = "satisfied_on_range"
    VIOLATED = "violated"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class SufficiencyConfig:
    quad: QuadConfig = QuadConfig()
    n_radii: int = 32
    r_min: float = 1e-3
    r_max: float = 1e6
    n_directions: int = 64
    growth_tol: float = 1.05
    horizons: tuple = (1.0, 10.0, 100.0)
    time_points: int = 9
    ball_points: int = 2001
    seed: int = 20240917

    @classmethod
    def from_dict(cls, data) -> "SufficiencyConfig":
        data = dict(data)
        quad = QuadConfig.from_dict(data.pop("quad", {}))
        if "horizons" in data:
            data["horizons"] = tuple(float(h) for h in data["horizons"])
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown sufficiency settings: {sorted(unknown)}")
        return replace(cls(quad=quad), **data)

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "quad"}
        out["horizons"] = list(self.horizons)
        out["quad"] = self.quad.to_dict()
        return out

    def radii(self):
        return np.geomspace(self.r_min, self.r_max, self.n_radii)

    def directions(self, d):
        if d == 1:
            return np.array([[1.0], [-1.0]])
        u = np.random.default_rng(self.seed).standard_normal((self.n_directions, d))
        return u / np.linalg.norm(u, axis=1, keepdims=True)


@dataclass(frozen=True)
class GrowthReport:
    kind: GrowthKind
    tested_radii: tuple
    gamma: Expression
    max_ratio: Optional[float] = None
    witness: Optional[tuple] = None
    ratio: Optional[float] = None
    drift_ratios: tuple = ()
    trace_ratios: tuple = ()
    note: str = SUFFICIENCY_NOTE

    def __post_init__(self):
        if self.kind == GrowthKind.VIOLATED and (self.witness is None or self.ratio is None):
            raise AssertionError("a violated growth bound needs a witness")

    @property
    def certifies_martingale(self) -> bool:
        return self.kind == GrowthKind.SATISFIED_ON_RANGE

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "gamma": self.gamma.source,
            "max_ratio": self.max_ratio,
            "witness": None if self.witness is None else list(self.witness),
            "ratio": self.ratio,
            "tested_radii": list(self.tested_radii),
            "drift_ratios": list(self.drift_ratios),
            "trace_ratios": list(self.trace_ratios),
            "note": self.note,
        }


def _check_gamma(gamma: Expression, cfg: SufficiencyConfig):
    if gamma.variables - {"t"}:
        raise FieldError(f"the time weight may only depend on t, got {gamma.source!r}")

    def g(t):
        return np.broadcast_to(np.asarray(gamma(t=np.asarray(t, dtype=float)), dtype=float), np.shape(t))

    for T in cfg.horizons:
        try:
            v = l1loc_verdict(g, 0.0, T, cfg.quad)
        except (DomainError, ValueError) as exc:
            raise TimeWeightError(f"time weight {gamma.source!r} cannot be integrated on [0, {T}]: {exc}") from exc
        if v.kind != Verdict.CONVERGES:
            raise TimeWeightError(
                f"time weight {gamma.source!r} is not locally integrable on [0, {T}] ({v.kind.value})")
    return g


def _shell_points(fld: CoefficientField, radius: float, dirs: np.ndarray) -> np.ndarray:
    X = radius * dirs
    if fld.domain == Domain.POSITIVE_HALF_LINE:
        X = X[X[:, 0] > 0]
    return X[:, 0] if fld.dimension == 1 else X


def benes_check(fld: CoefficientField, gamma="1", cfg: SufficiencyConfig = SufficiencyConfig()) -> GrowthReport:
    """Linear-growth test for the dominated drift ``b + c beta`` and for ``tr c``.

    On every shell ``|x| = r`` of a log grid the ratios
    ``|b + c beta|^2 / (gamma(t) (1 + r^2))`` and ``tr c / (gamma(t) (1 + r^2))``
    are maximised over sampled directions (and over sampled times when the
    coefficients depend on ``t``).  Bounded ratios certify the martingale
    property; growth by more than ``growth_tol`` between the two largest
    shells is reported with a concrete witness.
    """
    gamma = as_expression(gamma)
    g = _check_gamma(gamma, cfg)
    radii = cfg.radii()
    dirs = cfg.directions(fld.dimension)
    times = np.linspace(0.0, max(cfg.horizons), cfg.time_points)
    with np.errstate(all="ignore"):
        gv = np.asarray(gamma(t=times, strict=False), dtype=float) * np.ones_like(times)
    # where the weight is infinite the bound holds trivially
    keep = np.isfinite(gv)
    if np.any(gv[keep] <= 0):
        raise TimeWeightError(f"time weight {gamma.source!r} must be positive on [0, {max(cfg.horizons)}]")
    times, gv = times[keep], gv[keep]
    if fld.is_autonomous:
        times, gv = times[:1], gv.min(keepdims=True)
    drift_sup, trace_sup, arg = [], [], []
    try:
        with np.errstate(all="ignore"):
            for r in radii:
                X = _shell_points(fld, r, dirs)
                best_d, best_t, best_x = -math.inf, -math.inf, None
                for t, gt in zip(times, gv):
                    v = fld.dominated_drift(X, t)
                    sq = v * v if fld.dimension == 1 else np.einsum("ni,ni->n", v, v)
                    dr = sq / (gt * (1.0 + r * r))
                    tr = fld.trace_c(X, t) / (gt * (1.0 + r * r))
                    i = int(np.argmax(dr))
                    if dr[i] > best_d:
                        best_d, best_x = float(dr[i]), np.atleast_1d(X[i])
                    best_t = max(best_t, float(np.max(tr)))
                drift_sup.append(best_d)
                trace_sup.append(best_t)
                arg.append(tuple(float(v) for v in best_x))
    except DomainError:
        return GrowthReport(GrowthKind.INCONCLUSIVE, tuple(radii), gamma)
    drift_sup = np.array(drift_sup)
    trace_sup = np.array(trace_sup)
    common = dict(tested_radii=tuple(float(r) for r in radii), gamma=gamma,
                  drift_ratios=tuple(drift_sup.tolist()), trace_ratios=tuple(trace_sup.tolist()))
    if not (np.all(np.isfinite(drift_sup)) and np.all(np.isfinite(trace_sup))):
        bad = int(np.flatnonzero(~np.isfinite(drift_sup) | ~np.isfinite(trace_sup))[0])
        # an overflow at large radius is itself superlinear growth
        if bad > 0 and np.all(np.isfinite(drift_sup[:bad])) and np.all(np.isfinite(trace_sup[:bad])):
            k = bad - 1
            return GrowthReport(GrowthKind.VIOLATED, witness=arg[k], ratio=float(drift_sup[k]), **common)
        return GrowthReport(GrowthKind.INCONCLUSIVE, **common)

    tol = cfg.growth_tol
    for sup in (drift_sup, trace_sup):
        if sup[-1] > tol * sup[-2] and sup[-1] > 0:
            k = _witness_shell(sup, tol)
            if sup is drift_sup:
                return GrowthReport(GrowthKind.VIOLATED, witness=arg[k], ratio=float(sup[k]), **common)
            X = _shell_points(fld, radii[k], dirs)
            return GrowthReport(GrowthKind.VIOLATED, witness=tuple(np.atleast_1d(X[0]).tolist()),
                                ratio=float(sup[k]), **common)
    return GrowthReport(GrowthKind.SATISFIED_ON_RANGE, max_ratio=float(max(drift_sup.max(), trace_sup.max())), **common)


def _witness_shell(sup: np.ndarray, tol: float) -> int:
    """First shell of the terminal growing run whose ratio beats ``tol`` times every earlier bound (and 1)."""
    k = len(sup) - 1
    while k >= 1 and sup[k] > tol * sup[k - 1]:
        k -= 1
    ref = max(1.0, float(sup[: k + 1].max()))
    for j in range(k + 1, len(sup)):
        if sup[j] > tol * ref:
            return j
    return len(sup) - 1


@dataclass(frozen=True)
class NovikovReport:
    holds: TriState
    n: int
    bound: Optional[float]
    sup_quadratic: Optional[float]
    argmax: Optional[tuple] = None
    note: str = SUFFICIENCY_NOTE

    def to_dict(self):
        return {
            "holds": self.holds.value,
            "n": self.n,
            "bound": self.bound,
            "sup_quadratic": self.sup_quadratic,
            "argmax": None if self.argmax is None else list(self.argmax),
            "note": self.note,
        }


def _ball_samples(fld: CoefficientField, n: int, k: int, dirs):
    if fld.dimension == 1:
        if fld.domain == Domain.POSITIVE_HALF_LINE:
            return np.linspace(n / k, n, k)
        return np.linspace(-n, n, k)
    shells = np.linspace(0.0, n, max(k // 50, 8))
    return np.concatenate([np.zeros((1, fld.dimension))] + [r * dirs for r in shells[1:]])


def local_novikov_check(fld: CoefficientField, n: int, cfg: SufficiencyConfig = SufficiencyConfig()) -> NovikovReport:
    """Bound ``H`` at the exit time of the ball of radius ``n`` (capped at time ``n``).

    With ``M_n`` the supremum of ``<beta, c beta>`` over the ball (and over
    ``t <= n``), ``H <= n M_n``.  The supremum is sampled on two nested
    grids; if refining the grid changes it materially, or samples are not
    finite, the answer is inconclusive.
    """
    if int(n) != n or n < 1:
        raise ValueError("the ball index n must be a positive integer")
    n = int(n)
    dirs = cfg.directions(fld.dimension)
    times = [0.0] if fld.is_autonomous else list(np.linspace(0.0, n, cfg.time_points))

    def sup_on(k):
        X = _ball_samples(fld, n, k, dirs)
        best, where = -math.inf, None
        with np.errstate(all="ignore"):
            for t in times:
                q = fld.beta_quadratic(X, t)
                if not np.all(np.isfinite(q)):
                    return math.inf, None
                i = int(np.argmax(q))
                if q[i] > best:
                    best, where = float(q[i]), tuple(np.atleast_1d(X[i]).tolist())
        return best, where

    try:
        coarse, _ = sup_on(cfg.ball_points)
        fine, where = sup_on(4 * cfg.ball_points - 3)
    except DomainError:
        return NovikovReport(TriState.INCONCLUSIVE, n, None, None)
    if not math.isfinite(fine) or fine > 1.01 * coarse + 1e-12:
        return NovikovReport(TriState.INCONCLUSIVE, n, None, None if not math.isfinite(fine) else fine, where)
    return NovikovReport(TriState.YES, n, n * fine, fine, where)


def elementary_inequality_check(grid: Optional[Sequence[float]] = None) -> float:
    """Largest value of ``(1 - sqrt(x))^2 - (x log x - x + 1)`` over ``grid``.

    The default grid has 1001 log-spaced points in ``[1e-6, 1e6]``.  A value
    ``<= 0`` (up to rounding) confirms the inequality on the grid.
    """
    x = np.geomspace(1e-6, 1e6, 1001) if grid is None else np.asarray(grid, dtype=float)
    if x.size == 0 or not np.all(x > 0):
        raise ValueError("the grid must be non-empty and positive")
    lhs = (1.0 - np.sqrt(x)) ** 2
    rhs = x * np.log(x) - x + 1.0
    return float(np.max(lhs - rhs))
