"""Scale density, scale function and boundary behaviour of a 1-d diffusion.

The diffusion has drift ``v`` and diffusion coefficient ``c`` on the real
line (normalised at 0) or on ``(0, inf)`` (normalised at 1)::

    p(x) = exp(-int_base^x 2 v / c),    s(x) = int_base^x p.

Boundary quantities never subtract large numbers: the ratios
``(s(+inf) - s(x)) / p(x)`` and ``(s(x) - s(lower)) / p(x)`` are computed
directly by :func:`~girsanov_verdict.quad.exp_tail_integral`.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .expr import DomainError
from .field import Domain
from .logic import TriState
from .quad import (
    IntegrabilityVerdict,
    QuadConfig,
    SingularityError,
    Verdict,
    cached_antiderivative,
    exp_tail_integral,
    l1loc_verdict,
)

__all__ = [
    "Boundary",
    "BoundaryVerdict",
    "EngelbertSchmidtError",
    "ExtendedReal",
    "ScaleError",
    "ScaleProfile",
    "build_scale",
    "feller_accessible",
    "is_recurrent",
]

Evaluable = Callable[[np.ndarray], np.ndarray]

# cached tables cover this span; queries beyond it integrate directly
_TABLE_SPAN = 64.0
_HALF_LINE_FLOOR = 1e-9
# p = exp(-G) overflows past this; s is reported as +-inf there
_LOG_OVERFLOW = 700.0
WEIGHT_REL_TOL = 1e-6


class ScaleError(ValueError):
    pass


class EngelbertSchmidtError(ScaleError):
    """The diffusion coefficient is not strictly positive at a probed point."""

    def __init__(self, point, value):
        super().__init__(f"diffusion coefficient must be positive; c({point!r}) = {value!r}")
        self.point = point
        self.value = value


class Boundary(str, enum.Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class ExtendedReal:
    """A boundary limit such as ``s(+inf)``: a value together with the verdict that produced it."""

    value: float
    verdict: IntegrabilityVerdict

    @property
    def finite(self) -> TriState:
        if self.verdict.kind == Verdict.CONVERGES:
            return TriState.YES
        if self.verdict.kind == Verdict.DIVERGES:
            return TriState.NO
        return TriState.INCONCLUSIVE

    def to_dict(self):
        return {"value": self.value, "verdict": self.verdict.to_dict()}


@dataclass(frozen=True)
class BoundaryVerdict:
    boundary: Boundary
    accessible: TriState
    scale_finite: TriState
    weight: IntegrabilityVerdict | None = None

    def to_dict(self):
        return {
            "boundary": self.boundary.value,
            "accessible": self.accessible.value,
            "scale_finite": self.scale_finite.value,
            "weight": None if self.weight is None else self.weight.to_dict(),
        }


def _probe_grid(domain: Domain) -> np.ndarray:
    if domain == Domain.POSITIVE_HALF_LINE:
        return np.concatenate([np.geomspace(_HALF_LINE_FLOOR, 1e6, 301), [1.0]])
    return np.concatenate([np.linspace(-20, 20, 201), np.geomspace(20, 1e6, 100), -np.geomspace(20, 1e6, 100)])


class ScaleProfile:
    """Scale objects for drift ``v`` and diffusion ``c`` on a given domain.

    Attributes ``s_upper`` and ``s_lower`` are :class:`ExtendedReal` limits;
    ``p``, ``s`` and the tail ratios are vectorised callables.
    """

    def __init__(self, v: Evaluable, c: Evaluable, domain: Domain, cfg: QuadConfig):
        self.v = v
        self.c = c
        self.domain = Domain(domain)
        self.cfg = cfg
        self.base = 1.0 if self.domain == Domain.POSITIVE_HALF_LINE else 0.0
        # nothing below this distance from the origin is ever evaluated
        self.floor = _HALF_LINE_FLOOR if self.domain == Domain.POSITIVE_HALF_LINE else 0.0
        if self.domain == Domain.POSITIVE_HALF_LINE:
            self.lower_end = 0.0
            lo = max(self.base / _TABLE_SPAN, 1e-6)
        else:
            self.lower_end = -math.inf
            lo = -_TABLE_SPAN
        self._lock = threading.Lock()
        self._ratio_cache = {Boundary.UPPER: {}, Boundary.LOWER: {}}

        try:
            self.G = cached_antiderivative(self.rate, self.base, lo, _TABLE_SPAN, cfg)
        except SingularityError as exc:
            raise ScaleError(f"2 v / c is not locally integrable near x = {exc.point!r}") from exc
        self._s_table = None

        up = exp_tail_integral(self.rate, [self.base], +1, cfg)
        if self.domain == Domain.POSITIVE_HALF_LINE:
            low = exp_tail_integral(self.rate, [self.base], -1, cfg, boundary=0.0, floor=self.floor)
        else:
            low = exp_tail_integral(self.rate, [self.base], -1, cfg)
        vu, vl = up.verdict(0), low.verdict(0)
        self.s_upper = ExtendedReal(vu.value if vu.converges else (math.inf if vu.diverges else math.nan), vu)
        self.s_lower = ExtendedReal(-vl.value if vl.converges else (-math.inf if vl.diverges else math.nan), vl)

    # -- pointwise objects -------------------------------------------------

    def rate(self, x):
        x = np.asarray(x, dtype=float)
        return 2.0 * np.asarray(self.v(x), dtype=float) / np.asarray(self.c(x), dtype=float)

    def p(self, x):
        return np.exp(-self.G(x))

    def _finite_span(self):
        """Knot range around ``base`` on which ``p`` stays finite, plus whether it was cut."""
        knots, g = self.G.knots, self.G.values
        ok = g > -_LOG_OVERFLOW
        i0 = int(np.searchsorted(knots, self.base))
        lo = i0
        while lo > 0 and ok[lo - 1]:
            lo -= 1
        hi = i0
        while hi < len(knots) - 1 and ok[hi + 1]:
            hi += 1
        return float(knots[lo]), float(knots[hi]), lo > 0, hi < len(knots) - 1

    def s(self, x):
        """Scale function; ``s(base) == 0`` exactly, ``+-inf`` where ``p`` overflows."""
        if self._s_table is None:
            with self._lock:
                if self._s_table is None:
                    lo, hi, cut_lo, cut_hi = self._finite_span()
                    self._s_table = (cached_antiderivative(self.p, self.base, lo, hi, self.cfg), cut_lo, cut_hi)
        table, cut_lo, cut_hi = self._s_table
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        below = cut_lo & (flat < table.lo)
        above = cut_hi & (flat > table.hi)
        out = np.empty(flat.shape)
        out[below] = -math.inf
        out[above] = math.inf
        rest = ~(below | above)
        if rest.any():
            out[rest] = table(flat[rest])
        return out.reshape(x.shape) if x.shape else out[0]

    # -- boundary ratios -----------------------------------------------------

    def ratio(self, x, boundary: Boundary):
        """``(s(+inf) - s(x)) / p(x)`` (upper) or ``(s(x) - s(lower)) / p(x)`` (lower).

        Evaluated without forming ``s`` or ``p``.  Points where the tail
        integral is undecided map to NaN; divergent ones to ``+inf``.
        """
        boundary = Boundary(boundary)
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        cache = self._ratio_cache[boundary]
        missing = np.array(sorted({float(v) for v in flat if float(v) not in cache}))
        if missing.size:
            if boundary == Boundary.UPPER:
                res = exp_tail_integral(self.rate, missing, +1, self.cfg)
            elif self.domain == Domain.POSITIVE_HALF_LINE:
                res = exp_tail_integral(self.rate, missing, -1, self.cfg, boundary=0.0, floor=self.floor)
            else:
                res = exp_tail_integral(self.rate, missing, -1, self.cfg)
            vals = np.where(res.status == 1, res.value, np.where(res.status == 2, np.inf, np.nan))
            with self._lock:
                cache.update(zip(missing.tolist(), vals.tolist()))
        out = np.array([cache[float(v)] for v in flat])
        return out.reshape(x.shape)

    def limit(self, boundary: Boundary) -> ExtendedReal:
        return self.s_upper if Boundary(boundary) == Boundary.UPPER else self.s_lower

    def boundary_point(self, boundary: Boundary) -> str:
        if Boundary(boundary) == Boundary.UPPER:
            return "+inf"
        return "0+" if self.domain == Domain.POSITIVE_HALF_LINE else "-inf"

    def weight_verdict(self, boundary: Boundary, factor: Evaluable | None = None) -> IntegrabilityVerdict:
        """Local integrability at ``boundary`` of ``ratio / c``, times ``factor`` if given.

        With ``factor = <beta, c beta>`` this is the H-weight; without it the
        Feller accessibility weight.
        """
        boundary = Boundary(boundary)

        def weight(x):
            r = self.ratio(x, boundary)
            cval = np.asarray(self.c(x), dtype=float)
            w = r / cval
            if factor is not None:
                f = np.asarray(factor(x), dtype=float)
                # 0 * inf counts as 0: no H-weight where beta vanishes
                w = np.where(f == 0, 0.0, w * f)
            return w

        # the integrand is itself a computed tail integral, accurate to about
        # rel_tol; asking the outer rule for more only chases that noise
        outer = replace(self.cfg, rel_tol=max(self.cfg.rel_tol, WEIGHT_REL_TOL))
        try:
            return l1loc_verdict(weight, self.boundary_point(boundary), self.base, outer, self.floor)
        except DomainError as exc:
            return IntegrabilityVerdict(Verdict.INCONCLUSIVE, diagnostic=str(exc))

    def to_dict(self):
        return {
            "domain": self.domain.value,
            "base": self.base,
            "s_upper": self.s_upper.to_dict(),
            "s_lower": self.s_lower.to_dict(),
        }


def build_scale(v: Evaluable, c: Evaluable, domain: Domain = Domain.REAL_LINE, cfg: QuadConfig = QuadConfig()) -> ScaleProfile:
    """Scale profile for drift ``v`` and diffusion ``c``.

    ``v`` must already be the drift of the law whose boundary behaviour is
    wanted (for absolute continuity questions that is ``b + c beta``).
    Raises :class:`EngelbertSchmidtError` when ``c <= 0`` at a probe point.
    """
    domain = Domain(domain)
    if domain == Domain.EUCLIDEAN:
        raise ScaleError("scale functions are one-dimensional; reduce the field first")
    grid = _probe_grid(domain)
    with np.errstate(all="ignore"):
        try:
            cv = np.broadcast_to(np.asarray(c(grid), dtype=float), grid.shape)
        except DomainError as exc:
            raise EngelbertSchmidtError(float(np.ravel(exc.points)[0]) if exc.points is not None else math.nan, math.nan) from exc
    bad = ~(cv > 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise EngelbertSchmidtError(float(grid[i]), float(cv[i]))
    return ScaleProfile(v, c, domain, cfg)


def _verdict_state(v: IntegrabilityVerdict, when_converges: TriState) -> TriState:
    if v.kind == Verdict.CONVERGES:
        return when_converges
    if v.kind == Verdict.DIVERGES:
        return ~when_converges
    return TriState.INCONCLUSIVE


def feller_accessible(profile: ScaleProfile, boundary: Boundary) -> BoundaryVerdict:
    """Feller's test at one boundary.

    Inaccessible iff ``s`` diverges there, or ``s`` is finite there and
    ``ratio / c`` is not integrable there.
    """
    boundary = Boundary(boundary)
    lim = profile.limit(boundary)
    finite = lim.finite
    if finite is TriState.NO:
        return BoundaryVerdict(boundary, TriState.NO, finite)
    if finite is TriState.INCONCLUSIVE:
        return BoundaryVerdict(boundary, TriState.INCONCLUSIVE, finite)
    w = profile.weight_verdict(boundary)
    return BoundaryVerdict(boundary, _verdict_state(w, TriState.YES), finite, w)


def is_recurrent(profile: ScaleProfile) -> TriState:
    """Yes iff ``s(+inf) = +inf`` and ``s(-inf) = -inf``."""
    if profile.domain != Domain.REAL_LINE:
        raise ScaleError("recurrence is decided here only on the real line")
    return ~profile.s_upper.finite & ~profile.s_lower.finite
