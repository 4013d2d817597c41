"""Martingale and uniform-integrability verdicts for one-dimensional fields.

For a field ``(b, c, beta)`` the density ``Z`` between ``P`` (drift ``b``)
and ``Q*`` (drift ``v = b + c beta``) is classified from the scale of ``v``:

=========  ==========================================================
plus1      ``s(+inf) = +inf``
plus2      ``s(+inf)`` finite and ``ratio/c`` not integrable at ``+inf``
plus3      ``s(+inf)`` finite and ``ratio * beta^2`` integrable at ``+inf``
=========  ==========================================================

and the mirrored ``minus`` family at the lower boundary.  ``Z`` is a
martingale iff one plus and one minus condition hold; it is uniformly
integrable iff ``beta = 0`` a.e. or one of ``plus3 & minus1``,
``plus1 & minus3``, ``plus3 & minus3`` holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .field import CoefficientField, Domain, FieldError
from .logic import TriState, any_of
from .quad import IntegrabilityVerdict, QuadConfig, Verdict, improper_integral
from .scale import Boundary, EngelbertSchmidtError, ScaleProfile, build_scale

__all__ = [
    "ACVerdict",
    "CONDITIONS",
    "CONDITION_LABELS",
    "ClassifyConfig",
    "ConditionBattery",
    "ESReport",
    "battery_from_profile",
    "beta_vanishes",
    "classify",
    "classify_global",
    "classify_local",
    "classify_reverse",
    "condition_battery",
    "local_from_battery",
    "global_from_battery",
    "singularity_set_probe",
    "two_sided_integrable",
    "validate_engelbert_schmidt",
]

CONDITIONS = ("plus1", "plus2", "plus3", "minus1", "minus2", "minus3")

CONDITION_LABELS = {
    "plus1": "s(+inf) = +inf",
    "plus2": "s(+inf) finite and ratio/c not integrable at +inf",
    "plus3": "s(+inf) finite and ratio * <beta, c beta> / c integrable at +inf",
    "minus1": "s at the lower end is -inf",
    "minus2": "s at the lower end finite and ratio/c not integrable there",
    "minus3": "s at the lower end finite and ratio * <beta, c beta> / c integrable there",
}

BOUNDARY_NOTE = (
    "plus3/minus3 test integrability of the H-weight at the boundary of their own family "
    "(+inf for plus, the lower end for minus); the alternative reading that places both at "
    "-inf is not used"
)


@dataclass(frozen=True)
class ClassifyConfig:
    quad: QuadConfig = QuadConfig()
    es_half_width: float = 20.0
    es_points: int = 201
    r_max: float = 1e6
    beta_points: int = 10_000

    @classmethod
    def from_dict(cls, data) -> "ClassifyConfig":
        data = dict(data)
        quad = QuadConfig.from_dict(data.pop("quad", {}))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown classify settings: {sorted(unknown)}")
        return replace(cls(quad=quad), **data)

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "quad"}
        out["quad"] = self.quad.to_dict()
        return out

    def es_grid(self, suspicious=()) -> np.ndarray:
        g = np.linspace(-self.es_half_width, self.es_half_width, self.es_points)
        return np.unique(np.concatenate([g, np.asarray(suspicious, dtype=float)]))


@dataclass(frozen=True)
class Condition:
    state: TriState
    evidence: Optional[IntegrabilityVerdict] = None
    note: str = ""

    def to_dict(self):
        return {
            "state": self.state.value,
            "evidence": None if self.evidence is None else self.evidence.to_dict(),
            "note": self.note,
        }


@dataclass(frozen=True)
class ConditionBattery:
    plus1: Condition
    plus2: Condition
    plus3: Condition
    minus1: Condition
    minus2: Condition
    minus3: Condition
    s_upper: float = math.nan
    s_lower: float = math.nan

    def states(self) -> dict:
        return {name: getattr(self, name).state for name in CONDITIONS}

    def rows(self):
        for name in CONDITIONS:
            cond = getattr(self, name)
            ev = cond.evidence
            yield {
                "condition": name,
                "state": cond.state.value,
                "evidence": "" if ev is None else ev.kind.value,
                "value": math.nan if ev is None else ev.value,
                "note": cond.note,
            }

    def to_dict(self):
        out = {name: getattr(self, name).to_dict() for name in CONDITIONS}
        out["s_upper"] = self.s_upper
        out["s_lower"] = self.s_lower
        return out


@dataclass(frozen=True)
class ACVerdict:
    """``local_ac``: Z is a martingale; ``global_ac``: Z is uniformly integrable."""

    local_ac: TriState
    global_ac: TriState
    battery: Optional[ConditionBattery]
    notes: tuple = ()

    def __post_init__(self):
        if self.global_ac is TriState.YES and self.local_ac is not TriState.YES:
            raise AssertionError("uniform integrability without the martingale property")

    def to_dict(self):
        return {
            "local_ac": self.local_ac.value,
            "global_ac": self.global_ac.value,
            "battery": None if self.battery is None else self.battery.to_dict(),
            "notes": list(self.notes),
        }


@dataclass(frozen=True)
class ESReport:
    passed: TriState
    failures: tuple = ()  # (point, reason)
    checked_points: int = 0

    def to_dict(self):
        return {
            "passed": self.passed.value,
            "failures": [{"point": p, "reason": r} for p, r in self.failures],
            "checked_points": self.checked_points,
        }


# ---------------------------------------------------------------------------
# local integrability around interior points


def two_sided_integrable(f: Callable, x: float, delta: float, cfg: QuadConfig) -> IntegrabilityVerdict:
    """Is ``|f|`` integrable on ``[x - delta, x + delta]``?  Windows shrink toward ``x`` from both sides."""
    g = lambda y: np.abs(np.asarray(f(y), dtype=float))  # noqa: E731
    total = 0.0
    err = 0.0
    for side in (-1.0, 1.0):
        v = improper_integral(g, x + side * delta, x, cfg)
        if not v.converges:
            return v
        total += v.value
        err += v.err
    return IntegrabilityVerdict(Verdict.CONVERGES, total, err, (total,))


def _safe(f):
    def wrapped(y):
        with np.errstate(all="ignore"):
            return f(y)
    return wrapped


def validate_engelbert_schmidt(fld: CoefficientField, cfg: ClassifyConfig = ClassifyConfig()) -> ESReport:
    """Check ``c > 0``, ``(1 + |b| + |b + c beta|) / c`` and ``beta^2`` locally integrable on the probe grid.

    A window around every grid point covers the whole probed interval, so a
    singularity between grid points is also caught (as a failure or an
    inconclusive window).
    """
    if fld.dimension != 1 or fld.domain != Domain.REAL_LINE:
        raise FieldError("Engelbert-Schmidt validation applies to one-dimensional fields on the real line")
    grid = cfg.es_grid(fld.suspicious_points)
    failures = []
    undecided = []
    with np.errstate(all="ignore"):
        cv = fld.diffusion(grid, strict=False)
    for xi, ci in zip(grid, cv):
        if not ci > 0:
            failures.append((float(xi), f"c = {ci!r} is not positive"))
    if failures:
        return ESReport(TriState.NO, tuple(failures[:1]), len(grid))

    def es_density(y):
        b = fld.drift(y, strict=False)
        v = fld.dominated_drift(y, strict=False)
        return (1 + np.abs(b) + np.abs(v)) / fld.diffusion(y, strict=False)

    def beta_sq(y):
        return fld.beta_at(y, strict=False) ** 2

    spacing = np.diff(grid)
    for i, xi in enumerate(grid):
        left = spacing[i - 1] if i > 0 else spacing[0]
        right = spacing[i] if i < len(spacing) else spacing[-1]
        delta = 0.5 * min(left, right)
        for name, fn in (("(1+|b|+|b+c beta|)/c", es_density), ("beta^2", beta_sq)):
            v = two_sided_integrable(_safe(fn), float(xi), float(delta), cfg.quad)
            if v.diverges:
                failures.append((float(xi), f"{name} is not locally integrable"))
                break
            if v.inconclusive:
                undecided.append((float(xi), f"{name}: {v.diagnostic}"))
                break
        if failures:
            break
    if failures:
        return ESReport(TriState.NO, tuple(failures), len(grid))
    if undecided:
        return ESReport(TriState.INCONCLUSIVE, tuple(undecided[:5]), len(grid))
    return ESReport(TriState.YES, (), len(grid))


def singularity_set_probe(f: Callable, c: Callable, grid: Sequence[float], cfg: QuadConfig = QuadConfig()) -> list:
    """Grid points around which ``f / c^2`` is not locally integrable (two-sided, shrinking windows).

    An empty result supports the claim that H accumulates no infinite mass at
    any finite point.
    """
    grid = np.unique(np.asarray(grid, dtype=float))
    if grid.size == 0:
        return []

    def ratio(y):
        with np.errstate(all="ignore"):
            cv = np.asarray(c(y), dtype=float)
            return np.asarray(f(y), dtype=float) / (cv * cv)

    spacing = np.diff(grid) if grid.size > 1 else np.array([1.0])
    flagged = []
    for i, xi in enumerate(grid):
        left = spacing[i - 1] if i > 0 else spacing[0]
        right = spacing[i] if i < len(spacing) else spacing[-1]
        delta = 0.5 * min(left, right)
        if not two_sided_integrable(ratio, float(xi), float(delta), cfg).converges:
            flagged.append(float(xi))
    return flagged


# ---------------------------------------------------------------------------
# the condition battery


def beta_vanishes(fld: CoefficientField, cfg: ClassifyConfig = ClassifyConfig()) -> TriState:
    """Is ``beta = 0`` Lebesgue-a.e.?

    Yes when beta folds to the literal 0 or vanishes at every grid sample;
    No when it is nonzero at two adjacent samples (a continuity witness);
    Inconclusive otherwise.
    """
    if fld.beta_is_zero:
        return TriState.YES
    if fld.dimension == 1:
        lo = 1e-9 if fld.domain == Domain.POSITIVE_HALF_LINE else -cfg.r_max
        if fld.domain == Domain.POSITIVE_HALF_LINE:
            grid = np.geomspace(lo, cfg.r_max, cfg.beta_points)
        else:
            tail = np.geomspace(1e-3, cfg.r_max, cfg.beta_points // 2)
            grid = np.unique(np.concatenate([-tail, cfg.es_grid(), tail]))
        with np.errstate(all="ignore"):
            vals = np.abs(fld.beta_at(grid, strict=False))
    else:
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((32, fld.dimension))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = np.geomspace(1e-3, cfg.r_max, max(cfg.beta_points // 32, 2))
        pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, fld.dimension)
        with np.errstate(all="ignore"):
            b = fld.beta_at(pts, strict=False)
        vals = np.linalg.norm(b, axis=1).reshape(len(radii), len(dirs)).T.reshape(-1)
    nonzero = np.isfinite(vals) & (vals > 0)
    if not nonzero.any() and np.all(np.isfinite(vals)):
        return TriState.YES
    if np.any(nonzero[1:] & nonzero[:-1]):
        return TriState.NO
    return TriState.INCONCLUSIVE


def _weight_state(weight: IntegrabilityVerdict, want_integrable: bool) -> TriState:
    if weight.converges:
        return TriState.of(want_integrable)
    if weight.diverges:
        return TriState.of(not want_integrable)
    return TriState.INCONCLUSIVE


def battery_from_profile(profile: ScaleProfile, h_density: Callable) -> ConditionBattery:
    """Evaluate the six conditions for a scale profile.

    ``h_density`` is the rate at which H accrues (``<beta, c beta>``); the
    H-weight is ``ratio * h_density / c``.
    """
    out = {}
    for fam, boundary in (("plus", Boundary.UPPER), ("minus", Boundary.LOWER)):
        lim = profile.limit(boundary)
        finite = lim.finite
        where = profile.boundary_point(boundary)
        out[f"{fam}1"] = Condition(~finite, lim.verdict, f"scale limit at {where}")
        if finite is TriState.YES:
            w2 = profile.weight_verdict(boundary)
            w3 = profile.weight_verdict(boundary, h_density)
            out[f"{fam}2"] = Condition(_weight_state(w2, False), w2, f"ratio/c at {where}")
            out[f"{fam}3"] = Condition(_weight_state(w3, True), w3, f"H-weight at {where}")
        else:
            note = "scale limit infinite" if finite is TriState.NO else "scale limit undecided"
            out[f"{fam}2"] = Condition(finite, None, note)
            out[f"{fam}3"] = Condition(finite, None, note)
    return ConditionBattery(**out, s_upper=profile.s_upper.value, s_lower=profile.s_lower.value)


def _require_1d(fld: CoefficientField):
    if fld.dimension != 1:
        raise FieldError("this classifier needs a one-dimensional field")
    if not fld.is_autonomous:
        raise FieldError("time-dependent coefficients are not supported by the integral tests")


def _profile(fld: CoefficientField, cfg: ClassifyConfig) -> ScaleProfile:
    v = lambda y: fld.dominated_drift(y, strict=True)  # noqa: E731
    c = lambda y: fld.diffusion(y, strict=True)  # noqa: E731
    return build_scale(v, c, fld.domain, cfg.quad)


def condition_battery(fld: CoefficientField, cfg: ClassifyConfig = ClassifyConfig()) -> ConditionBattery:
    _require_1d(fld)
    profile = _profile(fld, cfg)
    return battery_from_profile(profile, lambda y: fld.beta_quadratic(y, strict=True))


def local_from_battery(bat: ConditionBattery) -> TriState:
    return any_of(bat.plus1.state, bat.plus2.state, bat.plus3.state) & any_of(
        bat.minus1.state, bat.minus2.state, bat.minus3.state)


def global_from_battery(bat: ConditionBattery, beta_zero: TriState) -> TriState:
    return any_of(
        beta_zero,
        bat.plus3.state & bat.minus1.state,
        bat.plus1.state & bat.minus3.state,
        bat.plus3.state & bat.minus3.state,
    )


@dataclass(frozen=True)
class Classification:
    verdict: TriState
    battery: Optional[ConditionBattery]
    notes: tuple = field(default=())


def _classify(fld: CoefficientField, cfg: ClassifyConfig) -> ACVerdict:
    _require_1d(fld)
    if fld.beta_is_zero:
        return ACVerdict(TriState.YES, TriState.YES, None, ("beta is identically zero",))
    notes = [BOUNDARY_NOTE]
    if fld.domain == Domain.REAL_LINE:
        es = validate_engelbert_schmidt(fld, cfg)
        if es.passed is TriState.NO:
            point, reason = es.failures[0]
            raise EngelbertSchmidtError(point, reason)
        if es.passed is TriState.INCONCLUSIVE:
            notes.append("local integrability of the coefficients could not be confirmed everywhere on the probe grid")
    bat = condition_battery(fld, cfg)
    local = local_from_battery(bat)
    glob = global_from_battery(bat, beta_vanishes(fld, cfg))
    if glob is TriState.YES and local is not TriState.YES:
        # a uniformly integrable martingale is a martingale; numerics disagree
        notes.append("global test passed while the local test was undecided")
        local = TriState.YES if local is TriState.INCONCLUSIVE else local
        if local is TriState.NO:
            glob = TriState.INCONCLUSIVE
    return ACVerdict(local, glob, bat, tuple(notes))


def classify(fld: CoefficientField, cfg: ClassifyConfig = ClassifyConfig()) -> ACVerdict:
    """Both verdicts together with the battery that produced them."""
    return _classify(fld, cfg)


def classify_local(fld: CoefficientField, cfg: ClassifyConfig = ClassifyConfig()) -> Classification:
    """Is ``Z`` a P-martingale (``Q* << P`` locally)?"""
    v = _classify(fld, cfg)
    return Classification(v.local_ac, v.battery, v.notes)


def classify_global(fld: CoefficientField, cfg: ClassifyConfig = ClassifyConfig()) -> Classification:
    """Is ``Z`` a uniformly integrable P-martingale (``Q* << P``)?"""
    v = _classify(fld, cfg)
    return Classification(v.global_ac, v.battery, v.notes)


def classify_reverse(fld: CoefficientField, cfg: ClassifyConfig = ClassifyConfig()) -> Classification:
    """``P << Q*`` locally: the local test on the field with roles exchanged."""
    return classify_local(fld.swapped(), cfg)
