"""Reduction of multi-dimensional fields to one-dimensional radial diffusions.

With ``r = |x|^2 / 2`` a radial field has

    c_hat(r) = <x, c x>,   b_hat(r) = <x, b + c beta> + tr(c) / 2,   f_hat(r) = <beta, c beta>,

and ``r`` is a diffusion on ``(0, inf)`` with drift ``b_hat`` and diffusion
``c_hat``.  :func:`classify_radial` classifies that diffusion exactly;
:func:`khasminskii_test` handles fields that are only bounded by radial
envelopes and gives one-sided answers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .classify1d import (
    ACVerdict,
    BOUNDARY_NOTE,
    ClassifyConfig,
    Condition,
    battery_from_profile,
    beta_vanishes,
    classify as classify_1d,
)
from .expr import DomainError, Expression, as_expression
from .field import CoefficientField, Domain, FieldError
from .logic import TriState, all_of, any_of
from .quad import IntegrabilityVerdict, Verdict
from .scale import Boundary, ScaleProfile, build_scale

__all__ = [
    "ENVELOPE_LABELS",
    "EnvelopeDirection",
    "EnvelopePair",
    "EnvelopeReport",
    "KhasminskiiKind",
    "KhasminskiiVerdict",
    "NotRadialError",
    "OriginAccessibleError",
    "RadialConfig",
    "RadialReduction",
    "classify_radial",
    "khasminskii_test",
    "radial_reduce",
    "verify_envelopes",
]

MIN_START_RADIUS = 1e-9


class NotRadialError(FieldError):
    def __init__(self, quantity, residual, directions, radius):
        super().__init__(
            f"{quantity} depends on the direction: relative spread {residual:.3g} at r = {radius:.6g} "
            f"between directions {directions[0]} and {directions[1]}"
        )
        self.quantity = quantity
        self.residual = residual
        self.directions = directions
        self.radius = radius


class OriginAccessibleError(ValueError):
    """The reduced diffusion reaches the origin, so the radial reduction does not apply."""


@dataclass(frozen=True)
class RadialConfig:
    classify: ClassifyConfig = ClassifyConfig()
    n_directions: int = 64
    radial_tol: float = 1e-6
    seed: int = 20240917
    n_radii: int = 32
    shell_min: float = 1e-3
    shell_max: float = 1e6
    eval_directions: int = 8

    @classmethod
    def from_dict(cls, data) -> "RadialConfig":
        data = dict(data)
        cl = ClassifyConfig.from_dict(data.pop("classify", {}))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown radial settings: {sorted(unknown)}")
        return replace(cls(classify=cl), **data)

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "classify"}
        out["classify"] = self.classify.to_dict()
        return out

    def directions(self, d: int, m: Optional[int] = None) -> np.ndarray:
        rng = np.random.default_rng(self.seed)
        u = rng.standard_normal((m or self.n_directions, d))
        return u / np.linalg.norm(u, axis=1, keepdims=True)

    def radii(self) -> np.ndarray:
        """Values of ``r = |x|^2 / 2`` on the probe shells."""
        rho = np.geomspace(self.shell_min, self.shell_max, self.n_radii)
        return 0.5 * rho * rho


def _points(r, dirs):
    r = np.asarray(r, dtype=float).reshape(-1)
    rho = np.sqrt(2.0 * r)
    return (rho[:, None, None] * dirs[None, :, :]).reshape(-1, dirs.shape[1])


def _radial_quantities(fld: CoefficientField, X):
    with np.errstate(all="ignore"):
        c = fld.diffusion(X, strict=True)
        v = fld.dominated_drift(X, strict=True)
        beta = fld.beta_at(X, strict=True)
        c_hat = np.einsum("ni,nij,nj->n", X, c, X)
        b_hat = np.einsum("ni,ni->n", X, v) + 0.5 * np.trace(c, axis1=1, axis2=2)
        f_hat = np.einsum("ni,nij,nj->n", beta, c, beta)
    return {"c_hat": c_hat, "b_hat": b_hat, "f_hat": f_hat}


class RadialReduction:
    """Radial coefficients of a field, as vectorised callables of ``r``."""

    def __init__(self, fld: CoefficientField, dirs: np.ndarray, residual: float, residuals: dict):
        self.field = fld
        self._dirs = dirs
        self.consistency_residual = residual
        self.residuals = residuals

    def _mean(self, name, r):
        r = np.asarray(r, dtype=float)
        X = _points(r, self._dirs)
        vals = _radial_quantities(self.field, X)[name].reshape(-1, len(self._dirs))
        out = vals.mean(axis=1)
        return out.reshape(r.shape) if r.shape else out[0]

    def c_hat(self, r):
        return self._mean("c_hat", r)

    def b_hat(self, r):
        return self._mean("b_hat", r)

    def f_hat(self, r):
        return self._mean("f_hat", r)

    def to_dict(self):
        return {"consistency_residual": self.consistency_residual, "residuals": dict(self.residuals)}


def _spread(vals):
    """Relative spread across directions (axis 1) per radius; returns (max, radius index, dir pair)."""
    top = vals.max(axis=1)
    bot = vals.min(axis=1)
    scale = np.maximum(np.abs(vals).max(axis=1), 1e-12)
    rel = (top - bot) / scale
    i = int(np.argmax(rel))
    return float(rel[i]), i, (int(np.argmin(vals[i])), int(np.argmax(vals[i])))


def radial_reduce(fld: CoefficientField, cfg: RadialConfig = RadialConfig(), quantities=("c_hat", "b_hat", "f_hat")) -> RadialReduction:
    """Check that ``c_hat``, ``b_hat``, ``f_hat`` depend on ``|x|`` only and return them.

    Radiality is decided by sampling ``n_directions`` seeded unit vectors on
    every probe shell; the worst relative spread must not exceed
    ``radial_tol``.  Raises :class:`NotRadialError` otherwise.
    """
    if fld.dimension < 2:
        raise FieldError("radial reduction needs dimension >= 2")
    if not fld.is_autonomous:
        raise FieldError("time-dependent coefficients are not supported by the radial tests")
    dirs = cfg.directions(fld.dimension)
    r = cfg.radii()
    X = _points(r, dirs)
    try:
        q = _radial_quantities(fld, X)
    except DomainError as exc:
        raise FieldError(f"coefficients are not defined on the probe shells: {exc}") from exc
    residuals = {}
    worst = 0.0
    for name in quantities:
        vals = q[name].reshape(len(r), len(dirs))
        if not np.all(np.isfinite(vals)):
            raise FieldError(f"{name} is not finite on the probe shells")
        res, i, pair = _spread(vals)
        residuals[name] = res
        if res > cfg.radial_tol:
            raise NotRadialError(name, res, pair, float(r[i]))
        worst = max(worst, res)
    c_hat = q["c_hat"]
    if np.any(c_hat <= 0):
        i = int(np.argmin(c_hat))
        raise FieldError(f"<x, c x> must be positive; got {c_hat[i]!r} at x = {X[i].tolist()}")
    return RadialReduction(fld, dirs[: cfg.eval_directions], worst, residuals)


def _check_start(fld: CoefficientField):
    if np.linalg.norm(fld.x0) < MIN_START_RADIUS:
        raise FieldError(f"the starting point must satisfy |x0| >= {MIN_START_RADIUS}")


def classify_radial(fld: CoefficientField, cfg: RadialConfig = RadialConfig()) -> ACVerdict:
    """Martingale / uniform-integrability verdicts for a radial field.

    For ``d >= 2`` the reduced diffusion on ``(0, inf)`` is classified by the
    plus conditions (the origin must be unreachable, else
    :class:`OriginAccessibleError`).  A one-dimensional field on the
    half-line is classified directly with both boundary families.
    """
    if fld.dimension == 1:
        if fld.domain != Domain.POSITIVE_HALF_LINE:
            raise FieldError("a one-dimensional radial field lives on the positive half-line")
        return classify_1d(fld, cfg.classify)
    _check_start(fld)
    if fld.beta_is_zero:
        return ACVerdict(TriState.YES, TriState.YES, None, ("beta is identically zero",))
    red = radial_reduce(fld, cfg)
    profile = build_scale(red.b_hat, red.c_hat, Domain.POSITIVE_HALF_LINE, cfg.classify.quad)
    bat = battery_from_profile(profile, red.f_hat)
    notes = [BOUNDARY_NOTE, f"radial consistency residual {red.consistency_residual:.3g}"]
    origin_safe = bat.minus1.state | bat.minus2.state
    if origin_safe is TriState.NO:
        raise OriginAccessibleError(
            "the radial diffusion reaches the origin (s(0+) finite and the Feller weight is integrable there); "
            "the radial classification does not apply")
    local = any_of(bat.plus1.state, bat.plus2.state, bat.plus3.state)
    zero = beta_vanishes(fld, cfg.classify)
    glob = any_of(zero, bat.plus3.state & bat.minus1.state, bat.plus1.state & bat.minus3.state,
                  bat.plus3.state & bat.minus3.state)
    if origin_safe is TriState.INCONCLUSIVE:
        notes.append("could not confirm that the origin is unreachable")
        local = local & TriState.INCONCLUSIVE
        glob = glob & TriState.INCONCLUSIVE
    if glob is TriState.YES and local is not TriState.YES:
        local = TriState.YES
    return ACVerdict(local, glob, bat, tuple(notes))


# ---------------------------------------------------------------------------
# Khasminskii-type envelope test


class EnvelopeDirection(str, enum.Enum):
    DIVERGENCE = "divergence"    # v bounds the radial drift from above, w decreasing, w <= <beta, c beta>
    CONVERGENCE = "convergence"  # v bounds it from below, w increasing, w >= <beta, c beta>


@dataclass(frozen=True)
class EnvelopePair:
    """Radial envelopes ``v(r)``, ``w(r)`` written in the variable ``x`` (standing for ``r = |x|^2/2``)."""

    v: Expression
    w: Expression
    direction: EnvelopeDirection

    @classmethod
    def create(cls, v, w, direction) -> "EnvelopePair":
        v, w = as_expression(v), as_expression(w)
        for e in (v, w):
            if e.variables - {"x"}:
                raise FieldError(f"envelope {e.source!r} may only use the variable x")
        return cls(v, w, EnvelopeDirection(direction))

    @classmethod
    def from_dict(cls, data) -> "EnvelopePair":
        return cls.create(data["v"], data["w"], data["direction"])

    def to_dict(self):
        return {"v": self.v.source, "w": self.w.source, "direction": self.direction.value}

    def v_at(self, r):
        return np.broadcast_to(np.asarray(self.v(x=np.asarray(r, dtype=float)), dtype=float), np.shape(r))

    def w_at(self, r):
        return np.broadcast_to(np.asarray(self.w(x=np.asarray(r, dtype=float)), dtype=float), np.shape(r))


@dataclass(frozen=True)
class EnvelopeReport:
    passed: bool
    failures: tuple = ()  # (check name, witness point, margin)

    def to_dict(self):
        return {
            "passed": self.passed,
            "failures": [{"check": n, "witness": list(x), "margin": m} for n, x, m in self.failures],
        }


def _slack(a, b):
    return 1e-9 * np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)


def verify_envelopes(fld: CoefficientField, env: EnvelopePair, cfg: RadialConfig = RadialConfig()) -> EnvelopeReport:
    """Check the envelope inequalities on spherical shells and ``w``'s monotonicity on the radial grid."""
    if fld.dimension < 2:
        raise FieldError("envelopes are defined for dimension >= 2")
    dirs = cfg.directions(fld.dimension)
    r = cfg.radii()
    X = _points(r, dirs)
    rr = np.repeat(r, len(dirs))
    failures = []
    try:
        q = _radial_quantities(fld, X)
        v = env.v_at(rr)
        w = env.w_at(rr)
        w_grid = env.w_at(r)
    except DomainError as exc:
        return EnvelopeReport(False, (("evaluation", list(np.ravel(exc.points)[:fld.dimension]), math.nan),))
    drift = q["b_hat"]
    h = q["f_hat"]

    def witness(name, margin):
        i = int(np.argmax(margin))
        if margin[i] > 0:
            failures.append((name, tuple(float(t) for t in X[i]), float(margin[i])))

    if not np.all(v > 0):
        i = int(np.argmin(v))
        failures.append(("v positive", tuple(float(t) for t in X[i]), float(-v[i])))
    if not np.all(w >= 0):
        i = int(np.argmin(w))
        failures.append(("w nonnegative", tuple(float(t) for t in X[i]), float(-w[i])))
    steps = np.diff(w_grid)
    tol = _slack(w_grid[1:], w_grid[:-1])
    if env.direction == EnvelopeDirection.DIVERGENCE:
        witness("v >= radial drift", drift - v - _slack(drift, v))
        witness("<beta, c beta> >= w", w - h - _slack(w, h))
        bad = steps > tol
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            failures.append(("w decreasing", (float(r[i + 1]),), float(steps[i])))
        if not np.any(w_grid > 0):
            failures.append(("w positive on a set of positive measure", (), 0.0))
    else:
        witness("v <= radial drift", v - drift - _slack(drift, v))
        witness("<beta, c beta> <= w", h - w - _slack(w, h))
        bad = steps < -tol
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            failures.append(("w increasing", (float(r[i + 1]),), float(-steps[i])))
    return EnvelopeReport(not failures, tuple(failures))


class KhasminskiiKind(str, enum.Enum):
    NOT_ABSOLUTELY_CONTINUOUS = "not_absolutely_continuous"
    ABSOLUTELY_CONTINUOUS = "absolutely_continuous"
    INCONCLUSIVE = "inconclusive"


ENVELOPE_LABELS = {
    "plus1": "s(+inf) = +inf",
    "plus2": "s(+inf) finite and ratio/c_tilde not integrable at +inf",
    "plus3": "s(+inf) finite and ratio * w / c_tilde not integrable at +inf",
    "plus4": "s(+inf) finite and ratio * w / c_tilde integrable at +inf",
    "minus1": "s(0+) = -inf",
    "minus2": "s(0+) finite and ratio/c_tilde not integrable at 0+",
    "minus3": "s(0+) finite and ratio * w / c_tilde not integrable at 0+",
    "minus4": "s(0+) finite and ratio * w / c_tilde integrable at 0+",
}

_DIVERGENCE_CASES = {
    "i.a": ("plus1", "minus1"),
    "i.b": ("plus3", "minus1"),
    "i.c": ("plus1", "minus2", "minus3"),
    "i.d": ("plus3", "minus2", "minus3"),
}
_CONVERGENCE_CASES = {
    "ii.a": ("plus4", "minus1"),
    "ii.b": ("plus1", "minus2", "minus4"),
    "ii.c": ("plus4", "minus2", "minus4"),
}


@dataclass(frozen=True)
class KhasminskiiVerdict:
    kind: KhasminskiiKind
    matched_case: Optional[str]
    evidence: dict = field(default_factory=dict)
    envelopes: Optional[EnvelopeReport] = None
    notes: tuple = ()

    def __post_init__(self):
        cases = _DIVERGENCE_CASES if self.kind == KhasminskiiKind.NOT_ABSOLUTELY_CONTINUOUS else (
            _CONVERGENCE_CASES if self.kind == KhasminskiiKind.ABSOLUTELY_CONTINUOUS else {None: ()})
        if self.matched_case not in cases:
            raise AssertionError(f"case {self.matched_case!r} does not belong to verdict {self.kind.value}")

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "matched_case": self.matched_case,
            "evidence": {k: v.to_dict() for k, v in sorted(self.evidence.items())},
            "envelopes": None if self.envelopes is None else self.envelopes.to_dict(),
            "notes": list(self.notes),
        }


def _envelope_conditions(profile: ScaleProfile, w) -> dict:
    out = {}
    for fam, boundary in (("plus", Boundary.UPPER), ("minus", Boundary.LOWER)):
        lim = profile.limit(boundary)
        finite = lim.finite
        where = profile.boundary_point(boundary)
        out[f"{fam}1"] = Condition(~finite, lim.verdict, f"scale limit at {where}")
        if finite is TriState.YES:
            feller = profile.weight_verdict(boundary)
            weight = profile.weight_verdict(boundary, w)
            out[f"{fam}2"] = Condition(_state(feller, integrable=False), feller, f"ratio/c at {where}")
            out[f"{fam}3"] = Condition(_state(weight, integrable=False), weight, f"envelope weight at {where}")
            out[f"{fam}4"] = Condition(_state(weight, integrable=True), weight, f"envelope weight at {where}")
        else:
            for k in (2, 3, 4):
                out[f"{fam}{k}"] = Condition(finite, None, "scale limit infinite" if finite is TriState.NO else "undecided")
    return out


def _state(v: IntegrabilityVerdict, integrable: bool) -> TriState:
    if v.kind == Verdict.CONVERGES:
        return TriState.of(integrable)
    if v.kind == Verdict.DIVERGES:
        return TriState.of(not integrable)
    return TriState.INCONCLUSIVE


def khasminskii_test(fld: CoefficientField, env: EnvelopePair, cfg: RadialConfig = RadialConfig()) -> KhasminskiiVerdict:
    """One-sided absolute-continuity test from radial envelopes.

    The scale is built from ``(v, c_tilde)`` on ``(0, inf)`` with
    ``c_tilde(r) = <x, c x>``; the envelope weight is ``ratio * w / c_tilde``.
    A divergence-type envelope can only prove ``Q*`` not absolutely
    continuous; a convergence-type envelope can only prove it is.
    """
    _check_start(fld)
    report = verify_envelopes(fld, env, cfg)
    if not report.passed:
        return KhasminskiiVerdict(KhasminskiiKind.INCONCLUSIVE, None, {}, report,
                                  ("envelope inequalities fail on the probe shells",))
    red = radial_reduce(fld, cfg, quantities=("c_hat",))
    profile = build_scale(env.v_at, red.c_hat, Domain.POSITIVE_HALF_LINE, cfg.classify.quad)
    conds = _envelope_conditions(profile, env.w_at)
    notes = [
        "the envelope-weight conditions are tested at the boundary of their own family "
        "(+inf for plus, 0+ for minus); the alternative reading that places both at -inf is not used",
    ]
    if env.direction == EnvelopeDirection.DIVERGENCE:
        cases, kind = _DIVERGENCE_CASES, KhasminskiiKind.NOT_ABSOLUTELY_CONTINUOUS
    else:
        cases, kind = _CONVERGENCE_CASES, KhasminskiiKind.ABSOLUTELY_CONTINUOUS
    undecided = False
    for name, needs in cases.items():
        st = all_of(*(conds[n].state for n in needs))
        if st is TriState.YES:
            return KhasminskiiVerdict(kind, name, conds, report, tuple(notes))
        undecided |= st is TriState.INCONCLUSIVE
    notes.append("some case could not be decided numerically" if undecided else "no case of the test applies")
    return KhasminskiiVerdict(KhasminskiiKind.INCONCLUSIVE, None, conds, report, tuple(notes))
