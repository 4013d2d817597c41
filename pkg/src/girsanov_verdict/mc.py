"""Monte Carlo oracle for the density process.

Paths follow Euler-Maruyama under ``P`` (drift ``b``) or under ``Q*``
(drift ``b + c beta``).  Along every path the log-density

    log Z += <beta, dX - b dt> - <beta, c beta> dt / 2

and ``H += <beta, c beta> dt`` are accumulated, so ``Z = exp(log Z)`` is
non-negative by construction and exactly 1 when ``beta`` vanishes.  A path
that leaves the ball of radius ``r_max`` (or, on the half-line, comes
closer to 0 than ``1 / r_max``) counts as exploded and is frozen there.

Every path draws from its own Philox stream keyed by ``(seed, path id)``,
and paths are processed in fixed chunks whose results are concatenated in
path order, so reports do not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import enum
import gzip
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .classify1d import ACVerdict
from .field import CoefficientField, Domain
from .logic import TriState

__all__ = [
    "CrossValidation",
    "FUNCTIONALS",
    "Measure",
    "PathSummary",
    "SimConfig",
    "SimReport",
    "SimulationError",
    "TransferResult",
    "cross_validate",
    "default_workers",
    "explosion_stats",
    "girsanov_transfer_check",
    "simulate",
]

THREADS_ENV = "GIRSANOV_VERDICT_THREADS"
FREEZE_NOTE = (
    "a path is frozen (x, Z and H kept) at the end of the first step that leaves the ball of radius r_max; "
    "this stands in for explosion"
)
_CHUNK = 8192
_BLOCK = 128
_FLAG_LIMIT = 0.01
_Q_TAG = 1 << 48


class SimulationError(RuntimeError):
    pass


class Measure(str, enum.Enum):
    UNDER_P = "under_p"
    UNDER_QSTAR = "under_qstar"


def default_workers() -> int:
    """Worker threads from the environment; results never depend on it."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _default_levels(r_max):
    levels = []
    r = 2.0
    while r < r_max:
        levels.append(r)
        r *= 2.0
    levels.append(float(r_max))
    return tuple(levels)


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    dt: float = 1e-3
    t_max: float = 1.0
    r_levels: Optional[tuple] = None
    r_max: float = 1e6
    seed: int = 0
    measure: Measure = Measure.UNDER_P
    stop_level: Optional[float] = None
    probe_fractions: tuple = (0.25, 0.5, 0.75, 1.0)
    h_quantile_levels: tuple = (0.5, 0.9, 0.99)
    h_blowup_threshold: float = 1e3
    workers: Optional[int] = None

    def __post_init__(self):
        if not (self.dt > 0 and self.t_max > 0):
            raise ValueError("dt and t_max must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.r_max > 1:
            raise ValueError("r_max must exceed 1")
        object.__setattr__(self, "measure", Measure(self.measure))
        levels = _default_levels(self.r_max) if self.r_levels is None else tuple(float(r) for r in self.r_levels)
        if any(b <= a for a, b in zip(levels, levels[1:])) or not levels or levels[0] <= 1:
            raise ValueError("r_levels must be increasing and greater than 1")
        object.__setattr__(self, "r_levels", levels)
        object.__setattr__(self, "probe_fractions", tuple(float(f) for f in self.probe_fractions))
        object.__setattr__(self, "h_quantile_levels", tuple(float(q) for q in self.h_quantile_levels))

    @classmethod
    def from_dict(cls, data: Mapping) -> "SimConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown simulation settings: {sorted(unknown)}")
        if "n_paths" in data:
            data["n_paths"] = int(data["n_paths"])
        return cls(**data)

    def to_dict(self):
        """Settings that determine the results (worker count excluded)."""
        return {
            "n_paths": self.n_paths,
            "dt": self.dt,
            "t_max": self.t_max,
            "r_levels": list(self.r_levels),
            "r_max": self.r_max,
            "seed": self.seed,
            "measure": self.measure.value,
            "stop_level": self.stop_level,
            "probe_fractions": list(self.probe_fractions),
            "h_quantile_levels": list(self.h_quantile_levels),
            "h_blowup_threshold": self.h_blowup_threshold,
        }

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_max / self.dt)))

    @property
    def step(self) -> float:
        return self.t_max / self.n_steps


@dataclass
class PathSummary:
    """Per-path results, in path order."""

    z: np.ndarray              # Z at the stopping time
    h: np.ndarray
    z_probes: np.ndarray       # (n, n_probes)
    x_end: np.ndarray          # (n, d)
    sup_norm: np.ndarray
    min_norm: np.ndarray
    time_avg: np.ndarray       # time average of x1 up to the stopping time
    stop_time: np.ndarray
    exploded: np.ndarray       # bool
    crossing_time: np.ndarray  # (n, n_levels), inf when never crossed
    flagged: np.ndarray        # 0 ok, 1 factorisation failure, 2 non-finite coefficient

    @staticmethod
    def concat(parts):
        return PathSummary(*(np.concatenate([getattr(p, f) for p in parts]) for f in PathSummary.__dataclass_fields__))


# -- one chunk of paths -------------------------------------------------------


def _generators(seed: int, tag: int, ids):
    return [np.random.Generator(np.random.Philox(key=[seed, tag | int(i)])) for i in ids]


def _sqrt_c(c: np.ndarray, d: int):
    """Lower Cholesky factors with positive diagonal, vectorised over points.

    Points where ``c`` is not positive definite get a zero factor and a flag.
    """
    if d == 1:
        ok = c > 0
        return np.sqrt(np.where(ok, c, 0.0)), ~ok
    n = c.shape[0]
    L = np.zeros_like(c)
    fail = ~np.all(np.isfinite(c), axis=(1, 2))
    for j in range(d):
        piv = c[:, j, j] - np.einsum("nk,nk->n", L[:, j, :j], L[:, j, :j])
        fail |= ~(piv > 0)
        ljj = np.sqrt(np.where(piv > 0, piv, 1.0))
        L[:, j, j] = ljj
        for i in range(j + 1, d):
            L[:, i, j] = (c[:, i, j] - np.einsum("nk,nk->n", L[:, i, :j], L[:, j, :j])) / ljj
    L[fail] = 0.0
    return L, fail


def _constant_factor(fld: CoefficientField):
    """``(c, L)`` when ``c`` does not depend on the state or time, else ``(None, None)``."""
    if any(e.variables for row in fld.c for e in row):
        return None, None
    c = fld.diffusion(np.zeros((1, fld.dimension)) if fld.dimension > 1 else np.zeros(1), 0.0)
    c = np.asarray(c, dtype=float).reshape(1, fld.dimension, fld.dimension)
    L, fail = _sqrt_c(c if fld.dimension > 1 else c[:, 0, 0], fld.dimension)
    if fail.any():
        raise SimulationError("the constant diffusion matrix is not positive definite")
    return c[0], np.asarray(L).reshape(fld.dimension, fld.dimension)


def _reach(fld: CoefficientField, x: np.ndarray):
    """Smallest level ``n`` whose ball (``[1/n, n]`` on the half-line) no longer contains ``x``."""
    norm = np.linalg.norm(x, axis=1)
    if fld.domain == Domain.POSITIVE_HALF_LINE:
        with np.errstate(divide="ignore"):
            inv = np.where(x[:, 0] > 0, 1.0 / x[:, 0], np.inf)
        norm = np.fmax(norm, inv)
    return np.where(np.all(np.isfinite(x), axis=1), norm, np.inf)


def _run_chunk(fld: CoefficientField, cfg: SimConfig, start: int, stop: int, tag: int, trace: int = 0):
    # exploding paths overflow on purpose; they are frozen, never averaged in as NaN
    with np.errstate(all="ignore"):
        return _chunk_body(fld, cfg, start, stop, tag, trace)


def _chunk_body(fld, cfg, start, stop, tag, trace):
    d = fld.dimension
    n = stop - start
    gens = _generators(cfg.seed, tag, range(start, stop))
    dt = cfg.step
    sdt = math.sqrt(dt)
    levels = np.array(cfg.r_levels)
    lv_idx = np.arange(len(levels))
    probe_steps = [max(1, int(round(f * cfg.n_steps))) for f in cfg.probe_fractions]
    under_q = cfg.measure == Measure.UNDER_QSTAR
    zero_beta = fld.beta_is_zero
    stop_at = cfg.r_max if cfg.stop_level is None else min(cfg.r_max, cfg.stop_level)

    x = np.tile(np.asarray(fld.x0, dtype=float), (n, 1))
    logz = np.zeros(n)
    h = np.zeros(n)
    z_probes = np.ones((n, len(probe_steps)))
    probed = np.zeros(len(probe_steps), dtype=bool)
    norm0 = float(np.linalg.norm(fld.x0))
    sup_norm = np.full(n, norm0)
    min_norm = np.full(n, norm0)
    integral = np.zeros(n)
    stop_time = np.full(n, cfg.t_max)
    exploded = np.zeros(n, dtype=bool)
    crossing = np.full((n, len(levels)), np.inf)
    n_crossed = np.searchsorted(levels, _reach(fld, x), side="right")
    flagged = np.zeros(n, dtype=np.int8)
    active = np.ones(n, dtype=bool)
    rows = []

    const_c, const_l = _constant_factor(fld)
    no_fail = np.zeros(n, dtype=bool)
    noise = np.zeros((n, _BLOCK, d))
    for k in range(cfg.n_steps):
        j = k % _BLOCK
        if j == 0:
            for i in np.flatnonzero(active):
                noise[i] = gens[i].standard_normal((_BLOCK, d))
        if not active.any():
            break
        t = k * dt
        arg = x[:, 0] if d == 1 else x
        with np.errstate(all="ignore"):
            b = fld.drift(arg, t, strict=False).reshape(n, d)
            xi = noise[:, j, :]
            if const_c is not None:
                fail = no_fail
                dw = (xi @ const_l.T) * sdt
            else:
                c = fld.diffusion(arg, t, strict=False)
                L, fail = _sqrt_c(c, d)
                if d == 1:
                    dw = (L * xi[:, 0] * sdt)[:, None]
                else:
                    dw = np.einsum("nij,nj->ni", L, xi) * sdt
            finite = np.all(np.isfinite(b), axis=1)
            if zero_beta:
                q = np.zeros(n)
                dx = b * dt + dw
            else:
                beta = fld.beta_at(arg, t, strict=False).reshape(n, d)
                if const_c is not None:
                    cb = beta @ const_c
                elif d == 1:
                    cb = (c * beta[:, 0])[:, None]
                else:
                    cb = np.einsum("nij,nj->ni", c, beta)
                q = np.einsum("ni,ni->n", beta, cb)
                finite &= np.all(np.isfinite(beta), axis=1) & np.isfinite(q)
                dx = (b + cb) * dt + dw if under_q else b * dt + dw
                dlogz = np.einsum("ni,ni->n", beta, dx - b * dt) - 0.5 * q * dt
        fail &= finite
        bad = active & (~finite | fail)
        if bad.any():
            flagged[bad & fail] = 1
            flagged[bad & ~finite] = 2
            stop_time[bad] = t
            active &= ~bad
        g = active.copy()
        t_end = (k + 1) * dt
        x = np.where(g[:, None], x + dx, x)
        if not zero_beta:
            logz = np.where(g, logz + dlogz, logz)
            h = np.where(g, h + q * dt, h)
        integral = np.where(g, integral + _first_coordinate(arg, d) * dt, integral)
        with np.errstate(all="ignore"):
            norms = np.linalg.norm(x, axis=1)
            reach = _reach(fld, x)
        sup_norm = np.where(g, np.fmax(sup_norm, norms), sup_norm)
        min_norm = np.where(g, np.fmin(min_norm, norms), min_norm)
        cnt = np.searchsorted(levels, reach, side="right")
        ch = g & (cnt > n_crossed)
        if ch.any():
            rows_ch = np.flatnonzero(ch)
            lo, hi = n_crossed[rows_ch, None], cnt[rows_ch, None]
            crossing[rows_ch] = np.where((lv_idx >= lo) & (lv_idx < hi), t_end, crossing[rows_ch])
            n_crossed[rows_ch] = cnt[rows_ch]
        gone = g & ~(reach < cfg.r_max)
        ended = g & ~(reach < stop_at)
        exploded |= gone
        stop_time[ended] = t_end
        active &= ~ended
        for p, ps in enumerate(probe_steps):
            if ps == k + 1:
                z_probes[:, p] = np.exp(logz)
                probed[p] = True
        if trace and start == 0:
            for i in np.flatnonzero(g[:trace]):
                rows.append((t_end, *x[i].tolist(), float(np.exp(logz[i])), h[i], int(i)))
    # frozen paths keep their values at later probes
    with np.errstate(over="ignore"):
        z = np.exp(logz)
    z_probes[:, ~probed] = z[:, None]
    time_avg = integral / np.where(stop_time > 0, stop_time, 1.0)
    summary = PathSummary(z, h, z_probes, x, sup_norm, min_norm, time_avg, stop_time, exploded, crossing, flagged)
    return summary, rows


def _first_coordinate(arg, d):
    return arg if d == 1 else arg[:, 0]


def _run(fld: CoefficientField, cfg: SimConfig, tag: int = 0, trace: int = 0):
    bounds = [(s, min(s + _CHUNK, cfg.n_paths)) for s in range(0, cfg.n_paths, _CHUNK)]
    workers = cfg.workers or default_workers()
    if workers == 1 or len(bounds) == 1:
        results = [_run_chunk(fld, cfg, a, b, tag, trace) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda ab: _run_chunk(fld, cfg, ab[0], ab[1], tag, trace), bounds))
    summary = PathSummary.concat([r[0] for r in results])
    rows = [row for r in results for row in r[1]]
    return summary, rows


# -- reports -------------------------------------------------------------------


def _mean_se(v: np.ndarray):
    n = v.size
    m = float(np.sum(v) / n)
    if n < 2 or not math.isfinite(m):
        # an overflowed density (Q*-paths running to infinity) has no standard error
        return m, math.nan
    var = float(np.sum((v - m) ** 2) / (n - 1))
    return m, math.sqrt(var / n)


@dataclass
class SimReport:
    config: SimConfig
    mean_z: float
    se_z: float
    z_probes: tuple            # (t, mean, se)
    explosion_frequency: float
    h_quantiles: tuple         # (level, value)
    h_blowup_fraction: float
    crossings: tuple           # (level, count, frequency)
    flags: dict
    min_z: float
    min_norm: float
    paths: PathSummary = field(repr=False, compare=False)
    notes: tuple = (FREEZE_NOTE,)

    @property
    def seed(self) -> int:
        return self.config.seed

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "seed": self.seed,
            "mean_z": self.mean_z,
            "se_z": self.se_z,
            "z_probes": [{"t": t, "mean": m, "se": s} for t, m, s in self.z_probes],
            "explosion_frequency": self.explosion_frequency,
            "h_quantiles": [{"level": q, "value": v} for q, v in self.h_quantiles],
            "h_blowup_fraction": self.h_blowup_fraction,
            "crossings": [{"level": r, "count": c, "frequency": f} for r, c, f in self.crossings],
            "flags": dict(self.flags),
            "min_z": self.min_z,
            "min_norm": self.min_norm,
            "notes": list(self.notes),
        }


def _report(fld, cfg, s: PathSummary) -> SimReport:
    n = cfg.n_paths
    flags = {"factorisation": int(np.sum(s.flagged == 1)), "non_finite_coefficients": int(np.sum(s.flagged == 2))}
    if (flags["factorisation"] + flags["non_finite_coefficients"]) > _FLAG_LIMIT * n:
        raise SimulationError(
            f"{flags['factorisation']} factorisation failures and {flags['non_finite_coefficients']} non-finite "
            f"coefficient evaluations among {n} paths exceed the {_FLAG_LIMIT:.0%} limit")
    if np.any(np.isnan(s.z)) or np.any(s.z < 0):
        raise SimulationError("density became negative or undefined; this indicates a bug")
    if fld.beta_is_zero and not np.all(s.z == 1.0):
        raise SimulationError("density moved away from 1 with beta identically zero")
    mean_z, se_z = _mean_se(s.z)
    probes = []
    for p, frac in enumerate(cfg.probe_fractions):
        m, e = _mean_se(s.z_probes[:, p])
        probes.append((frac * cfg.t_max, m, e))
    hq = tuple((q, float(np.quantile(s.h, q))) for q in cfg.h_quantile_levels)
    counts = np.sum(np.isfinite(s.crossing_time), axis=0)
    crossings = tuple((float(r), int(cnt), float(cnt) / n) for r, cnt in zip(cfg.r_levels, counts))
    return SimReport(
        config=cfg,
        mean_z=mean_z,
        se_z=se_z,
        z_probes=tuple(probes),
        explosion_frequency=float(np.sum(s.exploded)) / n,
        h_quantiles=hq,
        h_blowup_fraction=float(np.sum(s.h >= cfg.h_blowup_threshold)) / n,
        crossings=crossings,
        flags=flags,
        min_z=float(np.min(s.z)),
        min_norm=float(np.min(s.min_norm)),
        paths=s,
    )


def _write_trace(rows, d, path):
    opener = gzip.open if str(path).endswith(".gz") else open
    header = ["t"] + (["x"] if d == 1 else [f"x{i + 1}" for i in range(d)]) + ["z", "h", "path"]
    with opener(path, "wt", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row[:-1]] + [row[-1]])


def simulate(fld: CoefficientField, cfg: SimConfig = SimConfig(), trace_csv=None, trace_paths: int = 10) -> SimReport:
    """Simulate ``cfg.n_paths`` paths and aggregate the density, ``H`` and crossings.

    With ``trace_csv`` the trajectories of the first ``trace_paths`` paths
    are written there (gzip when the name ends in ``.gz``).
    """
    tag = _Q_TAG if cfg.measure == Measure.UNDER_QSTAR else 0
    summary, rows = _run(fld, cfg, tag, trace_paths if trace_csv else 0)
    report = _report(fld, cfg, summary)
    if trace_csv:
        _write_trace(rows, fld.dimension, trace_csv)
    return report


# -- functionals and the transfer identity -------------------------------------


def _sup_capped(s: PathSummary):
    return np.minimum(s.sup_norm, 10.0)


FUNCTIONALS: dict[str, Callable[[PathSummary], np.ndarray]] = {
    "one": lambda s: np.ones_like(s.z),
    "sup_norm_capped": _sup_capped,
    "positive_end": lambda s: (s.x_end[:, 0] > 0).astype(float),
    "cos_end": lambda s: np.cos(s.x_end[:, 0]),
    "time_average_clipped": lambda s: np.clip(s.time_avg, -2.0, 2.0),
}


@dataclass(frozen=True)
class TransferResult:
    name: str
    weighted_p: float
    se_p: float
    q_star: float
    se_q: float

    @property
    def defect(self) -> float:
        return self.weighted_p - self.q_star

    @property
    def pooled_se(self) -> float:
        return math.hypot(self.se_p, self.se_q)

    @property
    def within(self) -> bool:
        return abs(self.defect) <= 3.0 * self.pooled_se

    def to_dict(self):
        return {
            "name": self.name,
            "weighted_p": self.weighted_p,
            "se_p": self.se_p,
            "q_star": self.q_star,
            "se_q": self.se_q,
            "defect": self.defect,
            "pooled_se": self.pooled_se,
            "within_3_se": self.within,
        }


def girsanov_transfer_check(fld: CoefficientField, functionals: Optional[Sequence[str]] = None,
                            cfg: SimConfig = SimConfig(), p_report: Optional[SimReport] = None):
    """Compare ``E_P[f Z]`` with ``E_Q*[f]`` for bounded functionals, both stopped at the same time.

    ``functionals`` are names from :data:`FUNCTIONALS` or callables of a
    :class:`PathSummary`.  The two estimates use independent streams.
    """
    functionals = list(FUNCTIONALS) if functionals is None else list(functionals)
    pcfg = replace(cfg, measure=Measure.UNDER_P)
    qcfg = replace(cfg, measure=Measure.UNDER_QSTAR)
    if p_report is None or p_report.config != pcfg:
        p_report = simulate(fld, pcfg)
    q_report = simulate(fld, qcfg)
    out = []
    for f in functionals:
        name, fn = (f, FUNCTIONALS[f]) if isinstance(f, str) else (getattr(f, "__name__", "functional"), f)
        fp = fn(p_report.paths)
        fq = fn(q_report.paths)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fq))):
            raise ValueError(f"functional {name} is not finite on the simulated paths")
        # Q*-paths that exploded before the stopping time are not in {sigma > xi}
        fq = np.where(q_report.paths.exploded, 0.0, fq)
        mp, sp = _mean_se(fp * p_report.paths.z)
        mq, sq = _mean_se(fq)
        out.append(TransferResult(name, mp, sp, mq, sq))
    return tuple(out), p_report, q_report


@dataclass(frozen=True)
class ExplosionStats:
    explosion_frequency: float
    crossings: tuple
    min_norm: float
    measure: Measure

    def to_dict(self):
        return {
            "explosion_frequency": self.explosion_frequency,
            "crossings": [{"level": r, "count": c, "frequency": f} for r, c, f in self.crossings],
            "min_norm": self.min_norm,
            "measure": self.measure.value,
        }


def explosion_stats(fld: CoefficientField, cfg: SimConfig = SimConfig()) -> ExplosionStats:
    """Frequencies of leaving each ball before ``t_max`` under ``cfg.measure``."""
    r = simulate(fld, cfg)
    return ExplosionStats(r.explosion_frequency, r.crossings, r.min_norm, cfg.measure)


# -- cross-validation ------------------------------------------------------------


@dataclass
class CrossValidation:
    passed: bool
    narrative: tuple
    p_report: Optional[SimReport] = None
    q_report: Optional[SimReport] = None
    transfer: tuple = ()

    def to_dict(self):
        return {
            "passed": self.passed,
            "narrative": list(self.narrative),
            "under_p": None if self.p_report is None else self.p_report.to_dict(),
            "under_qstar": None if self.q_report is None else self.q_report.to_dict(),
            "transfer": [t.to_dict() for t in self.transfer],
        }


def cross_validate(fld: CoefficientField, verdict: ACVerdict, cfg: SimConfig = SimConfig()) -> CrossValidation:
    """Check a decisive local verdict against simulation.

    A martingale verdict needs ``E Z`` within 3 standard errors of 1 and
    every transfer defect within 3 pooled standard errors.  A strict local
    martingale verdict needs ``E Z`` below 1 by more than 5 standard errors
    at some probe time, or ``H`` blowing up under ``Q*`` on at least as many
    paths as explode there.
    """
    local = TriState(verdict.local_ac)
    if not local.decisive:
        raise ValueError("cross-validation needs a decisive local verdict")
    lines = []
    if fld.beta_is_zero:
        rep = simulate(fld, replace(cfg, measure=Measure.UNDER_P))
        ok = local is TriState.YES and rep.mean_z == 1.0 and rep.min_z == 1.0
        lines.append(f"beta vanishes: Z == 1 on every path ({'yes' if rep.min_z == 1.0 else 'no'})")
        return CrossValidation(ok, tuple(lines), rep)

    if local is TriState.YES:
        transfer, p_rep, q_rep = girsanov_transfer_check(fld, None, cfg)
        dev = abs(p_rep.mean_z - 1.0)
        z_ok = dev <= 3.0 * p_rep.se_z if p_rep.se_z > 0 else dev <= 1e-12
        lines.append(f"E Z = {p_rep.mean_z:.6g} +- {p_rep.se_z:.3g}: "
                     f"{'within' if z_ok else 'outside'} 3 standard errors of 1")
        bad = [t for t in transfer if not t.within]
        for t in transfer:
            lines.append(f"transfer {t.name}: defect {t.defect:.3g}, pooled SE {t.pooled_se:.3g}")
        ok = z_ok and not bad
        lines.append("martingale verdict confirmed" if ok else "martingale verdict contradicted by simulation")
        return CrossValidation(ok, tuple(lines), p_rep, q_rep, transfer)

    p_rep = simulate(fld, replace(cfg, measure=Measure.UNDER_P))
    q_rep = simulate(fld, replace(cfg, measure=Measure.UNDER_QSTAR))
    defects = [(t, (1.0 - m) / s if s > 0 else (math.inf if m < 1.0 else 0.0)) for t, m, s in p_rep.z_probes]
    t_best, z_best = max(defects, key=lambda ts: ts[1])
    lines.append(f"largest deficit of E Z below 1: {z_best:.3g} standard errors at t = {t_best:.6g}")
    deficit = z_best > 5.0
    blow = q_rep.explosion_frequency > 0 and q_rep.h_blowup_fraction >= q_rep.explosion_frequency
    lines.append(f"under Q*: explosion frequency {q_rep.explosion_frequency:.4g}, "
                 f"H above {cfg.h_blowup_threshold:g} on {q_rep.h_blowup_fraction:.4g} of paths")
    ok = deficit or blow
    lines.append("strict local martingale verdict confirmed" if ok else
                 "strict local martingale verdict not supported by simulation")
    return CrossValidation(ok, tuple(lines), p_rep, q_rep)
