"""Configuration ingestion, task dispatch and report emission."""

from __future__ import annotations

import csv
import enum
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

import jsonschema
import numpy as np

from . import __version__
from .classify1d import BOUNDARY_NOTE, CONDITION_LABELS, ClassifyConfig, classify
from .field import CoefficientField, Domain
from .logic import TriState
from .mc import FREEZE_NOTE, Measure, SimConfig, cross_validate, simulate
from .radial import ENVELOPE_LABELS, EnvelopePair, KhasminskiiKind, RadialConfig, classify_radial, khasminskii_test
from .scale import Boundary, build_scale, feller_accessible, is_recurrent
from .sufficiency import GrowthKind, SufficiencyConfig, benes_check, elementary_inequality_check, local_novikov_check

__all__ = ["ConfigError", "Report", "RunConfig", "Task", "canonical_json", "emit", "load_config", "run"]

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2


class Task(str, enum.Enum):
    CLASSIFY_1D = "Classify1D"
    CLASSIFY_RADIAL = "ClassifyRadial"
    KHASMINSKII = "Khasminskii"
    GROWTH_CHECK = "GrowthCheck"
    BOUNDARY = "Boundary"
    SIMULATE = "Simulate"
    CROSS_VALIDATE = "CrossValidate"

    @classmethod
    def parse(cls, text: str) -> "Task":
        """Accepts the enum value or its command-line spelling (``classify-radial``)."""
        key = text.replace("-", "").replace("_", "").lower()
        for t in cls:
            if t.value.lower() == key:
                return t
        raise ValueError(f"unknown task {text!r}")

    @property
    def command(self) -> str:
        return {
            "Classify1D": "classify1d", "ClassifyRadial": "classify-radial", "Khasminskii": "khasminskii",
            "GrowthCheck": "growth-check", "Boundary": "boundary", "Simulate": "simulate",
            "CrossValidate": "cross-validate",
        }[self.value]


class ConfigError(ValueError):
    """Schema violation; ``pointer`` is a JSON pointer into the configuration."""

    def __init__(self, pointer: str, message: str):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
        self.message = message


_EXPR = {"type": ["string", "number"]}
_VEC = {"oneOf": [_EXPR, {"type": "array", "items": _EXPR, "minItems": 1}]}
_NUM_OR_VEC = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["task", "field"],
    "additionalProperties": False,
    "properties": {
        "task": {"enum": [t.value for t in Task]},
        "field": {
            "type": "object",
            "required": ["b", "c"],
            "additionalProperties": False,
            "properties": {
                "dimension": {"type": "integer", "minimum": 1},
                "domain": {"enum": [d.value for d in Domain]},
                "b": _VEC,
                "c": {"oneOf": [_EXPR, {"type": "array", "items": _VEC, "minItems": 1}]},
                "beta": _VEC,
                "x0": _NUM_OR_VEC,
                "suspicious_points": {"type": "array", "items": {"type": "number"}},
            },
        },
        "envelopes": {
            "type": "object",
            "required": ["v", "w", "direction"],
            "additionalProperties": False,
            "properties": {"v": _EXPR, "w": _EXPR, "direction": {"enum": ["divergence", "convergence"]}},
        },
        "gamma": _EXPR,
        "novikov_levels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "boundary_measure": {"enum": [m.value for m in Measure]},
        "quad": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
                "abs_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_depth": {"type": "integer", "minimum": 1},
                "window_base": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "n_windows": {"type": "integer", "minimum": 4},
                "divergence_factor": {"type": "number", "exclusiveMinimum": 1},
            },
        },
        "classify": {"type": "object"},
        "radial": {"type": "object"},
        "sufficiency": {"type": "object"},
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_paths": {"type": "integer", "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_max": {"type": "number", "exclusiveMinimum": 0},
                "r_levels": {"type": ["array", "null"], "items": {"type": "number"}},
                "r_max": {"type": "number", "exclusiveMinimum": 1},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "measure": {"enum": [m.value for m in Measure]},
                "stop_level": {"type": ["number", "null"]},
                "probe_fractions": {"type": "array", "items": {"type": "number"}},
                "h_quantile_levels": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "h_blowup_threshold": {"type": "number"},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "path": {"type": "string"},
                "format": {"enum": ["json", "csv"]},
                "csv_dir": {"type": "string"},
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"task": {"const": "Khasminskii"}}, "required": ["task"]},
         "then": {"required": ["envelopes"]}},
    ],
}


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate_config(data: Any) -> None:
    """Raise :class:`ConfigError` for the first schema violation (deepest path first)."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (-len(e.absolute_path), _pointer(e.absolute_path)))
    if not errors:
        return
    err = errors[0]
    path = list(err.absolute_path)
    if err.validator == "required":
        missing = [k for k in err.validator_value if isinstance(err.instance, Mapping) and k not in err.instance]
        if missing:
            path.append(missing[0])
    raise ConfigError(_pointer(path), err.message)


@dataclass(frozen=True)
class RunConfig:
    task: Task
    field: CoefficientField
    envelopes: Optional[EnvelopePair] = None
    gamma: str = "1"
    novikov_levels: tuple = (1, 2, 4, 8)
    boundary_measure: Measure = Measure.UNDER_P
    classify: ClassifyConfig = ClassifyConfig()
    radial: RadialConfig = RadialConfig()
    sufficiency: SufficiencyConfig = SufficiencyConfig()
    mc: SimConfig = SimConfig()
    output: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        validate_config(data)
        quad = data.get("quad", {})

        def section(name, cfg_cls, extra=None):
            raw = dict(data.get(name, {}))
            try:
                if extra:
                    raw.setdefault(extra[0], {})
                    raw[extra[0]] = {**extra[1], **raw[extra[0]]}
                return cfg_cls.from_dict(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"/{name}", str(exc)) from exc

        classify_cfg = section("classify", ClassifyConfig, ("quad", quad))
        radial_raw = dict(data.get("radial", {}))
        radial_raw["classify"] = {**classify_cfg.to_dict(), **radial_raw.get("classify", {})}
        try:
            radial_cfg = RadialConfig.from_dict(radial_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError("/radial", str(exc)) from exc
        suff_cfg = section("sufficiency", SufficiencyConfig, ("quad", quad))
        try:
            mc_cfg = SimConfig.from_dict(data.get("mc", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError("/mc", str(exc)) from exc
        try:
            fld = CoefficientField.from_dict(data["field"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("/field", str(exc)) from exc
        env = None
        if "envelopes" in data:
            try:
                env = EnvelopePair.from_dict(data["envelopes"])
            except (TypeError, ValueError) as exc:
                raise ConfigError("/envelopes", str(exc)) from exc
        return cls(
            task=Task(data["task"]),
            field=fld,
            envelopes=env,
            gamma=str(data.get("gamma", "1")),
            novikov_levels=tuple(data.get("novikov_levels", (1, 2, 4, 8))),
            boundary_measure=Measure(data.get("boundary_measure", Measure.UNDER_P.value)),
            classify=classify_cfg,
            radial=radial_cfg,
            sufficiency=suff_cfg,
            mc=mc_cfg,
            output=dict(data.get("output", {})),
        )

    def to_dict(self) -> dict:
        """Configuration echo; feeding it back to :meth:`from_dict` reproduces the run."""
        out = {
            "task": self.task.value,
            "field": self.field.to_dict(),
            "gamma": self.gamma,
            "novikov_levels": list(self.novikov_levels),
            "boundary_measure": self.boundary_measure.value,
            "quad": self.classify.quad.to_dict(),
            "classify": {k: v for k, v in self.classify.to_dict().items() if k != "quad"},
            "radial": {k: v for k, v in self.radial.to_dict().items() if k != "classify"},
            "sufficiency": {k: v for k, v in self.sufficiency.to_dict().items() if k != "quad"},
            "mc": self.mc.to_dict(),
        }
        if self.envelopes is not None:
            out["envelopes"] = self.envelopes.to_dict()
        return out


def load_config(path) -> RunConfig:
    import json

    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


@dataclass
class Report:
    task: Task
    status: str                # "pass", "inconclusive" or "fail"
    results: dict
    provenance: dict
    tables: dict = field(default_factory=dict)   # name -> list of row dicts for CSV
    timing: float = 0.0        # seconds; not part of the JSON so reports stay byte-identical

    @property
    def exit_code(self) -> int:
        return {"pass": EXIT_PASS, "inconclusive": EXIT_INCONCLUSIVE}.get(self.status, EXIT_FAIL)

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "status": self.status,
            "exit_code": self.exit_code,
            "results": self.results,
            "provenance": self.provenance,
        }


def _status(*states: TriState) -> str:
    return "pass" if all(s.decisive for s in states) else "inconclusive"


def _battery_table(verdict) -> list:
    if verdict.battery is None:
        return []
    return [{**row, "label": CONDITION_LABELS[row["condition"]]} for row in verdict.battery.rows()]


def _mc_tables(rep, tag) -> dict:
    return {
        "crossings": [{"measure": tag, "level": r, "count": c, "frequency": f} for r, c, f in rep.crossings],
        "h_quantiles": [{"measure": tag, "level": q, "value": v} for q, v in rep.h_quantiles],
    }


def _merge_tables(*parts) -> dict:
    out = {}
    for p in parts:
        for k, rows in p.items():
            out.setdefault(k, []).extend(rows)
    return out


def _classify_for(cfg: RunConfig):
    fld = cfg.field
    if fld.dimension > 1:
        return classify_radial(fld, cfg.radial)
    return classify(fld, cfg.classify)


def _run_task(cfg: RunConfig):
    fld = cfg.field
    task = cfg.task
    labels = {}
    if task in (Task.CLASSIFY_1D, Task.CLASSIFY_RADIAL):
        v = classify(fld, cfg.classify) if task == Task.CLASSIFY_1D else classify_radial(fld, cfg.radial)
        labels = CONDITION_LABELS
        return _status(v.local_ac, v.global_ac), {"verdict": v.to_dict()}, {"battery": _battery_table(v)}, labels
    if task == Task.KHASMINSKII:
        k = khasminskii_test(fld, cfg.envelopes, cfg.radial)
        status = "inconclusive" if k.kind == KhasminskiiKind.INCONCLUSIVE else "pass"
        return status, {"khasminskii": k.to_dict()}, {}, ENVELOPE_LABELS
    if task == Task.GROWTH_CHECK:
        g = benes_check(fld, cfg.gamma, cfg.sufficiency)
        nov = [local_novikov_check(fld, n, cfg.sufficiency) for n in cfg.novikov_levels]
        status = "inconclusive" if g.kind == GrowthKind.INCONCLUSIVE else "pass"
        res = {
            "growth": g.to_dict(),
            "local_novikov": [r.to_dict() for r in nov],
            "elementary_inequality_max_violation": elementary_inequality_check(),
        }
        return status, res, {}, {}
    if task == Task.BOUNDARY:
        if fld.dimension != 1:
            raise ValueError("the boundary task needs a one-dimensional field")
        v = (lambda x: fld.drift(x)) if cfg.boundary_measure == Measure.UNDER_P else (lambda x: fld.dominated_drift(x))
        prof = build_scale(v, lambda x: fld.diffusion(x), fld.domain, cfg.classify.quad)
        up = feller_accessible(prof, Boundary.UPPER)
        low = feller_accessible(prof, Boundary.LOWER)
        res = {"measure": cfg.boundary_measure.value, "scale": prof.to_dict(),
               "upper": up.to_dict(), "lower": low.to_dict()}
        states = [up.accessible, low.accessible]
        if fld.domain == Domain.REAL_LINE:
            rec = is_recurrent(prof)
            res["recurrent"] = rec.value
            states.append(rec)
        return _status(*states), res, {}, {}
    if task == Task.SIMULATE:
        rep = simulate(fld, cfg.mc)
        return "pass", {"simulation": rep.to_dict()}, _mc_tables(rep, cfg.mc.measure.value), {}
    if task == Task.CROSS_VALIDATE:
        v = _classify_for(cfg)
        res = {"verdict": v.to_dict()}
        tables = {"battery": _battery_table(v)}
        if not v.local_ac.decisive:
            res["cross_validation"] = None
            return "inconclusive", res, tables, CONDITION_LABELS
        cv = cross_validate(fld, v, cfg.mc)
        res["cross_validation"] = cv.to_dict()
        parts = [tables]
        if cv.p_report is not None:
            parts.append(_mc_tables(cv.p_report, Measure.UNDER_P.value))
        if cv.q_report is not None:
            parts.append(_mc_tables(cv.q_report, Measure.UNDER_QSTAR.value))
        return ("pass" if cv.passed else "fail"), res, _merge_tables(*parts), CONDITION_LABELS
    raise ValueError(f"unsupported task {task!r}")


def run(cfg: RunConfig) -> Report:
    """Execute one task.  Module errors become a ``fail`` report carrying the error text."""
    import time

    start = time.perf_counter()
    provenance = {
        "config": cfg.to_dict(),
        "seed": cfg.mc.seed,
        "version": __version__,
        "condition_labels": {},
        "boundary_note": BOUNDARY_NOTE,
        "freeze_convention": FREEZE_NOTE,
    }
    try:
        status, results, tables, labels = _run_task(cfg)
        provenance["condition_labels"] = dict(labels)
    except Exception as exc:  # reported, not swallowed: the exit code is 1
        status, results, tables = "fail", {"error": {"type": type(exc).__name__, "message": str(exc)}}, {}
    return Report(cfg.task, status, results, provenance, tables, time.perf_counter() - start)


# -- emission -------------------------------------------------------------------


def _format_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def _encode(obj) -> str:
    import json

    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, enum.Enum):
        return _encode(obj.value)
    if isinstance(obj, Mapping):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ",".join(json.dumps(k, ensure_ascii=False) + ":" + _encode(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ",".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def canonical_json(obj) -> str:
    """Sorted keys, no whitespace, floats with 17 significant digits (NaN/Infinity as bare tokens)."""
    return _encode(obj) + "\n"


def emit(report: Report, out: Optional[str] = None, csv_dir: Optional[str] = None, fmt: str = "json") -> dict:
    """Write the report; returns the paths written by kind."""
    written = {}
    text = canonical_json(report.to_dict())
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
        written["json"] = out
    if csv_dir or fmt == "csv":
        target = Path(csv_dir or (Path(out).parent if out else "."))
        target.mkdir(parents=True, exist_ok=True)
        for name, rows in sorted(report.tables.items()):
            if not rows:
                continue
            path = target / f"{name}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]))
                w.writeheader()
                for row in rows:
                    w.writerow({k: (_format_float(v) if isinstance(v, float) else v) for k, v in row.items()})
            written[name] = str(path)
    return written
