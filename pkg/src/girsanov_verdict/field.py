"""Coefficient fields: drift ``b``, diffusion ``c`` and perturbation ``beta``.

The law ``P`` has drift ``b`` and diffusion ``c``; the candidate law ``Q*``
keeps ``c`` and uses drift ``b + c beta``.  All evaluation methods are
vectorised: in one dimension they take an array of shape ``(n,)``; in ``d``
dimensions an array of shape ``(n, d)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .expr import Binary, ExpressionError, Expression, Unary, as_expression, is_syntactically_zero

__all__ = ["CoefficientField", "Domain", "FieldError"]


class FieldError(ValueError):
    pass


class Domain(str, enum.Enum):
    REAL_LINE = "real_line"
    POSITIVE_HALF_LINE = "positive_half_line"
    EUCLIDEAN = "euclidean"


def _vector(value, d, name):
    if d == 1:
        if isinstance(value, (list, tuple)):
            if len(value) != 1:
                raise FieldError(f"{name}: expected a scalar expression in dimension 1")
            value = value[0]
        return (as_expression(value),)
    if not isinstance(value, (list, tuple)) or len(value) != d:
        raise FieldError(f"{name}: expected a list of {d} expressions")
    return tuple(as_expression(v) for v in value)


def _matrix(value, d):
    """Upper triangle of ``c`` as a tuple of rows; row ``i`` holds entries ``i..d-1``."""
    if d == 1:
        if isinstance(value, (list, tuple)):
            flat = [v for row in value for v in (row if isinstance(row, (list, tuple)) else [row])]
            if len(flat) != 1:
                raise FieldError("c: expected a scalar expression in dimension 1")
            value = flat[0]
        return ((as_expression(value),),)
    if isinstance(value, (str, int, float, Expression)):
        # scalar multiple of the identity
        s = as_expression(value)
        zero = as_expression(0.0)
        return tuple(tuple(s if j == i else zero for j in range(i, d)) for i in range(d))
    rows = list(value)
    if len(rows) != d:
        raise FieldError(f"c: expected {d} rows")
    out = []
    for i, row in enumerate(rows):
        row = list(row)
        if len(row) == d:
            row = row[i:]
        elif len(row) != d - i:
            raise FieldError(f"c: row {i} must have {d - i} (upper triangle) or {d} entries")
        out.append(tuple(as_expression(v) for v in row))
    return tuple(out)


@dataclass(frozen=True)
class CoefficientField:
    dimension: int
    domain: Domain
    b: tuple
    c: tuple
    beta: tuple
    x0: tuple
    suspicious_points: tuple = field(default=())

    def __post_init__(self):
        d = self.dimension
        if d < 1:
            raise FieldError("dimension must be positive")
        if (d == 1) == (self.domain == Domain.EUCLIDEAN):
            raise FieldError(f"domain {self.domain.value} does not match dimension {d}")
        if len(self.x0) != d:
            raise FieldError(f"x0 must have {d} components")
        if self.domain == Domain.POSITIVE_HALF_LINE and not self.x0[0] > 0:
            raise FieldError("x0 must be positive on the half-line")
        allowed = {"t", "x"} if d == 1 else {"t"} | {f"x{i + 1}" for i in range(d)}
        for e in self.expressions():
            extra = e.variables - allowed
            if extra:
                raise FieldError(f"expression {e.source!r} uses {sorted(extra)}, not valid in dimension {d}")

    @classmethod
    def create(cls, b, c, beta, x0=0.0, dimension=None, domain=None, suspicious_points=()) -> "CoefficientField":
        """Build a field from expression texts (or numbers).

        ``dimension`` defaults to the length of ``b`` when it is a list, else 1;
        ``domain`` defaults to the real line in one dimension.
        """
        if dimension is None:
            dimension = len(b) if isinstance(b, (list, tuple)) else 1
        if domain is None:
            domain = Domain.REAL_LINE if dimension == 1 else Domain.EUCLIDEAN
        x0 = tuple(float(v) for v in np.atleast_1d(np.asarray(x0, dtype=float)))
        if dimension > 1 and len(x0) == 1:
            raise FieldError(f"x0 must have {dimension} components")
        try:
            return cls(
                dimension=int(dimension),
                domain=Domain(domain),
                b=_vector(b, dimension, "b"),
                c=_matrix(c, dimension),
                beta=_vector(beta, dimension, "beta"),
                x0=x0,
                suspicious_points=tuple(float(p) for p in suspicious_points),
            )
        except ExpressionError as exc:
            raise FieldError(str(exc)) from exc

    @classmethod
    def from_dict(cls, data: Mapping) -> "CoefficientField":
        return cls.create(
            b=data["b"],
            c=data["c"],
            beta=data.get("beta", "0"),
            x0=data.get("x0", 0.0 if data.get("dimension", 1) == 1 else None),
            dimension=data.get("dimension"),
            domain=data.get("domain"),
            suspicious_points=data.get("suspicious_points", ()),
        )

    def to_dict(self) -> dict:
        d = self.dimension
        if d == 1:
            b, c, beta = self.b[0].source, self.c[0][0].source, self.beta[0].source
            x0 = self.x0[0]
        else:
            b = [e.source for e in self.b]
            c = [[e.source for e in row] for row in self.c]
            beta = [e.source for e in self.beta]
            x0 = list(self.x0)
        out = {"dimension": d, "domain": self.domain.value, "b": b, "c": c, "beta": beta, "x0": x0}
        if self.suspicious_points:
            out["suspicious_points"] = list(self.suspicious_points)
        return out

    # -- structure --------------------------------------------------------

    def expressions(self):
        yield from self.b
        for row in self.c:
            yield from row
        yield from self.beta

    @property
    def is_autonomous(self) -> bool:
        return all("t" not in e.variables for e in self.expressions())

    @property
    def beta_is_zero(self) -> bool:
        return all(is_syntactically_zero(e) for e in self.beta)

    def swapped(self) -> "CoefficientField":
        """Field with the roles of P and Q* exchanged: ``b' = b + c beta``, ``beta' = -beta``."""
        d = self.dimension
        new_b = []
        for i in range(d):
            node = self.b[i].ast
            for j in range(d):
                cij = self._c_entry(i, j)
                node = Binary("+", node, Binary("*", cij.ast, self.beta[j].ast))
            new_b.append(Expression.from_ast(node))
        new_beta = tuple(Expression.from_ast(Unary("-", e.ast)) for e in self.beta)
        return CoefficientField(d, self.domain, tuple(new_b), self.c, new_beta, self.x0, self.suspicious_points)

    def with_beta(self, beta) -> "CoefficientField":
        return CoefficientField(self.dimension, self.domain, self.b, self.c,
                                _vector(beta, self.dimension, "beta"), self.x0, self.suspicious_points)

    def _c_entry(self, i, j):
        if j < i:
            i, j = j, i
        return self.c[i][j - i]

    # -- evaluation -------------------------------------------------------

    def _env(self, X, t):
        X = np.asarray(X, dtype=float)
        if self.dimension == 1:
            env = {"x": X.reshape(-1)}
        else:
            X = X.reshape(-1, self.dimension)
            env = {f"x{i + 1}": X[:, i] for i in range(self.dimension)}
        env["t"] = t
        return env

    @staticmethod
    def _eval(e, env, strict):
        used = {k: env[k] for k in e.variables}
        n = len(next(v for k, v in env.items() if k != "t"))
        return np.broadcast_to(np.asarray(e(strict=strict, **used), dtype=float), (n,))

    def drift(self, X, t=0.0, strict=True):
        env = self._env(X, t)
        out = np.column_stack([self._eval(e, env, strict) for e in self.b])
        return out[:, 0] if self.dimension == 1 else out

    def beta_at(self, X, t=0.0, strict=True):
        env = self._env(X, t)
        out = np.column_stack([self._eval(e, env, strict) for e in self.beta])
        return out[:, 0] if self.dimension == 1 else out

    def diffusion(self, X, t=0.0, strict=True):
        """``c`` at the points: shape ``(n,)`` in 1-d, ``(n, d, d)`` symmetric otherwise."""
        env = self._env(X, t)
        d = self.dimension
        if d == 1:
            return np.array(self._eval(self.c[0][0], env, strict))
        n = len(env["x1"])
        out = np.empty((n, d, d))
        for i in range(d):
            for k, e in enumerate(self.c[i]):
                j = i + k
                v = self._eval(e, env, strict)
                out[:, i, j] = v
                out[:, j, i] = v
        return out

    def dominated_drift(self, X, t=0.0, strict=True):
        """Drift of ``Q*``: ``b + c beta``."""
        b = self.drift(X, t, strict)
        beta = self.beta_at(X, t, strict)
        c = self.diffusion(X, t, strict)
        if self.dimension == 1:
            return b + c * beta
        return b + np.einsum("nij,nj->ni", c, beta)

    def beta_quadratic(self, X, t=0.0, strict=True):
        """``<beta, c beta>`` at the points."""
        beta = self.beta_at(X, t, strict)
        c = self.diffusion(X, t, strict)
        if self.dimension == 1:
            return c * beta * beta
        return np.einsum("ni,nij,nj->n", beta, c, beta)

    def trace_c(self, X, t=0.0, strict=True):
        c = self.diffusion(X, t, strict)
        return c if self.dimension == 1 else np.trace(c, axis1=1, axis2=2)


def scalar_field(b="0", c="1", beta="0", x0=0.0, domain=Domain.REAL_LINE) -> CoefficientField:
    """Shorthand for one-dimensional fields used throughout the tests and examples."""
    return CoefficientField.create(b=b, c=c, beta=beta, x0=x0, dimension=1, domain=domain)
