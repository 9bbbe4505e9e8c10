"""Hamiltonian systems on R^{2n+1} with exact partial derivatives to order 3.

Coordinates are always ordered ``(q1..qn, p1..pn, z)``; every vector and
matrix in the package follows that order.
"""

from __future__ import annotations

import itertools
import math
import threading
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .errors import DerivativeOrderError, DimensionError
from .parser import parse_expr

MAX_ORDER = 3


def coordinate_names(n: int) -> tuple[str, ...]:
    return tuple(f"q{i}" for i in range(1, n + 1)) + tuple(f"p{i}" for i in range(1, n + 1)) + ("z",)


ParamValues = Mapping[str, float] | Sequence[float] | None


class HamiltonianSystem:
    """A Hamiltonian ``H(q, p, z; params)`` together with its derivatives.

    Derivatives are built on first request and memoized; a built entry is
    never replaced, so instances can be shared between threads.
    """

    def __init__(self, expr: ex.Expr, n: int, params: Sequence[str] = ()):
        if n < 1:
            raise DimensionError(f"n must be >= 1, got {n}")
        self.n = n
        self.expr = expr
        self.params = tuple(params)
        self.coords = coordinate_names(n)
        if set(self.params) & set(self.coords):
            raise ValueError("parameter names clash with coordinates")
        unknown = expr.variables() - set(self.coords) - set(self.params)
        if unknown:
            raise ValueError(f"expression uses undeclared names {sorted(unknown)}")
        self.names = self.coords + self.params
        self._lock = threading.Lock()
        self._derivs: dict[tuple[int, ...], ex.Expr] = {(): expr}
        self._compiled: dict[str, object] = {}

    @property
    def dim(self) -> int:
        return 2 * self.n + 1

    @property
    def derivatives(self) -> Mapping[tuple[int, ...], ex.Expr]:
        """Read-only view of the derivatives built so far, keyed by sorted index tuples."""
        return MappingProxyType(self._derivs)

    def __repr__(self) -> str:
        return f"HamiltonianSystem({ex.to_source(self.expr)!r}, n={self.n}, params={list(self.params)})"

    def source(self) -> str:
        return ex.to_source(self.expr)

    # -- symbolic ----------------------------------------------------------

    def _index(self, v) -> int:
        if isinstance(v, str):
            try:
                return self.coords.index(v)
            except ValueError:
                raise KeyError(f"{v!r} is not a coordinate of this system") from None
        if not 0 <= v < self.dim:
            raise IndexError(v)
        return int(v)

    def diff(self, multi_index: Sequence[str | int]) -> ex.Expr:
        """Partial derivative by the listed coordinates (names or indices)."""
        idx = tuple(sorted(self._index(v) for v in multi_index))
        if len(idx) > MAX_ORDER:
            raise DerivativeOrderError(f"derivative order {len(idx)} exceeds {MAX_ORDER}")
        return self._derivative(idx)

    def _derivative(self, idx: tuple[int, ...]) -> ex.Expr:
        d = self._derivs.get(idx)
        if d is not None:
            return d
        parent = self._derivative(idx[:-1])
        d = parent.diff(self.coords[idx[-1]])
        with self._lock:
            return self._derivs.setdefault(idx, d)

    def param_derivative(self, name: str) -> "HamiltonianSystem":
        if name not in self.params:
            raise KeyError(f"{name!r} is not a parameter")
        return HamiltonianSystem(self.expr.diff(name), self.n, self.params)

    # -- numeric -----------------------------------------------------------

    def param_vector(self, values: ParamValues) -> tuple[float, ...]:
        if values is None:
            values = {}
        if isinstance(values, Mapping):
            missing = [p for p in self.params if p not in values]
            if missing:
                raise ValueError(f"missing parameter values for {missing}")
            extra = set(values) - set(self.params)
            if extra:
                raise ValueError(f"unknown parameters {sorted(extra)}")
            return tuple(float(values[p]) for p in self.params)
        vals = tuple(float(v) for v in values)
        if len(vals) != len(self.params):
            raise ValueError(f"expected {len(self.params)} parameter values, got {len(vals)}")
        return vals

    def _args(self, point, params) -> tuple[float, ...]:
        pt = np.asarray(point, dtype=float).ravel()
        if pt.shape[0] != self.dim:
            raise DimensionError(f"point has {pt.shape[0]} coordinates, expected {self.dim}")
        return tuple(pt.tolist()) + self.param_vector(params)

    def _fn(self, key: str):
        fn = self._compiled.get(key)
        if fn is not None:
            return fn
        d = self.dim
        if key == "value":
            exprs = [self.expr]
        elif key == "grad":
            exprs = [self._derivative((i,)) for i in range(d)]
        elif key == "hess":
            exprs = [self._derivative(c) for c in itertools.combinations_with_replacement(range(d), 2)]
        elif key == "third":
            exprs = [self._derivative(c) for c in itertools.combinations_with_replacement(range(d), 3)]
        else:
            raise KeyError(key)
        fn = ex.compile_exprs(exprs, self.names)
        with self._lock:
            return self._compiled.setdefault(key, fn)

    def value(self, point, params: ParamValues = None) -> float:
        return self._fn("value")(self._args(point, params))[0]

    def gradient(self, point, params: ParamValues = None) -> np.ndarray:
        return np.array(self._fn("grad")(self._args(point, params)))

    def hessian(self, point, params: ParamValues = None) -> np.ndarray:
        vals = self._fn("hess")(self._args(point, params))
        d = self.dim
        out = np.empty((d, d))
        for v, (i, j) in zip(vals, itertools.combinations_with_replacement(range(d), 2)):
            out[i, j] = out[j, i] = v
        return out

    def third(self, point, params: ParamValues = None) -> np.ndarray:
        vals = self._fn("third")(self._args(point, params))
        d = self.dim
        out = np.empty((d, d, d))
        for v, c in zip(vals, itertools.combinations_with_replacement(range(d), 3)):
            for perm in set(itertools.permutations(c)):
                out[perm] = v
        return out


def parse(source: str, n: int, params: Sequence[str] = ()) -> HamiltonianSystem:
    """Parse a Hamiltonian in the coordinates ``q1..qn, p1..pn, z``."""
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    names = coordinate_names(n) + tuple(params)
    return HamiltonianSystem(parse_expr(source, names), n, params)


def diff(sys: HamiltonianSystem, multi_index: Sequence[str | int]) -> ex.Expr:
    return sys.diff(multi_index)


def evaluate(sys: HamiltonianSystem, point, params: ParamValues = None) -> float:
    return sys.value(point, params)


@dataclass(frozen=True)
class Jet3:
    """Value, gradient, Hessian and third partials of H at a base point.

    ``third`` holds raw symmetric partials; :attr:`cubic` holds the
    coefficients of the monomials ``x_i x_j x_k`` (i <= j <= k, 0-based) of
    the Taylor polynomial, so e.g. the ``p^3`` coefficient is ``H_ppp / 6``.
    """

    point: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    third: np.ndarray
    n: int

    @property
    def cubic(self) -> dict[tuple[int, int, int], float]:
        d = 2 * self.n + 1
        out = {}
        for c in itertools.combinations_with_replacement(range(d), 3):
            mult = 1
            for k in set(c):
                mult *= math.factorial(c.count(k))
            out[c] = float(self.third[c]) / mult
        return out

    def taylor(self, dx, order: int = 3) -> float:
        dx = np.asarray(dx, dtype=float)
        out = self.value + self.gradient @ dx
        if order >= 2:
            out += 0.5 * dx @ self.hessian @ dx
        if order >= 3:
            out += np.einsum("ijk,i,j,k->", self.third, dx, dx, dx) / 6.0
        return float(out)

    def cubic_form(self, dx) -> float:
        dx = np.asarray(dx, dtype=float)
        return float(sum(c * dx[i] * dx[j] * dx[k] for (i, j, k), c in self.cubic.items()))

    def push(self, M: np.ndarray, point=None) -> "Jet3":
        """Jet of ``H(x0 + M y)`` at ``y = 0`` (an affine change of variables)."""
        return Jet3(
            point=np.zeros(M.shape[1]) if point is None else np.asarray(point, dtype=float),
            value=self.value,
            gradient=M.T @ self.gradient,
            hessian=M.T @ self.hessian @ M,
            third=np.einsum("abc,ai,bj,ck->ijk", self.third, M, M, M),
            n=self.n,
        )


def jet3(sys: HamiltonianSystem, point, params: ParamValues = None) -> Jet3:
    pt = np.asarray(point, dtype=float).ravel()
    return Jet3(
        point=pt.copy(),
        value=sys.value(pt, params),
        gradient=sys.gradient(pt, params),
        hessian=sys.hessian(pt, params),
        third=sys.third(pt, params),
        n=sys.n,
    )


@dataclass(frozen=True)
class PlanarJet:
    """Coefficients of the 2-jet at an equilibrium of a 3-dimensional system.

    ``H = -tau z + A q^2 + B q p + C p^2 + D q z + E p z + F z^2 + O(3)``.
    """

    tau: float
    A: float
    B: float
    C: float
    D: float
    E: float
    F: float
    P: Mapping[tuple[int, int, int], float] = field(default_factory=dict)

    @classmethod
    def from_jet(cls, jet: Jet3) -> "PlanarJet":
        if jet.n != 1:
            raise DimensionError("planar coefficients need n = 1")
        h, g = jet.hessian, jet.gradient
        return cls(
            tau=-float(g[2]),
            A=h[0, 0] / 2, B=float(h[0, 1]), C=h[1, 1] / 2,
            D=float(h[0, 2]), E=float(h[1, 2]), F=h[2, 2] / 2,
            P=jet.cubic,
        )
