"""Legendre submanifolds given by generating functions, and contact extensions.

For an index set ``I`` and a function ``S(q_i, p_a)`` (``i`` in ``I``,
``a`` not in ``I``) the submanifold is::

    p_i = dS/dq_i,   q_a = -dS/dp_a,   z = S - p_a dS/dp_a

Chart coordinates are ``u_j = q_j`` for ``j`` in ``I`` and ``u_j = p_j``
otherwise.  Chart variables keep their ambient names, so an expression in
them is automatically independent of the complementary coordinates and of
``z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .continuation import Curve, StepControl, curve_folds, trace_curve
from .errors import NotInvariantError
from .geometry import vector_field
from .hamiltonian import HamiltonianSystem, ParamValues
from .parser import parse_expr

TANGENCY_TOL = 1e-8
INVARIANCE_TOL = 1e-10


def chart_names(n: int, index_set: Sequence[int]) -> tuple[str, ...]:
    I = set(index_set)
    return tuple(f"q{j}" if j in I else f"p{j}" for j in range(1, n + 1))


def _check_index_set(n: int, index_set: Sequence[int]) -> tuple[int, ...]:
    I = tuple(sorted(set(int(i) for i in index_set)))
    if any(not 1 <= i <= n for i in I):
        raise ValueError(f"index set {list(index_set)} not within 1..{n}")
    return I


class LegendreChart:
    def __init__(self, n: int, index_set: Sequence[int], S: ex.Expr):
        self.n = n
        self.index_set = _check_index_set(n, index_set)
        self.names = chart_names(n, self.index_set)
        extra = S.variables() - set(self.names)
        if extra:
            raise ValueError(f"generating function uses non-chart variables {sorted(extra)}")
        self.S = S
        self.embedding = self._embedding()
        self._embed = ex.compile_exprs(self.embedding, self.names)
        jac = [e.diff(u) for e in self.embedding for u in self.names]
        self._jac = ex.compile_exprs(jac, self.names)

    @classmethod
    def parse(cls, n: int, index_set: Sequence[int], source: str) -> "LegendreChart":
        I = _check_index_set(n, index_set)
        return cls(n, I, parse_expr(source, chart_names(n, I)))

    def _embedding(self) -> list[ex.Expr]:
        n, I, S = self.n, set(self.index_set), self.S
        q, p = [], []
        z = S
        for j in range(1, n + 1):
            if j in I:
                q.append(ex.Var(f"q{j}"))
                p.append(S.diff(f"q{j}"))
            else:
                dS = S.diff(f"p{j}")
                q.append(ex.neg(dS))
                p.append(ex.Var(f"p{j}"))
                z = ex.add(z, ex.neg(ex.mul(ex.Var(f"p{j}"), dS)))
        return q + p + [z]

    def embed(self, u) -> np.ndarray:
        return np.array(self._embed(tuple(np.asarray(u, dtype=float).tolist())))

    def tangent_matrix(self, u) -> np.ndarray:
        """``D(embedding)``: (2n+1) x n, columns are the chart coordinate directions."""
        v = self._jac(tuple(np.asarray(u, dtype=float).tolist()))
        return np.array(v).reshape(2 * self.n + 1, self.n)

    def chart_rows(self) -> list[int]:
        """Ambient indices of the chart coordinates."""
        I = set(self.index_set)
        return [j - 1 if j in I else self.n + j - 1 for j in range(1, self.n + 1)]

    def pullback_residual(self, u) -> float:
        """``max_k |eta(d embedding / du_k)|``; zero for a Legendre chart."""
        x = self.embed(u)
        T = self.tangent_matrix(u)
        n = self.n
        eta = np.concatenate([-x[n:2 * n], np.zeros(n), [1.0]])
        return float(np.max(np.abs(eta @ T)))


@dataclass(frozen=True)
class TangentFieldFamily:
    """``Y = f_j d/du_j`` on a chart; ``components[j]`` multiplies ``d/du_{j+1}``."""

    n: int
    index_set: tuple[int, ...]
    components: tuple[ex.Expr, ...]
    params: tuple[str, ...] = ()

    @classmethod
    def parse(cls, n: int, index_set: Sequence[int], sources: Sequence[str], params: Sequence[str] = ()):
        I = _check_index_set(n, index_set)
        names = chart_names(n, I) + tuple(params)
        if len(sources) != n:
            raise ValueError(f"need {n} field components, got {len(sources)}")
        return cls(n, I, tuple(parse_expr(s, names) for s in sources), tuple(params))

    def evaluate(self, u, params: ParamValues = None) -> np.ndarray:
        names = chart_names(self.n, self.index_set) + self.params
        pv = _param_tuple(self.params, params)
        fn = ex.compile_exprs(list(self.components), names)
        return np.array(fn(tuple(np.asarray(u, dtype=float).tolist()) + pv))


def _param_tuple(names: Sequence[str], values: ParamValues) -> tuple[float, ...]:
    if values is None:
        values = {}
    if isinstance(values, Mapping):
        return tuple(float(values[p]) for p in names)
    return tuple(float(v) for v in values)


def extend(chart: LegendreChart, Y: TangentFieldFamily) -> HamiltonianSystem:
    """Conservative contact Hamiltonian whose field restricts to ``Y`` on the chart.

    ``H = sum_i (p_i - S_{q_i}) f_i - sum_a (q_a + S_{p_a}) f_a``.
    """
    if Y.n != chart.n or tuple(Y.index_set) != tuple(chart.index_set):
        raise ValueError(f"field index set {list(Y.index_set)} (n={Y.n}) does not match chart "
                         f"{list(chart.index_set)} (n={chart.n})")
    I = set(chart.index_set)
    terms = []
    for j, f in zip(range(1, chart.n + 1), Y.components):
        if j in I:
            terms.append(ex.mul(ex.add(ex.Var(f"p{j}"), ex.neg(chart.S.diff(f"q{j}"))), f))
        else:
            terms.append(ex.neg(ex.mul(ex.add(ex.Var(f"q{j}"), chart.S.diff(f"p{j}")), f)))
    return HamiltonianSystem(ex.add(*terms), chart.n, Y.params)


def restriction(sys: HamiltonianSystem, chart: LegendreChart, u, params: ParamValues = None) -> np.ndarray:
    """Chart components of ``X_H`` at the embedded point ``u``.

    Raises :class:`NotInvariantError` if ``X_H`` is not tangent there.
    """
    x = chart.embed(u)
    X = vector_field(sys, x, params).velocity
    T = chart.tangent_matrix(u)
    c, *_ = np.linalg.lstsq(T, X, rcond=None)
    res = float(np.linalg.norm(T @ c - X)) / max(1.0, float(np.linalg.norm(X)))
    if res > TANGENCY_TOL:
        raise NotInvariantError(f"X_H is not tangent to the chart at u={list(map(float, u))} (residual {res:.3e})")
    return X[chart.chart_rows()]


@dataclass(frozen=True)
class InvarianceVerdict:
    invariant: bool
    max_abs_H: float
    max_tangency_residual: float
    max_pullback_residual: float
    samples: int


def invariance_test(
    sys: HamiltonianSystem,
    chart: LegendreChart,
    sample_count: int = 100,
    params: ParamValues = None,
    box: float = 1.0,
    seed: int = 0,
) -> InvarianceVerdict:
    """Sample the chart and test ``H = 0`` there and tangency of ``X_H``."""
    rng = np.random.default_rng(seed)
    hmax = tmax = pmax = 0.0
    for _ in range(sample_count):
        u = rng.uniform(-box, box, chart.n)
        x = chart.embed(u)
        hmax = max(hmax, abs(sys.value(x, params)))
        X = vector_field(sys, x, params).velocity
        T = chart.tangent_matrix(u)
        c, *_ = np.linalg.lstsq(T, X, rcond=None)
        tmax = max(tmax, float(np.linalg.norm(T @ c - X)) / max(1.0, float(np.linalg.norm(X))))
        pmax = max(pmax, chart.pullback_residual(u))
    return InvarianceVerdict(hmax < INVARIANCE_TOL and tmax < TANGENCY_TOL, hmax, tmax, pmax, sample_count)


# -- dynamics on the chart -----------------------------------------------

@dataclass
class ChartBranch:
    curve: Curve
    folds: list[tuple[np.ndarray, np.ndarray, float]]  # (U, tangent, s)
    field: TangentFieldFamily
    param: str

    def equilibrium_count(self, lam: float) -> int:
        L = np.array([c.lam for c in self.curve.samples])
        return int(sum(1 for k in range(len(L) - 1) if (L[k] - lam) * (L[k + 1] - lam) < 0))


def _chart_system(Y: TangentFieldFamily, param: str, fixed: Mapping[str, float]):
    names = chart_names(Y.n, Y.index_set) + Y.params
    comps = list(Y.components)
    jac = [f.diff(v) for f in comps for v in chart_names(Y.n, Y.index_set) + (param,)]
    f = ex.compile_exprs(comps, names)
    J = ex.compile_exprs(jac, names)

    def args(U):
        vals = dict(fixed)
        vals[param] = float(U[-1])
        return tuple(U[:-1].tolist()) + tuple(float(vals[p]) for p in Y.params)

    def G(U):
        return np.array(f(args(U)))

    def DG(U):
        return np.array(J(args(U))).reshape(Y.n, Y.n + 1)

    return G, DG


def trace_chart_branch(
    Y: TangentFieldFamily,
    param: str,
    seed: tuple[float, Sequence[float]],
    lam_range: tuple[float, float],
    control: StepControl = StepControl(),
    params: Mapping[str, float] | None = None,
    direction: int = 1,
) -> ChartBranch:
    """Equilibria of ``Y`` in chart coordinates, traced in ``lambda``.

    An extension ``H`` is conservative, so its equilibria on the chart are
    not isolated in the ambient space (the ``tau = 0`` condition holds
    identically); the chart dynamics carry the bifurcation.
    """
    if param not in Y.params:
        raise KeyError(f"{param!r} is not a parameter of the field")
    fixed = {k: float(v) for k, v in (params or {}).items() if k != param}
    G, DG = _chart_system(Y, param, fixed)
    lam0, u0 = seed
    U = np.append(np.asarray(u0, dtype=float), float(lam0))
    # Newton at fixed lambda on the seed
    for _ in range(50):
        r = G(U)
        if np.max(np.abs(r)) < control.tol:
            break
        U[:-1] -= np.linalg.solve(DG(U)[:, :-1], r)
    curve = trace_curve(G, DG, U, lam_range, control, direction)
    return ChartBranch(curve, curve_folds(G, DG, curve, control), Y, param)
