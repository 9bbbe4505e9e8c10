"""Fold tests at degenerate equilibria and versality of unfoldings.

All closed-form tests work in the centred Darboux frame of the record, so
the equilibrium sits at the origin.  A map ``F`` has a fold at a zero
``x0`` when ``DF(x0)`` has corank one with kernel ``a`` and cokernel ``v``
and ``v . D^2F(x0)(a, a) != 0``; the brute-force version of that test is
:func:`fold_oracle`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .equilibria import EquilibriumRecord, Kind
from .errors import CorankError, DimensionError
from .geometry import field_from_jet, second_derivative_from_jet
from .hamiltonian import HamiltonianSystem, Jet3, PlanarJet, jet3
from .linalg import RANK_GAP, image_distance, null_spaces

FOLD_MARGIN = 1e-7


@dataclass(frozen=True)
class FoldCertificate:
    kind: str  # "I", "II" or "oracle"
    a: np.ndarray
    v: np.ndarray
    fold_value: float
    margin: float
    fold: bool
    quantities: dict[str, float] = field(default_factory=dict)
    kernel_residual: float = 0.0
    cokernel_residual: float = 0.0


@dataclass(frozen=True)
class VersalityVerdict:
    direction: np.ndarray
    distance: float
    margin: float
    versal: bool


@dataclass(frozen=True)
class DegeneracyReport:
    kind: Kind
    certificate: FoldCertificate | None
    versality: VersalityVerdict | None = None
    error: str | None = None


def fold_value(T: np.ndarray, a: np.ndarray, v: np.ndarray) -> float:
    """``v . T(a, a)`` for a (d, d, d) second-derivative array."""
    return float(np.einsum("k,kij,i,j->", v, T, a, a))


def _field_second_derivative(jet: Jet3) -> np.ndarray:
    return second_derivative_from_jet(jet.gradient, jet.hessian, jet.third, jet.point[jet.n: 2 * jet.n])


def _margin(T: np.ndarray, rel: float) -> float:
    return rel * max(1.0, float(np.max(np.abs(T))))


def _residuals(L: np.ndarray, a: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    s = max(1.0, float(np.max(np.abs(L))))
    return (float(np.max(np.abs(L @ a))) / (s * np.max(np.abs(a))),
            float(np.max(np.abs(v @ L))) / (s * np.max(np.abs(v))))


# -- Type I ----------------------------------------------------------------

def r3_type_I(jet: Jet3) -> tuple[float, float]:
    """``(Delta1, Delta2)`` for a Type I point in R^3.

    ``Delta1 = B^2 - 4AC`` and ``Delta2 = 2[(B^2 - 4AC)F + AE^2 - BDE + CD^2]``,
    which is ``Delta1`` times the general-dimension ``Delta2``.
    """
    c = PlanarJet.from_jet(jet)
    d1 = c.B * c.B - 4 * c.A * c.C
    d2 = 2 * (d1 * c.F + c.A * c.E ** 2 - c.B * c.D * c.E + c.C * c.D ** 2)
    return d1, d2


def classify_type_I(sys: HamiltonianSystem, record: EquilibriumRecord, margin: float = FOLD_MARGIN) -> FoldCertificate:
    """Fold test at an equilibrium with vanishing principal coefficient.

    Solves ``[[H_qq, H_qp], [H_pq, H_pp]] (a_q, a_p) = -(H_qz, H_pz)`` and
    returns ``Delta2 = H_zq a_q + H_zp a_p + H_zz``.  The kernel vector is
    ``a = (a_q, a_p, 1)`` and the cokernel is ``dz``.  The fold value
    ``v . D^2(X_H)(a, a)`` equals the second derivative of ``p H_p - H``
    along ``a``, which is ``-Delta2``; the two are cross-checked.
    """
    n = record.n
    if null_spaces(record.L_xi).corank:
        raise CorankError("L_xi is singular: zero eigenvalue is not simple", null_spaces(record.L_xi).corank)
    jet = record.jet
    h = jet.hessian
    K = h[:2 * n, :2 * n]
    a_xi = np.linalg.solve(K, -h[:2 * n, -1])
    delta2 = float(h[-1, :2 * n] @ a_xi + h[-1, -1])
    a = np.append(a_xi, 1.0)
    v = np.zeros(2 * n + 1)
    v[-1] = 1.0
    T = _field_second_derivative(jet)
    value = fold_value(T, a, v)
    m = _margin(T, margin) * max(1.0, float(a @ a))
    if abs(value + delta2) > 1e-8 * max(1.0, abs(delta2)) * max(1.0, float(a @ a)):
        raise RuntimeError(f"fold value {value!r} inconsistent with Delta2 {delta2!r}")
    q = {"Delta2": delta2}
    if n == 1:
        d1, d2 = r3_type_I(jet)
        q.update(Delta1=float(d1), Delta2_r3=float(d2))
    kr, cr = _residuals(record.L, a, v)
    return FoldCertificate("I", a, v, value, m, bool(abs(delta2) > m), q, kr, cr)


# -- Type II ---------------------------------------------------------------

def r3_polynomials(jet: Jet3, tau: float) -> tuple[float, float, float]:
    """``(h0, h1, h2)`` from the 3-jet at an equilibrium in R^3 (``B1 = B - tau``)."""
    if jet.n != 1:
        raise DimensionError("the h-polynomials are defined for n = 1 only")
    c = PlanarJet.from_jet(jet)
    A, B, C, D, E = c.A, c.B, c.C, c.D, c.E
    P111, P112, P122, P222 = (c.P[k] for k in ((0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1)))
    B1 = B - tau
    h0 = B * B1 - 4 * A * C
    h1 = (B ** 2 * (3 * B * E - 6 * C * D - E * tau)
          + 24 * B * C ** 2 * P111 - 4 * B * C * (3 * B - tau) * P112
          + 2 * B ** 2 * (3 * B - 2 * tau) * P122 - 12 * A * B ** 2 * P222)
    h2 = (2 * A * B1 * (3 * B * E - 6 * C * D - E * tau)
          + 12 * B1 ** 2 * C * P111 - 2 * B1 ** 2 * (3 * B - tau) * P112
          + 4 * A * B1 * (3 * B - 2 * tau) * P122 - 24 * A ** 2 * B1 * P222)
    return h0, h1, h2


def classify_type_II(sys: HamiltonianSystem, record: EquilibriumRecord, margin: float = FOLD_MARGIN) -> FoldCertificate:
    """Fold test at an equilibrium with ``tau != 0`` and singular ``Hess'``.

    The kernel ``a = (a_xi, 0)`` is the null vector of ``L_xi``; the
    cokernel is ``v = (w, zeta)`` with ``w L_xi = 0`` and
    ``zeta = -(w . rho) / tau``.  Both are unit-normalized before the
    fold value is formed, so the verdict does not depend on their scale.
    In R^3 the verdict is ``h1 != 0 or h2 != 0``; elsewhere it is the fold
    value itself.
    """
    n = record.n
    tau = record.tau
    ns = null_spaces(record.L_xi)
    if ns.corank != 1:
        raise CorankError(f"L_xi has corank {ns.corank}, expected 1", ns.corank)
    a = np.append(ns.right[:, 0], 0.0)
    w = ns.left[:, 0]
    zeta = -float(w @ record.rho) / tau
    v = np.append(w, zeta)
    v = v / np.linalg.norm(v)
    T = _field_second_derivative(record.jet)
    value = fold_value(T, a, v)
    m = _margin(T, margin)
    q: dict[str, float] = {"zeta": zeta}
    fold = abs(value) > m
    if n == 1:
        h0, h1, h2 = r3_polynomials(record.jet, tau)
        c = PlanarJet.from_jet(record.jet)
        q.update(h0=h0, h1=h1, h2=h2, B1=c.B - tau)
        scale = max(1.0, abs(tau), max(abs(x) for x in (c.A, c.B, c.C, c.D, c.E)),
                    max(abs(x) for x in c.P.values()))
        m = margin * scale ** 4
        fold = abs(h1) > m or abs(h2) > m
    kr, cr = _residuals(record.L, a, v)
    return FoldCertificate("II", a, v, value, float(m), bool(fold), {k: float(x) for k, x in q.items()}, kr, cr)


# -- brute-force oracle ----------------------------------------------------

def fold_oracle(
    F: Sequence[ex.Expr],
    names: Sequence[str],
    x0,
    params: Mapping[str, float] | None = None,
    margin: float = FOLD_MARGIN,
    gap: float = RANK_GAP,
) -> FoldCertificate:
    """Fold recognition for a map given by expressions in ``names``.

    The Jacobian and second derivatives are symbolic; the kernel and
    cokernel come from an SVD.  Only the zero/nonzero verdict is meant to
    be compared with the closed-form tests.
    """
    d = len(names)
    if len(F) != d:
        raise DimensionError(f"map has {len(F)} components on {d} variables")
    params = dict(params or {})
    layout = list(names) + list(params)
    x = np.asarray(x0, dtype=float)
    vals = tuple(x.tolist()) + tuple(params.values())
    D1 = [[f.diff(u) for u in names] for f in F]
    J = np.array(ex.compile_exprs([e for row in D1 for e in row], layout)(vals)).reshape(d, d)
    ns = null_spaces(J, gap)
    if ns.corank != 1:
        raise CorankError(f"Jacobian has corank {ns.corank}, expected 1", ns.corank)
    D2 = [D1[k][i].diff(names[j]) for k in range(d) for i in range(d) for j in range(d)]
    T = np.array(ex.compile_exprs(D2, layout)(vals)).reshape(d, d, d)
    a = ns.right[:, 0]
    v = ns.left[:, 0]
    value = fold_value(T, a, v)
    m = _margin(T, margin)
    kr, cr = _residuals(J, a, v)
    return FoldCertificate("oracle", a, v, value, m, bool(abs(value) > m), {}, kr, cr)


def vector_field_oracle(sys: HamiltonianSystem, record: EquilibriumRecord, margin: float = FOLD_MARGIN) -> FoldCertificate:
    """:func:`fold_oracle` applied to ``X_H`` in the original coordinates."""
    from .geometry import vector_field_exprs

    params = dict(zip(sys.params, record.params))
    return fold_oracle(vector_field_exprs(sys), sys.coords, record.point, params, margin)


# -- versality -------------------------------------------------------------

def versality_check(L: np.ndarray, direction, margin: float = FOLD_MARGIN) -> VersalityVerdict:
    """Versal iff the deformation velocity is not in the image of ``L``."""
    d = np.asarray(direction, dtype=float)
    dist = image_distance(L, d)
    m = margin * max(1.0, float(np.linalg.norm(d)))
    return VersalityVerdict(d, dist, m, bool(dist > m))


def deformation_direction(sys: HamiltonianSystem, record: EquilibriumRecord, param: str) -> np.ndarray:
    """``d/dlambda X_{H_lambda}`` at the equilibrium, in the centred frame.

    ``X`` is linear in ``H``, so this is the vector field of
    ``dH/dlambda`` evaluated at the point.
    """
    dsys = sys.param_derivative(param)
    j = jet3(dsys, record.point, record.params)
    u = field_from_jet(j.gradient, j.value, record.p)
    return np.linalg.solve(record.frame, u)


def analyze_degeneracy(
    sys: HamiltonianSystem,
    record: EquilibriumRecord,
    param: str | None = None,
    margin: float = FOLD_MARGIN,
) -> DegeneracyReport:
    """Run the fold test matching the record's tag, and versality if ``param`` is given."""
    kind = record.tag.kind
    if kind not in (Kind.TYPE_I, Kind.TYPE_II):
        return DegeneracyReport(kind, None, None, None if kind is not Kind.HIGHER_DEGENERATE else "higher degeneracy not classified")
    try:
        cert = classify_type_I(sys, record, margin) if kind is Kind.TYPE_I else classify_type_II(sys, record, margin)
    except CorankError as e:
        return DegeneracyReport(kind, None, None, str(e))
    vers = None
    if param is not None:
        vers = versality_check(record.L, deformation_direction(sys, record, param), margin)
    return DegeneracyReport(kind, cert, vers)
