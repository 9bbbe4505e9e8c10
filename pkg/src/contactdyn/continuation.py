"""Pseudo-arclength continuation of equilibria and bifurcation events.

The contact branch is traced in ``U = (q, p, z, tau, lambda)`` on the
square equilibrium system extended by ``lambda``; folds are then regular
points of the curve, and Type I points (where ``tau`` changes sign) need
no special treatment.

The tracer itself (:func:`trace_curve`) is generic over ``G(U) = 0`` with
``U`` having one more component than ``G``; the last component is always
the parameter.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import brentq, linear_sum_assignment

from .degeneracy import FoldCertificate, classify_type_I, classify_type_II
from .equilibria import (
    EquilibriumRecord,
    Kind,
    analyze_point,
    equilibrium_jacobian,
    equilibrium_residual,
    find_equilibrium,
)
from .errors import CorankError, NoConvergenceError
from .hamiltonian import HamiltonianSystem

FOLD_TOL = 1e-10
HOPF_TOL = 1e-9
IMAG_MIN = 1e-6
MERGE_TOL = 1e-6


@dataclass(frozen=True)
class StepControl:
    ds: float = 1e-2
    ds_min: float = 1e-6
    ds_max: float = 1e-1
    shrink_above: int = 8
    grow_below: int = 3
    max_corrector: int = 20
    max_samples: int = 2000
    tol: float = 1e-11


@dataclass(frozen=True)
class CurveSample:
    s: float
    U: np.ndarray
    tangent: np.ndarray
    iterations: int

    @property
    def lam(self) -> float:
        return float(self.U[-1])


@dataclass
class Curve:
    samples: list[CurveSample]
    reason: str


Residual = Callable[[np.ndarray], np.ndarray]
Jacobian = Callable[[np.ndarray], np.ndarray]


def _tangent(DG: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
    if prev is None:
        _, _, Vt = np.linalg.svd(DG)
        return Vt[-1]
    A = np.vstack([DG, prev])
    rhs = np.zeros(A.shape[0])
    rhs[-1] = 1.0
    t = np.linalg.solve(A, rhs)
    return t / np.linalg.norm(t)


def _correct(G: Residual, DG: Jacobian, U: np.ndarray, normal: np.ndarray, anchor: np.ndarray,
             tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Newton on ``[G(U); normal . (U - anchor)] = 0``."""
    for it in range(max_iter + 1):
        r = G(U)
        if np.max(np.abs(r)) < tol and abs(normal @ (U - anchor)) < tol:
            return U, it
        if it == max_iter or not np.all(np.isfinite(r)):
            break
        A = np.vstack([DG(U), normal])
        b = -np.append(r, normal @ (U - anchor))
        try:
            U = U + np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            break
    raise NoConvergenceError("corrector failed", max_iter, float(np.max(np.abs(G(U)))))


def _correct_at_lambda(G, DG, U, lam, tol, max_iter) -> np.ndarray:
    e = np.zeros(U.size)
    e[-1] = 1.0
    U = U.copy()
    U[-1] = lam
    return _correct(G, DG, U, e, U, tol, max_iter)[0]


def trace_curve(
    G: Residual,
    DG: Jacobian,
    U0: np.ndarray,
    lam_range: tuple[float, float],
    control: StepControl = StepControl(),
    direction: int = 1,
) -> Curve:
    """Follow the solution curve of ``G`` through ``U0`` by pseudo-arclength.

    ``direction`` fixes the initial sign of ``dlambda/ds``.  Stops when
    lambda leaves ``lam_range`` (the last sample is then corrected onto
    the boundary), when ``ds`` underflows, or at the sample cap.
    """
    lo, hi = lam_range
    U = np.asarray(U0, dtype=float)
    t = _tangent(DG(U), None)
    if abs(t[-1]) > 1e-12:
        if np.sign(t[-1]) != np.sign(direction):
            t = -t
    elif t[np.argmax(np.abs(t))] * direction < 0:
        t = -t
    samples = [CurveSample(0.0, U.copy(), t, 0)]
    ds = control.ds
    s = 0.0
    reason = "sample cap"
    while len(samples) < control.max_samples:
        pred = U + ds * t
        try:
            Un, it = _correct(G, DG, pred, t, pred, control.tol, control.max_corrector)
            tn = _tangent(DG(Un), t)
        except (NoConvergenceError, np.linalg.LinAlgError):
            ds *= 0.5
            if ds < control.ds_min:
                reason = "step underflow"
                break
            continue
        step = float(np.linalg.norm(Un - U))
        lam = Un[-1]
        if lam < lo or lam > hi:
            edge = lo if lam < lo else hi
            try:
                Ub = _correct_at_lambda(G, DG, U + (edge - U[-1]) / (lam - U[-1]) * (Un - U), edge,
                                        control.tol, control.max_corrector)
                tb = _tangent(DG(Ub), t)
                samples.append(CurveSample(s + float(np.linalg.norm(Ub - U)), Ub, tb, it))
            except (NoConvergenceError, np.linalg.LinAlgError):
                pass
            reason = "parameter range"
            break
        s += step
        U, t = Un, tn
        samples.append(CurveSample(s, U.copy(), t, it))
        if it > control.shrink_above:
            ds = max(ds * 0.5, control.ds_min)
        elif it < control.grow_below:
            ds = min(ds * 2.0, control.ds_max)
    return Curve(samples, reason)


# -- contact branches -----------------------------------------------------

class EventKind(str, Enum):
    FOLD = "Fold"
    HOPF = "Hopf"
    FOLD_HOPF = "FoldHopf"
    MULTI_HOPF = "MultiHopf"
    FOLD_MULTI_HOPF = "FoldMultiHopf"
    PRINCIPAL_CROSSING = "PrincipalCrossing"


@dataclass(frozen=True)
class BifurcationEvent:
    kind: EventKind
    lam: float
    point: np.ndarray
    tau: float
    s: float
    record: EquilibriumRecord
    eigenvalue: complex | None = None
    pair_count: int = 0
    crossing_speed: float | None = None  # dRe/dlambda
    crossing_speed_s: float | None = None  # dRe/ds
    dlam_ds: float = 0.0
    certificate: FoldCertificate | None = None
    residual: float = 0.0


@dataclass(frozen=True)
class BranchSample:
    s: float
    lam: float
    record: EquilibriumRecord
    tangent: np.ndarray
    iterations: int

    @property
    def dlam_ds(self) -> float:
        return float(self.tangent[-1])


@dataclass
class Branch:
    sys: HamiltonianSystem
    param: str
    fixed: dict[str, float]
    samples: list[BranchSample]
    reason: str
    control: StepControl
    tracked: np.ndarray  # (samples, 2n+1) eigenvalues in tracked order
    events: list[BifurcationEvent] = field(default_factory=list)

    @property
    def lams(self) -> np.ndarray:
        return np.array([s.lam for s in self.samples])

    def params_at(self, lam: float) -> tuple[float, ...]:
        vals = dict(self.fixed)
        vals[self.param] = lam
        return self.sys.param_vector(vals)

    def residual_fn(self) -> tuple[Residual, Jacobian]:
        return _branch_system(self.sys, self.param, self.fixed)

    def records_at(self, lam: float) -> list[EquilibriumRecord]:
        """Equilibria on this branch at parameter ``lam`` (one per crossing)."""
        G, DG = self.residual_fn()
        out = []
        L = self.lams
        for k in range(len(L) - 1):
            if (L[k] - lam) * (L[k + 1] - lam) <= 0 and L[k] != L[k + 1]:
                if out and L[k] == lam:
                    continue
                w = (lam - L[k]) / (L[k + 1] - L[k])
                U = (1 - w) * _state(self.samples[k]) + w * _state(self.samples[k + 1])
                U = _correct_at_lambda(G, DG, U, lam, self.control.tol, self.control.max_corrector)
                out.append(analyze_point(self.sys, U[:-2], self.params_at(lam)))
        return out


def _state(sample: BranchSample) -> np.ndarray:
    r = sample.record
    return np.concatenate([r.point, [r.tau, sample.lam]])


def _branch_system(sys: HamiltonianSystem, param: str, fixed: Mapping[str, float]):
    d = sys.dim
    dsys = sys.param_derivative(param)
    base = dict(fixed)

    def pv(lam):
        v = dict(base)
        v[param] = lam
        return sys.param_vector(v)

    def G(U):
        return equilibrium_residual(sys, U[:d], U[d], pv(U[-1]))

    def DG(U):
        p = pv(U[-1])
        J = equilibrium_jacobian(sys, U[:d], U[d], p)
        dl = np.append(dsys.value(U[:d], p), dsys.gradient(U[:d], p))
        return np.hstack([J, dl[:, None]])

    return G, DG


def trace_branch(
    sys: HamiltonianSystem,
    param: str,
    seed: tuple[float, Sequence[float]],
    lam_range: tuple[float, float],
    control: StepControl = StepControl(),
    params: Mapping[str, float] | None = None,
    direction: int = 1,
    detect: bool = True,
) -> Branch:
    """Trace the equilibrium branch through a seed.

    ``seed`` is ``(lambda0, guess)`` where ``guess`` is a point, optionally
    followed by a guess for ``tau``.  Other parameters are fixed at
    ``params``.
    """
    if param not in sys.params:
        raise KeyError(f"{param!r} is not a parameter of the system")
    lo, hi = lam_range
    if not lo < hi:
        raise ValueError("empty parameter range")
    fixed = {k: float(v) for k, v in (params or {}).items() if k != param}
    lam0, guess = seed
    guess = np.asarray(guess, dtype=float)
    d = sys.dim
    vals = dict(fixed)
    vals[param] = float(lam0)
    rec = find_equilibrium(sys, vals, guess[:d], None if guess.size == d else guess[d], tol=control.tol)
    G, DG = _branch_system(sys, param, fixed)
    U0 = np.concatenate([rec.point, [rec.tau, float(lam0)]])
    curve = trace_curve(G, DG, U0, lam_range, control, direction)
    samples = []
    for cs in curve.samples:
        vals[param] = cs.lam
        r = analyze_point(sys, cs.U[:d], sys.param_vector(vals))
        samples.append(BranchSample(cs.s, cs.lam, r, cs.tangent, cs.iterations))
    branch = Branch(sys, param, fixed, samples, curve.reason, control, _track([s.record.eigenvalues for s in samples]))
    if detect:
        branch.events = detect_events(branch)
    return branch


def _track(spectra: list[np.ndarray]) -> np.ndarray:
    """Reorder each spectrum to continue the previous one (nearest neighbour)."""
    out = [np.asarray(spectra[0], dtype=complex)]
    for w in spectra[1:]:
        prev = out[-1]
        cost = np.abs(prev[:, None] - w[None, :])
        # ties between conjugates: prefer matching the sign of the imaginary part
        cost = cost + 1e-12 * (np.sign(prev.imag)[:, None] != np.sign(w.imag)[None, :])
        rows, cols = linear_sum_assignment(cost)
        out.append(w[cols[np.argsort(rows)]])
    return np.array(out)


# -- event detection -----------------------------------------------------

def _refine_between(G: Residual, DG: Jacobian, control: StepControl, a: np.ndarray, b: np.ndarray,
                    sa: float, sb: float, t0: np.ndarray, fn: Callable[[np.ndarray, np.ndarray], float]):
    """Root of ``fn(U, t)`` on the curve between the solutions ``a`` and ``b``.

    Points are corrected onto the curve within the hyperplane through the
    chord point ``a + sigma (b - a)`` normal to the chord, and ``sigma`` is
    found by a bracketing root finder.
    """
    tol, it = control.tol, control.max_corrector
    chord = b - a
    c = chord / np.linalg.norm(chord)
    cache = {}

    def point(sig):
        if sig not in cache:
            anchor = a + sig * chord
            U, _ = _correct(G, DG, anchor.copy(), c, anchor, tol, it)
            t = _tangent(DG(U), t0)
            cache[sig] = (U, t)
        return cache[sig]

    def f(sig):
        return fn(*point(sig))

    fa, fb = f(0.0), f(1.0)
    if fa == 0.0:
        sig = 0.0
    elif fb == 0.0:
        sig = 1.0
    else:
        sig = brentq(f, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    U, t = point(sig)
    return U, t, sa + sig * (sb - sa)


def curve_folds(G: Residual, DG: Jacobian, curve: Curve, control: StepControl = StepControl()):
    """``(U, tangent, s)`` at every sign change of ``dlambda/ds`` along a curve."""
    S = curve.samples
    out = []
    for k in range(len(S) - 1):
        if S[k].tangent[-1] * S[k + 1].tangent[-1] < 0:
            out.append(_refine_between(G, DG, control, S[k].U, S[k + 1].U, S[k].s, S[k + 1].s,
                                       S[k].tangent, lambda U, t: t[-1]))
    return out


def _refine(branch: Branch, k: int, fn: Callable[[np.ndarray, np.ndarray], float]):
    G, DG = branch.residual_fn()
    a, b = branch.samples[k], branch.samples[k + 1]
    return _refine_between(G, DG, branch.control, _state(a), _state(b), a.s, b.s, a.tangent, fn)


def _record(branch: Branch, U: np.ndarray) -> EquilibriumRecord:
    d = branch.sys.dim
    return analyze_point(branch.sys, U[:d], branch.params_at(float(U[-1])))


def _fold_certificate(branch: Branch, rec: EquilibriumRecord) -> FoldCertificate | None:
    scale = np.linalg.norm(rec.amended_hessian) + abs(rec.tau)
    try:
        if abs(rec.tau) < 1e-6 * max(scale, 1.0):
            return classify_type_I(branch.sys, rec)
        return classify_type_II(branch.sys, rec)
    except (CorankError, RuntimeError, np.linalg.LinAlgError):
        return None


def _nearest(w: np.ndarray, target: complex) -> complex:
    return complex(w[np.argmin(np.abs(w - target))])


def detect_events(branch: Branch) -> list[BifurcationEvent]:
    """Folds, Hopf crossings and principal-coefficient sign changes.

    Folds are sign changes of ``dlambda/ds`` refined to ``|dlambda/ds| < 1e-10``;
    Hopf points are sign changes of the real part of a tracked eigenvalue
    with ``Im > 1e-6``, refined to ``|Re| < 1e-9``.  Coincident events are
    merged into FoldHopf, MultiHopf or FoldMultiHopf.
    """
    S = branch.samples
    if len(S) < 2:
        return []
    d = branch.sys.dim
    tr = branch.tracked
    folds, hopfs, crossings = [], [], []
    for k in range(len(S) - 1):
        if S[k].dlam_ds * S[k + 1].dlam_ds < 0:
            U, t, s = _refine(branch, k, lambda U, t: t[-1])
            rec = _record(branch, U)
            folds.append(BifurcationEvent(EventKind.FOLD, float(U[-1]), U[:d].copy(), rec.tau, s, rec,
                                          dlam_ds=float(t[-1]), certificate=_fold_certificate(branch, rec),
                                          residual=abs(float(t[-1]))))
        if S[k].record.tau * S[k + 1].record.tau < 0:
            U, t, s = _refine(branch, k, lambda U, t: U[d])
            rec = _record(branch, U)
            crossings.append(BifurcationEvent(EventKind.PRINCIPAL_CROSSING, float(U[-1]), U[:d].copy(), rec.tau,
                                              s, rec, dlam_ds=float(t[-1]), residual=abs(rec.tau)))
        for j in range(tr.shape[1]):
            m0, m1 = tr[k, j], tr[k + 1, j]
            if not (m0.imag > IMAG_MIN and m1.imag > IMAG_MIN and m0.real * m1.real < 0):
                continue

            def re_part(U, t, m0=m0, m1=m1, U0=_state(S[k]), U1=_state(S[k + 1])):
                w = np.linalg.eigvals(_record(branch, U).L)
                sig = np.clip(np.dot(U - U0, U1 - U0) / np.dot(U1 - U0, U1 - U0), 0.0, 1.0)
                return _nearest(w, m0 + sig * (m1 - m0)).real

            U, t, s = _refine(branch, k, re_part)
            rec = _record(branch, U)
            mu = _nearest(rec.eigenvalues, m0 + (m1 - m0) * 0.5)
            speed, speed_s = _crossing_speed(branch, U, t, mu)
            hopfs.append(BifurcationEvent(EventKind.HOPF, float(U[-1]), U[:d].copy(), rec.tau, s, rec,
                                          eigenvalue=mu, pair_count=1, crossing_speed=speed,
                                          crossing_speed_s=speed_s, dlam_ds=float(t[-1]), residual=abs(mu.real)))
    return _merge(folds, hopfs) + crossings


def _crossing_speed(branch: Branch, U: np.ndarray, t: np.ndarray, mu: complex, h: float = 1e-4):
    """``dRe/dlambda`` and ``dRe/ds`` by central differences along the branch."""
    G, DG = branch.residual_fn()
    vals = []
    for sgn in (-1.0, 1.0):
        anchor = U + sgn * h * t
        Uh, _ = _correct(G, DG, anchor.copy(), t, anchor, branch.control.tol, branch.control.max_corrector)
        w = np.linalg.eigvals(_record(branch, Uh).L)
        vals.append((Uh[-1], _nearest(w, mu).real))
    (l0, r0), (l1, r1) = vals
    speed_s = (r1 - r0) / (2 * h)
    speed = (r1 - r0) / (l1 - l0) if abs(l1 - l0) > 1e-14 else math.inf
    return float(speed), float(speed_s)


def _merge(folds: list[BifurcationEvent], hopfs: list[BifurcationEvent]) -> list[BifurcationEvent]:
    groups: list[list[BifurcationEvent]] = []
    for h in sorted(hopfs, key=lambda e: e.s):
        for g in groups:
            if abs(g[0].lam - h.lam) < MERGE_TOL and np.max(np.abs(g[0].point - h.point)) < MERGE_TOL:
                g.append(h)
                break
        else:
            groups.append([h])
    merged = []
    used = set()
    for g in groups:
        head = g[0]
        fold = next((i for i, f in enumerate(folds) if i not in used and abs(f.lam - head.lam) < MERGE_TOL
                     and np.max(np.abs(f.point - head.point)) < MERGE_TOL), None)
        count = len(g)
        if fold is not None:
            used.add(fold)
            f = folds[fold]
            kind = EventKind.FOLD_HOPF if count == 1 else EventKind.FOLD_MULTI_HOPF
            merged.append(replace(f, kind=kind, eigenvalue=head.eigenvalue, pair_count=count,
                                  crossing_speed=head.crossing_speed, crossing_speed_s=head.crossing_speed_s))
        else:
            kind = EventKind.HOPF if count == 1 else EventKind.MULTI_HOPF
            merged.append(replace(head, kind=kind, pair_count=count))
    merged += [f for i, f in enumerate(folds) if i not in used]
    return sorted(merged, key=lambda e: e.s)


# -- stability profile ---------------------------------------------------

@dataclass(frozen=True)
class StabilityInterval:
    s: tuple[float, float]
    lam: tuple[float, float]
    kind: Kind
    stable: bool


def branch_stability_profile(branch: Branch) -> list[StabilityInterval]:
    """Maximal arclength intervals of constant classification.

    Where the tag changes between two samples the boundary is placed at
    the event lying between them, or at the midpoint if there is none.
    Isolated degenerate samples (exact event points) are absorbed.
    """
    S = branch.samples
    tags = [s.record.tag.kind for s in S]
    keep = [i for i, k in enumerate(tags) if not k.degenerate] or list(range(len(S)))
    out = []
    start = keep[0]
    s0, l0 = S[0].s, S[0].lam
    for a, b in zip(keep, keep[1:]):
        if tags[a] == tags[b]:
            continue
        ev = [e for e in branch.events if S[a].s <= e.s <= S[b].s]
        if ev:
            sb, lb = ev[0].s, ev[0].lam
        else:
            sb, lb = 0.5 * (S[a].s + S[b].s), 0.5 * (S[a].lam + S[b].lam)
        out.append(StabilityInterval((s0, sb), (l0, lb), tags[start], tags[start] is Kind.NONDEGENERATE_STABLE))
        start, s0, l0 = b, sb, lb
    out.append(StabilityInterval((s0, S[-1].s), (l0, S[-1].lam), tags[start],
                                 tags[start] is Kind.NONDEGENERATE_STABLE))
    return out


# -- export ----------------------------------------------------------------

def branch_csv(branch: Branch) -> str:
    sysn = branch.sys
    d = sysn.dim
    head = ["s", "lambda", *sysn.coords, "tau"]
    for j in range(d):
        head += [f"re_mu{j + 1}", f"im_mu{j + 1}"]
    head += ["tag", "stable"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for smp, mus in zip(branch.samples, branch.tracked):
        r = smp.record
        row = [repr(smp.s), repr(smp.lam), *(repr(float(x)) for x in r.point), repr(r.tau)]
        for m in mus:
            row += [repr(float(m.real)), repr(float(m.imag))]
        row += [r.tag.kind.value, int(r.tag.stable)]
        w.writerow(row)
    return buf.getvalue()


def events_csv(events: Sequence[BifurcationEvent], n: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "lambda", "s", "tau", "re_mu", "im_mu", "pair_count", "dre_dlambda", "dlambda_ds"])
    for e in events:
        mu = e.eigenvalue if e.eigenvalue is not None else complex("nan")
        w.writerow([e.kind.value, repr(e.lam), repr(e.s), repr(e.tau), repr(mu.real), repr(mu.imag),
                    e.pair_count, repr(e.crossing_speed) if e.crossing_speed is not None else "", repr(e.dlam_ds)])
    return buf.getvalue()


def gnuplot_script(csv_files: Sequence[str], coordinate: str, coords: Sequence[str], title: str = "") -> str:
    """Bifurcation diagram: ``coordinate`` against lambda, solid where stable, dashed where not."""
    d = len(coords)
    col = 3 + list(coords).index(coordinate)
    flag = 5 + 3 * d  # s, lambda, coords, tau, (re, im) per eigenvalue, tag, stable
    lines = [
        "set datafile separator ','",
        "set key off",
        f"set title '{title}'",
        "set xlabel 'lambda'",
        f"set ylabel '{coordinate}'",
        "stable(c) = (column(c) == 1)",
        "plot \\",
    ]
    parts = []
    for f in csv_files:
        parts.append(f"  '{f}' skip 1 using 2:(stable({flag}) ? ${col} : NaN) with lines lw 2 dt 1 lc rgb 'black'")
        parts.append(f"  '{f}' skip 1 using 2:(stable({flag}) ? NaN : ${col}) with lines lw 2 dt 2 lc rgb 'black'")
    lines.append(", \\\n".join(parts))
    return "\n".join(lines) + "\n"
