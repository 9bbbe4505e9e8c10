"""Acceptance criteria 1-13, one test per criterion.

Each test records a ``[PASS]``/``[FAIL]`` line through the ``criterion``
fixture (collected again in the terminal summary) and then asserts it.
"""

import numpy as np
import pytest
from util import (
    converged_equilibria,
    index_sets,
    make_system,
    random_equilibrium_system,
    random_polynomial,
    random_setup,
    rescaled_hessians,
    type_one_instance,
    type_two_instance,
)

from contactdyn.continuation import EventKind, branch_stability_profile, trace_branch
from contactdyn.degeneracy import (
    classify_type_I,
    classify_type_II,
    r3_type_I,
    vector_field_oracle,
)
from contactdyn.equilibria import (
    Kind,
    analyze_point,
    find_equilibrium,
    spectrum_and_quadruplets,
)
from contactdyn.hamiltonian import parse
from contactdyn.legendre import (
    TangentFieldFamily,
    extend,
    restriction,
    trace_chart_branch,
)
from contactdyn.simulate import (
    equilibrium_flow_factor,
    integrate,
    monitor_drift,
    monitor_level,
)

LAM = ["lam"]


def _spectrum_error(got, want):
    """Max distance after matching each wanted eigenvalue to its nearest unused one."""
    got = list(np.asarray(got, dtype=complex))
    err = 0.0
    for w in want:
        k = int(np.argmin([abs(g - w) for g in got]))
        err = max(err, abs(got.pop(k) - w))
    return err


@pytest.fixture(scope="module")
def converged():
    return converged_equilibria(100, 1001)


# -- 1 ---------------------------------------------------------------------

def _sphere_records():
    sys = parse("-lam + q1^2 + p1^2 + z^2", 1, LAM)
    top = find_equilibrium(sys, {"lam": 0.25}, [0.01, -0.01, 0.4], -0.9)
    bottom = find_equilibrium(sys, {"lam": 0.25}, [0.01, -0.01, -0.4], 0.9)
    return top, bottom


def test_criterion_01_type_one_saddle_node(criterion):
    top, bottom = _sphere_records()
    pts = np.max(np.abs(top.point - [0, 0, 0.5])) < 1e-8 and np.max(np.abs(bottom.point - [0, 0, -0.5])) < 1e-8
    taus = abs(top.tau + 1) < 1e-8 and abs(bottom.tau - 1) < 1e-8
    want = [-1.0, -0.5 + np.sqrt(3) / 2 * 1j, -0.5 - np.sqrt(3) / 2 * 1j]
    err = _spectrum_error(top.eigenvalues, want)
    ok = criterion(1, "saddle-node equilibria (0,0,+-0.5), tau = -+1, top eigenvalues {-1, -1/2 +- (sqrt3/2)i}",
                   pts and taus and err < 1e-8,
                   f"points {pts}, tau {taus}, eigenvalue error {err:.3e}, computed "
                   + ", ".join(f"{complex(m):.6f}" for m in top.eigenvalues))
    assert ok


def test_criterion_01_closed_form_spectrum(criterion):
    # tau, (tau +- sqrt((2B - tau)^2 - 16AC)) / 2 with A = C = 1, B = 0, tau = -1
    top, _ = _sphere_records()
    tau, A, B, C = -1.0, 1.0, 0.0, 1.0
    r = np.sqrt(complex((2 * B - tau) ** 2 - 16 * A * C))
    want = [tau, (tau + r) / 2, (tau - r) / 2]
    err = _spectrum_error(top.eigenvalues, want)
    ok = criterion("1b", "top eigenvalues match the planar closed form {-1, -1/2 +- (sqrt15/2)i}",
                   err < 1e-8 and top.tag.kind is Kind.NONDEGENERATE_STABLE, f"error {err:.3e}")
    assert ok


# -- 2 ---------------------------------------------------------------------

def test_criterion_02_fold_hopf(criterion):
    sys = parse("-lam + q1^2 + p1^2 + z^2", 1, LAM)
    br = trace_branch(sys, "lam", (0.25, [0, 0, 0.4, -0.9]), (-0.5, 0.25), direction=-1)
    ev = [e for e in br.events if e.kind is EventKind.FOLD_HOPF]
    at_zero = len(ev) == 1 and abs(ev[0].lam) < 1e-6
    top = max(br.records_at(0.01), key=lambda r: r.z)
    r = np.sqrt(0.01)
    re = np.sort(top.eigenvalues.real)
    parts = np.max(np.abs(re - [-2 * r, -r, -r])) < 1e-6
    ok = criterion(2, "elliptic family: coincident Fold and Hopf at lambda = 0, real parts -2sqrt(lam), -sqrt(lam)",
                   at_zero and parts, f"event lambda {ev[0].lam if ev else None}, real parts {re}")
    assert ok


# -- 3 ---------------------------------------------------------------------

def test_criterion_03_type_two_example(criterion):
    sys = parse("z - p1*q1 + p1^2*q1 - lam*q1", 1, LAM)
    up = find_equilibrium(sys, {"lam": 0.04}, [0, 0.15, 0])
    down = find_equilibrium(sys, {"lam": 0.04}, [0, -0.15, 0])
    eig_err = _spectrum_error(up.eigenvalues, [-1.0, -0.6, -0.4])
    stab = up.tag.stable and not down.tag.stable and abs(up.p[0] - 0.2) < 1e-8 and abs(down.p[0] + 0.2) < 1e-8
    rec = analyze_point(sys, np.zeros(3), {"lam": 0.0})
    q = classify_type_II(sys, rec).quantities
    hs = abs(q["h0"]) < 1e-10 and abs(q["h2"]) < 1e-10 and abs(q["h1"]) > 1e-6
    ok = criterion(3, "Type II example: eigenvalues {-1, -0.6, -0.4}, stable / unstable branches, h0 = h2 = 0, h1 != 0",
                   rec.tag.kind is Kind.TYPE_II and eig_err < 1e-8 and stab and hs,
                   f"eigenvalue error {eig_err:.2e}, h0={q['h0']}, h1={q['h1']}, h2={q['h2']}")
    assert ok


# -- 4 ---------------------------------------------------------------------

def test_criterion_04_five_dimensional_hopf(criterion):
    sys = parse("z + p1*q2 - q1*p2 + 2*lam*q1*p1", 2, LAM)
    rec = analyze_point(sys, np.zeros(5), {"lam": 0.0})
    err = _spectrum_error(rec.eigenvalues, [-1, 1j, -1j, -1 + 1j, -1 - 1j])
    br = trace_branch(sys, "lam", (-0.5, np.zeros(5)), (-0.5, 0.5))
    ev = [e for e in br.events if e.kind is EventKind.HOPF]
    speed = ev[0].crossing_speed if len(ev) == 1 else np.nan
    flips = [iv.stable for iv in branch_stability_profile(br)] == [True, False]
    ok = criterion(4, "5-dim Hopf: spectrum {-1, +-i, -1+-i}, crossing speed 1, stable -> unstable",
                   err < 1e-8 and abs(speed - 1) < 1e-4 and flips and abs(ev[0].lam) < 1e-6,
                   f"spectrum error {err:.2e}, speed {speed}")
    assert ok


# -- 5, 6 ------------------------------------------------------------------

def test_criterion_05_trace_identity(criterion, converged):
    errs = [abs(np.trace(r.L) - (r.n + 1) * r.tau) / max(abs((r.n + 1) * r.tau), 1e-300) for _, r in converged]
    dims = {r.n for _, r in converged}
    ok = criterion(5, "tr L = (n+1) tau on 100 random equilibria",
                   len(converged) == 100 and dims == {1, 2, 3} and max(errs) < 1e-10,
                   f"max relative error {max(errs):.2e}")
    assert ok


def test_criterion_06_quadruplets(criterion, converged):
    worst = 0.0
    for _, r in converged:
        q = spectrum_and_quadruplets(r)
        worst = max(worst, q.max_negation_error, q.max_conjugation_error)
    ok = criterion(6, "shifted spectrum closed under negation and conjugation on the same 100 equilibria",
                   worst < 1e-7, f"max pair error {worst:.2e}")
    assert ok


# -- 7 ---------------------------------------------------------------------

def test_criterion_07_fold_oracle(criterion):
    rng = np.random.default_rng(1007)
    agree = {"I": 0, "II": 0}
    total = {"I": 0, "II": 0}
    for k in range(60):
        n = 1 + k % 3
        zero = k % 2 == 0
        x0 = rng.uniform(-1, 1, 2 * n + 1)
        sys = make_system(n, x0, 0.0, type_one_instance(rng, n, zero))
        rec = analyze_point(sys, x0)
        total["I"] += 1
        agree["I"] += (rec.tag.kind is Kind.TYPE_I
                       and classify_type_I(sys, rec).fold == vector_field_oracle(sys, rec).fold == (not zero))
        sys, x0, tau = type_two_instance(rng, n, zero)
        rec = analyze_point(sys, x0)
        total["II"] += 1
        agree["II"] += (rec.tag.kind is Kind.TYPE_II
                        and classify_type_II(sys, rec).fold == vector_field_oracle(sys, rec).fold == (not zero))
    ok = criterion(7, "Type I / Type II fold verdicts agree with the numeric oracle (>= 50 each)",
                   agree == total and min(total.values()) >= 50, f"agreement {agree} of {total}")
    assert ok


# -- 8 ---------------------------------------------------------------------

def test_criterion_08_r3_factorization(criterion):
    rng = np.random.default_rng(1008)
    worst = 0.0
    for _ in range(200):
        A, B, C, D, E, F = rng.normal(size=6)
        sys = parse(f"({A})*q1^2 + ({B})*q1*p1 + ({C})*p1^2 + ({D})*q1*z + ({E})*p1*z + ({F})*z^2", 1)
        rec = analyze_point(sys, np.zeros(3))
        d1, d2 = r3_type_I(rec.jet)
        gen = classify_type_I(sys, rec).quantities["Delta2"]
        worst = max(worst, abs(d2 - d1 * gen) / max(abs(d2), abs(d1 * gen), 1e-300))
    ok = criterion(8, "R^3 Delta2 = Delta1 * general Delta2 on 200 draws", worst < 1e-10,
                   f"max relative error {worst:.2e}")
    assert ok


# -- 9 ---------------------------------------------------------------------

def test_criterion_09_rescaling(criterion):
    rng = np.random.default_rng(1009)
    worst = 0.0
    count = 0
    while count < 20:
        n = 1 + count % 3
        sys, x0, tau = random_equilibrium_system(rng, n)
        f_src = f"({rng.uniform(1, 3) * rng.choice([-1, 1])}) + " + random_polynomial(rng, n, degree=2, terms=4)
        f0, one, two = rescaled_hessians(sys, f_src, x0, tau)
        if abs(f0) < 0.1:
            continue
        worst = max(worst, float(np.max(np.abs(two - f0 * one)) / max(1.0, np.max(np.abs(f0 * one)))))
        count += 1
    ok = criterion(9, "Hess' of (f eta, f H) equals f(x0) Hess' for 20 random f", worst < 1e-10,
                   f"max entrywise error {worst:.2e}")
    assert ok


# -- 10 --------------------------------------------------------------------

def test_criterion_10_drift_law(criterion):
    rng = np.random.default_rng(1010)
    worst = 0.0  # residual / limit
    done = 0
    for _ in range(60):
        n = 1 + done % 3
        sys = parse(random_polynomial(rng, n, degree=2, terms=6), n)
        tr = integrate(sys, None, rng.uniform(-0.5, 0.5, 2 * n + 1), (0.0, 1.0), rtol=1e-9)
        if tr.truncated:
            continue
        lim = 10 * tr.rtol * tr.scale
        worst = max(worst, monitor_drift(tr) / lim, monitor_level(tr) / lim)
        done += 1
        if done == 20:
            break
    cons_worst = 0.0
    cons = 0
    for _ in range(60):
        n = 1 + cons % 3
        src = random_polynomial(rng, n, degree=3, terms=6).replace("z", "1")
        sys = parse(src, n)
        tr = integrate(sys, None, rng.uniform(-0.5, 0.5, 2 * n + 1), (0.0, 1.0), rtol=1e-9)
        if tr.truncated:
            continue
        cons_worst = max(cons_worst, float(np.max(np.abs(tr.H - tr.H[0]))) / (10 * tr.rtol * tr.scale))
        cons += 1
        if cons == 20:
            break
    ok = criterion(10, "drift law residual < 10 rtol scale on 20 systems; conservative H preserved",
                   done == 20 and cons == 20 and worst < 1 and cons_worst < 1,
                   f"worst residual/limit {worst:.2e}, conservative {cons_worst:.2e}")
    assert ok


# -- 11 --------------------------------------------------------------------

def test_criterion_11_flow_factor(criterion):
    rng = np.random.default_rng(1011)
    worst = 0.0
    for k in range(20):
        sys, x0, tau = random_equilibrium_system(rng, 1 + k % 3)
        rec = analyze_point(sys, x0)
        for t in np.linspace(-1.0, 1.0, 9):
            f, e = equilibrium_flow_factor(sys, rec, float(t))
            worst = max(worst, abs(f - np.exp(rec.tau * t)) / max(1.0, np.exp(rec.tau * t)), abs(e - np.exp(rec.tau * t)))
    ok = criterion(11, "linearized flow scales eta by exp(tau t), |t| <= 1, 20 equilibria", worst < 1e-8,
                   f"max error {worst:.2e}")
    assert ok


# -- 12 --------------------------------------------------------------------

def test_criterion_12_legendre(criterion):
    rng = np.random.default_rng(1012)
    worst = 0.0
    samples = 0
    for n in (1, 2, 3):
        for I in index_sets(n):
            chart, Y = random_setup(rng, n, I, LAM)
            H = extend(chart, Y)
            for u in rng.uniform(-1, 1, (8, n)):
                pv = {"lam": float(rng.uniform(-1, 1))}
                want = Y.evaluate(u, pv)
                worst = max(worst, float(np.max(np.abs(restriction(H, chart, u, pv) - want))) / max(1.0, np.max(np.abs(want))))
                samples += 1
    Ysn = TangentFieldFamily.parse(1, [1], ["lam - q1^2"], LAM)
    br = trace_chart_branch(Ysn, "lam", (0.25, [0.5]), (-0.25, 0.25), direction=-1)
    fold = len(br.folds) == 1 and abs(br.folds[0][0][-1]) < 1e-8
    counts = (br.equilibrium_count(-0.1), br.equilibrium_count(0.1))
    ok = criterion(12, "extend / restriction round trip; chart saddle-node fold at lambda = 0 with count 0 -> 2",
                   samples >= 100 and worst < 1e-10 and fold and counts == (0, 2),
                   f"{samples} samples, max error {worst:.2e}, counts {counts}")
    assert ok


# -- 13 --------------------------------------------------------------------

def test_criterion_13_stability_inequality(criterion):
    rng = np.random.default_rng(1013)
    agree = 0
    count = 0
    while count < 500:
        A, B, C, D, E, F = rng.uniform(-2, 2, 6)
        tau = rng.uniform(-2, 2)
        disc = B * B - B * tau - 4 * A * C
        if abs(tau) < 1e-3 or abs(disc) < 1e-3:
            continue  # margin bands
        src = f"-({tau})*z + ({A})*q1^2 + ({B})*q1*p1 + ({C})*p1^2 + ({D})*q1*z + ({E})*p1*z + ({F})*z^2"
        rec = analyze_point(parse(src, 1), np.zeros(3))
        agree += rec.tag.stable == (tau < 0 and disc < 0)
        count += 1
    ok = criterion(13, "eigenvalue stability tag matches tau < 0 and B^2 - B tau - 4AC < 0 on 500 samples",
                   agree == count, f"{agree} of {count} agree")
    assert ok
