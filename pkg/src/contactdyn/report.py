"""Conversion of analysis results to JSON-ready structures.

Floats are written with ``repr`` (shortest round-trip form, at least 15
significant digits where needed); complex numbers become ``[re, im]``.
"""

from __future__ import annotations

import json
from typing import Any

import numpy as np

from . import __version__
from .continuation import Branch, BifurcationEvent, branch_stability_profile
from .degeneracy import DegeneracyReport, FoldCertificate, VersalityVerdict
from .equilibria import EquilibriumRecord, QuadrupletReport

SCHEMA = "contactdyn.report/1"


def _f(x) -> float:
    return float(x)


def cplx(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def matrix(M) -> list[list[float]]:
    return [[_f(v) for v in row] for row in np.asarray(M)]


def vector(v) -> list[float]:
    return [_f(x) for x in np.asarray(v).ravel()]


def record_dict(rec: EquilibriumRecord) -> dict[str, Any]:
    t = rec.tag
    trace_err = abs(np.trace(rec.L) - (rec.n + 1) * rec.tau) / max(1.0, abs((rec.n + 1) * rec.tau))
    return {
        "point": vector(rec.point),
        "params": list(rec.params),
        "tau": rec.tau,
        "eigenvalues": [cplx(m) for m in rec.eigenvalues],
        "linearization": matrix(rec.L),
        "amended_hessian": matrix(rec.amended_hessian),
        "residual": rec.residual,
        "newton_iterations": rec.iterations,
        "trace_identity_error": float(trace_err),
        "classification": {
            "kind": t.kind.value,
            "stable": t.stable,
            "min_abs_eigenvalue": t.min_abs_eigenvalue,
            "abs_tau": t.abs_tau,
            "abs_det_hessian": t.abs_det,
            "max_real_part": t.max_real_part,
            "sufficient_condition": t.sufficient_stable,
            "planar_criterion": t.planar_stable,
        },
    }


def quadruplet_dict(q: QuadrupletReport) -> dict[str, Any]:
    return {
        "ok": q.ok,
        "shifted": [cplx(m) for m in q.shifted],
        "max_negation_error": q.max_negation_error,
        "max_conjugation_error": q.max_conjugation_error,
        "hamiltonian_symmetry_error": q.hamiltonian_symmetry_error,
        "hamiltonian_hessian_error": q.hamiltonian_hessian_error,
    }


def certificate_dict(c: FoldCertificate | None) -> dict[str, Any] | None:
    if c is None:
        return None
    return {
        "type": c.kind,
        "fold": c.fold,
        "fold_value": c.fold_value,
        "margin": c.margin,
        "kernel": vector(c.a),
        "cokernel": vector(c.v),
        "quantities": {k: _f(v) for k, v in c.quantities.items()},
        "kernel_residual": c.kernel_residual,
        "cokernel_residual": c.cokernel_residual,
    }


def versality_dict(v: VersalityVerdict | None) -> dict[str, Any] | None:
    if v is None:
        return None
    return {"versal": v.versal, "direction": vector(v.direction), "distance": v.distance, "margin": v.margin}


def degeneracy_dict(d: DegeneracyReport | None) -> dict[str, Any] | None:
    if d is None:
        return None
    return {"kind": d.kind.value, "certificate": certificate_dict(d.certificate),
            "versality": versality_dict(d.versality), "error": d.error}


def event_dict(e: BifurcationEvent) -> dict[str, Any]:
    return {
        "kind": e.kind.value,
        "lambda": e.lam,
        "s": e.s,
        "point": vector(e.point),
        "tau": e.tau,
        "eigenvalue": None if e.eigenvalue is None else cplx(e.eigenvalue),
        "pair_count": e.pair_count,
        "crossing_speed": e.crossing_speed,
        "crossing_speed_arclength": e.crossing_speed_s,
        "dlambda_ds": e.dlam_ds,
        "refinement_residual": e.residual,
        "certificate": certificate_dict(e.certificate),
    }


def branch_dict(b: Branch, csv_file: str | None = None) -> dict[str, Any]:
    lams = b.lams
    trace_err = max(abs(np.trace(s.record.L) - (s.record.n + 1) * s.record.tau) / max(1.0, abs(s.record.tau))
                    for s in b.samples)
    return {
        "parameter": b.param,
        "samples": len(b.samples),
        "termination": b.reason,
        "lambda_min": float(lams.min()),
        "lambda_max": float(lams.max()),
        "arclength": b.samples[-1].s,
        "max_residual": max(s.record.residual for s in b.samples),
        "max_trace_identity_error": float(trace_err),
        "events": [event_dict(e) for e in b.events],
        "stability_profile": [
            {"lambda": list(iv.lam), "s": list(iv.s), "kind": iv.kind.value, "stable": iv.stable}
            for iv in branch_stability_profile(b)
        ],
        "csv": csv_file,
    }


def envelope(command: str, config_text: str) -> dict[str, Any]:
    return {"schema": SCHEMA, "version": __version__, "command": command, "config": config_text}


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, complex):
        return cplx(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, default=_default) + "\n"


def loads(text: str) -> dict[str, Any]:
    return json.loads(text)
