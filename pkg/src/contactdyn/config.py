"""Analysis configuration: a YAML document validated into plain dataclasses.

See ``docs/schemas.md`` for the full schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
import yaml

from .continuation import StepControl
from .errors import ConfigError, ExpressionError
from .hamiltonian import HamiltonianSystem, parse
from .legendre import LegendreChart, TangentFieldFamily, chart_names

FORMATS = ("json", "csv")


@dataclass(frozen=True)
class Seed:
    point: tuple[float, ...]
    tau: float | None = None
    params: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ContinuationConfig:
    parameter: str
    lam_range: tuple[float, float]
    step: StepControl
    direction: int = 1
    plot_coordinate: str = "z"


@dataclass(frozen=True)
class SimulateConfig:
    t_span: tuple[float, float]
    initial_states: tuple[tuple[float, ...], ...]
    rtol: float = 1e-9
    atol: float = 1e-12


@dataclass(frozen=True)
class LegendreConfig:
    index_set: tuple[int, ...]
    generating_function: str
    field: tuple[str, ...]
    samples: int = 100
    continuation_seed: Seed | None = None


@dataclass(frozen=True)
class SeedGrid:
    lower: float = -1.0
    upper: float = 1.0
    points: int = 3


@dataclass(frozen=True)
class AnalysisConfig:
    n: int
    expression: str | None
    parameters: Mapping[str, float]
    seeds: tuple[Seed, ...]
    continuation: ContinuationConfig | None
    simulate: SimulateConfig | None
    legendre: LegendreConfig | None
    out_dir: str | None
    formats: tuple[str, ...]
    tolerance: float
    seed_grid: SeedGrid
    source: str  # verbatim text

    def system(self) -> HamiltonianSystem:
        if self.expression is None:
            raise ConfigError("system.expression is required for this command")
        return parse(self.expression, self.n, list(self.parameters))

    def param_values(self, override: Mapping[str, float] | None = None) -> dict[str, float]:
        vals = dict(self.parameters)
        vals.update(override or {})
        return vals

    def chart(self) -> tuple[LegendreChart, TangentFieldFamily]:
        if self.legendre is None:
            raise ConfigError("config has no legendre block")
        lg = self.legendre
        try:
            chart = LegendreChart.parse(self.n, lg.index_set, lg.generating_function)
            Y = TangentFieldFamily.parse(self.n, lg.index_set, lg.field, list(self.parameters))
        except ExpressionError as e:
            raise ConfigError(f"legendre: {e}") from e
        return chart, Y


def _num(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise ConfigError(f"{where}: expected a number, got {x!r}")
    try:
        v = float(x)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {x!r}") from None
    if not np.isfinite(v):
        raise ConfigError(f"{where}: must be finite")
    return v


def _vec(x: Any, where: str, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(x, (list, tuple)):
        raise ConfigError(f"{where}: expected a list")
    v = tuple(_num(e, f"{where}[{i}]") for i, e in enumerate(x))
    if length is not None and len(v) != length:
        raise ConfigError(f"{where}: expected {length} entries, got {len(v)}")
    return v


def _block(doc: Mapping, key: str) -> Mapping | None:
    b = doc.get(key)
    if b is None:
        return None
    if not isinstance(b, Mapping):
        raise ConfigError(f"{key}: expected a mapping")
    return b


def _seed(raw: Any, where: str, dim: int, params: Mapping[str, float]) -> Seed:
    if isinstance(raw, (list, tuple)):
        raw = {"point": raw}
    if not isinstance(raw, Mapping) or "point" not in raw:
        raise ConfigError(f"{where}: expected a mapping with 'point'")
    pt = _vec(raw["point"], f"{where}.point")
    tau = None
    if len(pt) == dim + 1:
        pt, tau = pt[:dim], pt[dim]
    elif len(pt) != dim:
        raise ConfigError(f"{where}.point: expected {dim} coordinates (optionally plus tau), got {len(pt)}")
    if raw.get("tau") is not None:
        tau = _num(raw["tau"], f"{where}.tau")
    over = raw.get("params") or {}
    if not isinstance(over, Mapping):
        raise ConfigError(f"{where}.params: expected a mapping")
    unknown = set(over) - set(params)
    if unknown:
        raise ConfigError(f"{where}.params: unknown parameters {sorted(unknown)}")
    return Seed(pt, tau, {k: _num(v, f"{where}.params.{k}") for k, v in over.items()})


def load_config(text: str) -> AnalysisConfig:
    """Parse and validate a configuration document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"config is not valid YAML: {e}") from e
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a mapping")
    known = {"system", "seeds", "continuation", "simulate", "legendre", "output", "tolerance", "seed_grid"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    sysb = _block(doc, "system")
    if sysb is None:
        raise ConfigError("missing system block")
    n = sysb.get("n")
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ConfigError(f"system.n: expected a positive integer, got {n!r}")
    expression = sysb.get("expression")
    if expression is not None and not isinstance(expression, str):
        raise ConfigError("system.expression: expected a string")
    praw = sysb.get("parameters") or {}
    if not isinstance(praw, Mapping):
        raise ConfigError("system.parameters: expected a mapping of name to default value")
    params = {str(k): _num(v, f"system.parameters.{k}") for k, v in praw.items()}
    if expression is not None:
        try:
            parse(expression, n, list(params))
        except ExpressionError as e:
            raise ConfigError(f"system.expression: {e}") from e
        except ValueError as e:
            raise ConfigError(f"system: {e}") from e
    dim = 2 * n + 1

    seeds_raw = doc.get("seeds") or []
    if not isinstance(seeds_raw, list):
        raise ConfigError("seeds: expected a list")
    seeds = tuple(_seed(s, f"seeds[{i}]", dim, params) for i, s in enumerate(seeds_raw))

    cont = None
    cb = _block(doc, "continuation")
    if cb is not None:
        pname = cb.get("parameter")
        if pname not in params:
            raise ConfigError(f"continuation.parameter: {pname!r} is not a declared parameter")
        lo, hi = _vec(cb.get("range"), "continuation.range", 2)
        if not lo < hi:
            raise ConfigError("continuation.range: must be nonempty (lower < upper)")
        sb = cb.get("step") or {}
        if not isinstance(sb, Mapping):
            raise ConfigError("continuation.step: expected a mapping")
        allowed = set(StepControl.__dataclass_fields__)
        bad = set(sb) - allowed
        if bad:
            raise ConfigError(f"continuation.step: unknown keys {sorted(bad)}")
        kw = {}
        for k, v in sb.items():
            kw[k] = int(_num(v, f"continuation.step.{k}")) if k in ("shrink_above", "grow_below", "max_corrector", "max_samples") else _num(v, f"continuation.step.{k}")
        step = StepControl(**kw)
        if not 0 < step.ds_min <= step.ds <= step.ds_max:
            raise ConfigError("continuation.step: need 0 < ds_min <= ds <= ds_max")
        direction = cb.get("direction", 1)
        if direction not in (1, -1):
            raise ConfigError("continuation.direction: must be 1 or -1")
        coord = cb.get("plot_coordinate", "z")
        if coord not in parse("0", n).coords:
            raise ConfigError(f"continuation.plot_coordinate: {coord!r} is not a coordinate")
        cont = ContinuationConfig(pname, (lo, hi), step, direction, coord)

    sim = None
    smb = _block(doc, "simulate")
    if smb is not None:
        t0, t1 = _vec(smb.get("t_span"), "simulate.t_span", 2)
        states = smb.get("initial_states") or []
        if not isinstance(states, list) or not states:
            raise ConfigError("simulate.initial_states: expected a nonempty list")
        sim = SimulateConfig(
            (t0, t1),
            tuple(_vec(s, f"simulate.initial_states[{i}]", dim) for i, s in enumerate(states)),
            _num(smb.get("rtol", 1e-9), "simulate.rtol"),
            _num(smb.get("atol", 1e-12), "simulate.atol"),
        )

    leg = None
    lb = _block(doc, "legendre")
    if lb is not None:
        I = lb.get("index_set", [])
        if not isinstance(I, list) or any(isinstance(i, bool) or not isinstance(i, int) for i in I):
            raise ConfigError("legendre.index_set: expected a list of integers")
        if any(not 1 <= i <= n for i in I) or len(set(I)) != len(I):
            raise ConfigError(f"legendre.index_set: {I} is not a subset of 1..{n}")
        Sg = lb.get("generating_function", "0")
        if not isinstance(Sg, (str, int, float)):
            raise ConfigError("legendre.generating_function: expected an expression")
        names = chart_names(n, I)
        fr = lb.get("field")
        if isinstance(fr, Mapping):
            if set(fr) != set(names):
                raise ConfigError(f"legendre.field: components {sorted(fr)} do not match the chart "
                                  f"coordinates {list(names)} for index set {I}")
            comps = tuple(str(fr[k]) for k in names)
        elif isinstance(fr, list):
            if len(fr) != n:
                raise ConfigError(f"legendre.field: expected {n} components, got {len(fr)}")
            comps = tuple(str(c) for c in fr)
        else:
            raise ConfigError("legendre.field: expected a list or a mapping")
        cs = None
        if lb.get("continuation_seed") is not None:
            raw = lb["continuation_seed"]
            if not isinstance(raw, Mapping) or "point" not in raw:
                raise ConfigError("legendre.continuation_seed: expected a mapping with 'point'")
            cs = Seed(_vec(raw["point"], "legendre.continuation_seed.point", n), None,
                      {k: _num(v, f"legendre.continuation_seed.params.{k}") for k, v in (raw.get("params") or {}).items()})
        samples = lb.get("samples", 100)
        if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
            raise ConfigError("legendre.samples: expected a positive integer")
        leg = LegendreConfig(tuple(I), str(Sg), comps, samples, cs)

    ob = _block(doc, "output") or {}
    out_dir = ob.get("directory")
    formats = ob.get("formats", list(FORMATS))
    if not isinstance(formats, list) or set(formats) - set(FORMATS):
        raise ConfigError(f"output.formats: expected a subset of {list(FORMATS)}")
    tol = _num(doc.get("tolerance", 1e-11), "tolerance")
    if tol <= 0:
        raise ConfigError("tolerance: must be positive")
    gb = _block(doc, "seed_grid") or {}
    grid = SeedGrid(_num(gb.get("lower", -1.0), "seed_grid.lower"), _num(gb.get("upper", 1.0), "seed_grid.upper"),
                    int(_num(gb.get("points", 3), "seed_grid.points")))
    if not grid.lower < grid.upper or grid.points < 1:
        raise ConfigError("seed_grid: need lower < upper and points >= 1")
    cfg = AnalysisConfig(n, expression, params, seeds, cont, sim, leg,
                         None if out_dir is None else str(out_dir), tuple(formats), tol, grid, text)
    if leg is not None:
        cfg.chart()
    return cfg
