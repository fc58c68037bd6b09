"""Scenario files: TOML documents describing one analytic, run, sweep or psd job.

Layout (all values plain SI numbers)::

    [piezo]                 c0, alpha, k_e, r_leak      (or a [piezo.geometry] block)
    [piezo.geometry]        e_coeff, eps_s, c_e, area, t_p, w_p
    [excitation]            variant = harmonic | multimodal | random, plus its fields
    [interface.standard]    load = resistive | constant_voltage, r_load | v_load, c_r, diode_drop
    [interface.sece]        output = capacitive | constant_voltage, r_load, c_out | v_load,
                            extraction = ideal | flyback, efficiency | l_ind, r_series,
                            flyback_diode_drop, trigger_min_v
    [sim]                   duration, dt, event_time_tol, settle
    [job]                   kind, seed, r_loads | r_min, r_max, points, workers,
                            segment_len, overlap, psd_decimation
    [output]                directory, decimation

Unknown keys are rejected; every error names the dotted path of the key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import tomli
import tomli_w

from .analysis import DEFAULT_GRID_POINTS
from .circuit_sim import (Capacitive, ConstantVoltage, Flyback, Ideal, Resistive, SeceInterfaceSpec,
                          StandardInterfaceSpec)
from .errors import ConfigError, PegError
from .excitation import DEFAULT_RANDOM_MODES, Harmonic, Mode, Multimodal, RandomModal, ResonantMode
from .lumped_model import MaterialGeometry, PiezoParams, derive_lumped

JOB_KINDS = ("analytic", "run", "sweep", "psd")
GEOMETRY_KEYS = ("e_coeff", "eps_s", "c_e", "area", "t_p", "w_p")


@dataclass(frozen=True)
class SimSection:
    duration: float | None = None
    dt: float | None = None
    event_time_tol: float | None = None
    settle: float = 0.2


@dataclass(frozen=True)
class JobSection:
    kind: str
    seed: int = 0
    r_loads: tuple[float, ...] | None = None
    r_min: float | None = None
    r_max: float | None = None
    points: int = DEFAULT_GRID_POINTS
    workers: int = 1
    segment_len: int = 8192
    overlap: float = 0.5
    psd_decimation: int = 40


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    decimation: int = 1


@dataclass(frozen=True)
class ScenarioConfig:
    piezo: PiezoParams
    excitation: Harmonic | Multimodal | RandomModal
    job: JobSection
    standard: StandardInterfaceSpec | None = None
    sece: SeceInterfaceSpec | None = None
    sim: SimSection = field(default_factory=SimSection)
    output: OutputSection = field(default_factory=OutputSection)
    geometry: MaterialGeometry | None = None

    def with_seed(self, seed):
        seed = _check_seed(seed, "job.seed")
        ex = self.excitation
        if isinstance(ex, RandomModal):
            ex = replace(ex, seed=seed)
        return replace(self, job=replace(self.job, seed=seed), excitation=ex)

    def with_output_dir(self, directory):
        return replace(self, output=replace(self.output, directory=str(directory)))

    def with_workers(self, workers):
        return replace(self, job=replace(self.job, workers=_check_workers(workers)))


class _Table:
    """Key access on one TOML table with path-aware diagnostics."""

    def __init__(self, data, path):
        if not isinstance(data, dict):
            raise ConfigError("expected a table", path)
        self.data = dict(data)
        self.path = path

    def sub(self, key):
        return f"{self.path}.{key}" if self.path else key

    def has(self, key):
        return key in self.data

    def table(self, key, required=False):
        if key not in self.data:
            if required:
                raise ConfigError("missing required section", self.sub(key))
            return None
        return _Table(self.data.pop(key), self.sub(key))

    def raw(self, key, default=None):
        return self.data.pop(key, default)

    def num(self, key, default=..., lo=None, lo_open=True, hi=None, hi_open=False, allow_inf=False):
        if key not in self.data:
            if default is ...:
                raise ConfigError("missing required field", self.sub(key))
            return default
        v = self.data.pop(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"expected a number, got {v!r}", self.sub(key))
        v = float(v)
        if math.isnan(v) or (math.isinf(v) and not allow_inf):
            raise ConfigError(f"expected a finite number, got {v!r}", self.sub(key))
        if lo is not None and (v <= lo if lo_open else v < lo):
            raise ConfigError(f"must be {'>' if lo_open else '>='} {lo:g}, got {v!r}", self.sub(key))
        if hi is not None and (v >= hi if hi_open else v > hi):
            raise ConfigError(f"must be {'<' if hi_open else '<='} {hi:g}, got {v!r}", self.sub(key))
        return v

    def int(self, key, default=..., lo=None):
        if key not in self.data:
            if default is ...:
                raise ConfigError("missing required field", self.sub(key))
            return default
        v = self.data.pop(key)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"expected an integer, got {v!r}", self.sub(key))
        if lo is not None and v < lo:
            raise ConfigError(f"must be >= {lo}, got {v!r}", self.sub(key))
        return v

    def choice(self, key, options, default=...):
        if key not in self.data:
            if default is ...:
                raise ConfigError(f"missing required field (one of {', '.join(options)})", self.sub(key))
            return default
        v = self.data.pop(key)
        if v not in options:
            raise ConfigError(f"expected one of {', '.join(options)}, got {v!r}", self.sub(key))
        return v

    def string(self, key, default=...):
        if key not in self.data:
            if default is ...:
                raise ConfigError("missing required field", self.sub(key))
            return default
        v = self.data.pop(key)
        if not isinstance(v, str) or not v:
            raise ConfigError(f"expected a non-empty string, got {v!r}", self.sub(key))
        return v

    def done(self):
        if self.data:
            key = sorted(self.data)[0]
            raise ConfigError("unknown key", self.sub(key))


def _check_seed(seed, path):
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be an integer in [0, 2^64), got {seed!r}", path)
    return seed


def _check_workers(workers):
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError(f"workers must be a positive integer, got {workers!r}", "job.workers")
    return workers


def _parse_piezo(t):
    geo_t = t.table("geometry")
    r_leak = t.num("r_leak", math.inf, lo=0, allow_inf=True)
    direct = [k for k in ("c0", "alpha", "k_e") if t.has(k)]
    if geo_t is not None and direct:
        raise ConfigError(f"over-specified: give either {', '.join(direct)} or a geometry block, not both",
                          "piezo")
    geometry = None
    if geo_t is not None:
        vals = {k: geo_t.num(k, lo=0) for k in GEOMETRY_KEYS if k != "e_coeff"}
        vals["e_coeff"] = geo_t.num("e_coeff", lo=0, lo_open=False)
        geo_t.done()
        geometry = MaterialGeometry(**vals)
        params = derive_lumped(geometry).with_leakage(r_leak)
    else:
        params = PiezoParams(c0=t.num("c0", lo=0), alpha=t.num("alpha", lo=0, lo_open=False),
                             k_e=t.num("k_e", lo=0), r_leak=r_leak)
    t.done()
    return params, geometry


def _mode_list(t, key, required):
    items = t.raw(key)
    if items is None:
        if required:
            raise ConfigError("missing required field", t.sub(key))
        return None
    if not isinstance(items, list) or not items:
        raise ConfigError("expected a non-empty list of mode tables", t.sub(key))
    return [_Table(m, f"{t.sub(key)}[{i}]") for i, m in enumerate(items)]


def _parse_excitation(t, seed):
    variant = t.choice("variant", ("harmonic", "multimodal", "random"))
    if variant == "harmonic":
        spec = Harmonic(t.num("u_m", lo=0, lo_open=False), t.num("freq", lo=0), t.num("phase", 0.0))
    elif variant == "multimodal":
        modes = []
        for m in _mode_list(t, "modes", True):
            modes.append(Mode(m.num("u_m", lo=0, lo_open=False), m.num("freq", lo=0), m.num("phase", 0.0)))
            m.done()
        spec = Multimodal(tuple(modes))
    else:
        mt = _mode_list(t, "modes", False)
        modes = DEFAULT_RANDOM_MODES
        if mt is not None:
            modes = []
            for m in mt:
                modes.append(ResonantMode(m.num("freq", lo=0), m.num("q_factor", 50.0, lo=0.5),
                                          m.num("gain", 1.0, lo=0, lo_open=False)))
                m.done()
            modes = tuple(modes)
        spec = RandomModal(seed=seed, target_rms=t.num("target_rms", lo=0),
                           duration=t.num("duration", 100.0, lo=0), modes=modes,
                           hold_step=t.num("hold_step", None, lo=0))
    t.done()
    return spec


def _parse_standard(t):
    load_kind = t.choice("load", ("resistive", "constant_voltage"), "resistive")
    if load_kind == "resistive":
        load = Resistive(t.num("r_load", 1e5, lo=0))
    else:
        load = ConstantVoltage(t.num("v_load", lo=0, lo_open=False))
    spec = StandardInterfaceSpec(load, c_r=t.num("c_r", 2.2e-6, lo=0),
                                 diode_drop=t.num("diode_drop", 0.0, lo=0, lo_open=False))
    t.done()
    return spec


def _parse_sece(t):
    out_kind = t.choice("output", ("capacitive", "constant_voltage"), "capacitive")
    if out_kind == "capacitive":
        output = Capacitive(t.num("r_load", 1e5, lo=0), t.num("c_out", 2.2e-6, lo=0))
    else:
        output = ConstantVoltage(t.num("v_load", lo=0, lo_open=False))
    ex_kind = t.choice("extraction", ("ideal", "flyback"), "ideal")
    if ex_kind == "ideal":
        extraction = Ideal(t.num("efficiency", 1.0, lo=0, hi=1))
    else:
        extraction = Flyback(t.num("l_ind", lo=0), t.num("r_series", 0.0, lo=0, lo_open=False),
                             t.num("flyback_diode_drop", 0.0, lo=0, lo_open=False))
    spec = SeceInterfaceSpec(output, extraction, t.num("trigger_min_v", 0.0, lo=0, lo_open=False))
    t.done()
    return spec


def _parse_job(t):
    kind = t.choice("kind", JOB_KINDS)
    seed = _check_seed(t.raw("seed", 0), "job.seed")
    r_loads = t.raw("r_loads")
    if r_loads is not None:
        if not isinstance(r_loads, list):
            raise ConfigError("expected a list of resistances", "job.r_loads")
        if not r_loads:
            raise ConfigError("load grid is empty", "job.r_loads")
        for i, r in enumerate(r_loads):
            if isinstance(r, bool) or not isinstance(r, (int, float)) or not (r > 0 and math.isfinite(r)):
                raise ConfigError(f"resistance must be > 0, got {r!r}", f"job.r_loads[{i}]")
        if any(b <= a for a, b in zip(r_loads, r_loads[1:])):
            raise ConfigError("resistances must be strictly increasing", "job.r_loads")
        r_loads = tuple(float(r) for r in r_loads)
    r_min = t.num("r_min", None, lo=0)
    r_max = t.num("r_max", None, lo=0)
    points = t.int("points", DEFAULT_GRID_POINTS, lo=0)
    if r_loads is not None and (r_min is not None or r_max is not None):
        raise ConfigError("over-specified: give either r_loads or r_min/r_max", "job.r_loads")
    if kind == "sweep" and r_loads is None:
        if r_min is None or r_max is None:
            raise ConfigError("a sweep needs r_loads or both r_min and r_max", "job")
        if not r_min < r_max:
            raise ConfigError("r_min must be smaller than r_max", "job.r_min")
        if points < 2:
            raise ConfigError("load grid needs at least 2 points", "job.points")
    job = JobSection(
        kind=kind, seed=seed, r_loads=r_loads, r_min=r_min, r_max=r_max, points=points,
        workers=_check_workers(t.raw("workers", 1)),
        segment_len=t.int("segment_len", 8192, lo=2),
        overlap=t.num("overlap", 0.5, lo=0, lo_open=False, hi=1, hi_open=True),
        psd_decimation=t.int("psd_decimation", 40, lo=1),
    )
    if job.segment_len & (job.segment_len - 1):
        raise ConfigError("must be a power of two", "job.segment_len")
    t.done()
    return job


def parse_config(text) -> ScenarioConfig:
    """Parse and validate a scenario document."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigError(f"malformed document: {err}") from err
    root = _Table(doc, "")
    try:
        job = _parse_job(root.table("job", required=True))
        piezo, geometry = _parse_piezo(root.table("piezo", required=True))
        excitation = _parse_excitation(root.table("excitation", required=True), job.seed)
        iface = root.table("interface")
        standard = sece = None
        if iface is not None:
            st = iface.table("standard")
            se = iface.table("sece")
            standard = _parse_standard(st) if st is not None else None
            sece = _parse_sece(se) if se is not None else None
            iface.done()
        if job.kind in ("run", "sweep") and standard is None and sece is None:
            raise ConfigError(f"a {job.kind} job needs at least one interface section", "interface")
        sim_t = root.table("sim")
        sim = SimSection()
        if sim_t is not None:
            sim = SimSection(duration=sim_t.num("duration", None, lo=0), dt=sim_t.num("dt", None, lo=0),
                             event_time_tol=sim_t.num("event_time_tol", None, lo=0),
                             settle=sim_t.num("settle", 0.2, lo=0, lo_open=False, hi=1, hi_open=True))
            sim_t.done()
            if sim.dt is not None and sim.event_time_tol is not None and not sim.event_time_tol < sim.dt:
                raise ConfigError("must be smaller than dt", "sim.event_time_tol")
        if job.kind in ("run", "sweep") and sim.duration is None and not isinstance(excitation, RandomModal):
            raise ConfigError("missing required field", "sim.duration")
        out_t = root.table("output")
        output = OutputSection()
        if out_t is not None:
            output = OutputSection(out_t.string("directory", "out"), out_t.int("decimation", 1, lo=1))
            out_t.done()
        root.done()
    except ConfigError:
        raise
    except PegError as err:
        raise ConfigError(str(err)) from err
    return ScenarioConfig(piezo=piezo, excitation=excitation, job=job, standard=standard, sece=sece,
                          sim=sim, output=output, geometry=geometry)


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


def to_dict(cfg: ScenarioConfig) -> dict:
    doc = {}
    job = cfg.job
    doc["job"] = _drop_none({
        "kind": job.kind, "seed": job.seed,
        "r_loads": list(job.r_loads) if job.r_loads is not None else None,
        "r_min": job.r_min, "r_max": job.r_max, "points": job.points, "workers": job.workers,
        "segment_len": job.segment_len, "overlap": job.overlap, "psd_decimation": job.psd_decimation,
    })
    if cfg.geometry is not None:
        piezo = {"geometry": {k: getattr(cfg.geometry, k) for k in GEOMETRY_KEYS}}
    else:
        piezo = {"c0": cfg.piezo.c0, "alpha": cfg.piezo.alpha, "k_e": cfg.piezo.k_e}
    if not math.isinf(cfg.piezo.r_leak):
        piezo["r_leak"] = cfg.piezo.r_leak
    doc["piezo"] = piezo
    ex = cfg.excitation
    if isinstance(ex, Harmonic):
        doc["excitation"] = {"variant": "harmonic", "u_m": ex.u_m, "freq": ex.freq, "phase": ex.phase}
    elif isinstance(ex, Multimodal):
        doc["excitation"] = {"variant": "multimodal",
                             "modes": [{"u_m": m.u_m, "freq": m.freq, "phase": m.phase} for m in ex.modes]}
    else:
        doc["excitation"] = _drop_none({
            "variant": "random", "target_rms": ex.target_rms, "duration": ex.duration,
            "hold_step": ex.hold_step,
            "modes": [{"freq": m.freq, "q_factor": m.q_factor, "gain": m.gain} for m in ex.modes],
        })
    iface = {}
    if cfg.standard is not None:
        s = cfg.standard
        d = {"load": "resistive", "r_load": s.load.r_load} if isinstance(s.load, Resistive) \
            else {"load": "constant_voltage", "v_load": s.load.v_load}
        d.update(c_r=s.c_r, diode_drop=s.diode_drop)
        iface["standard"] = d
    if cfg.sece is not None:
        s = cfg.sece
        if isinstance(s.output, Capacitive):
            d = {"output": "capacitive", "r_load": s.output.r_load, "c_out": s.output.c_out}
        else:
            d = {"output": "constant_voltage", "v_load": s.output.v_load}
        if isinstance(s.extraction, Ideal):
            d.update(extraction="ideal", efficiency=s.extraction.efficiency)
        else:
            d.update(extraction="flyback", l_ind=s.extraction.l_ind, r_series=s.extraction.r_series,
                     flyback_diode_drop=s.extraction.diode_drop)
        d["trigger_min_v"] = s.trigger_min_v
        iface["sece"] = d
    if iface:
        doc["interface"] = iface
    doc["sim"] = _drop_none({"duration": cfg.sim.duration, "dt": cfg.sim.dt,
                             "event_time_tol": cfg.sim.event_time_tol, "settle": cfg.sim.settle})
    doc["output"] = {"directory": cfg.output.directory, "decimation": cfg.output.decimation}
    return doc


def render(cfg: ScenarioConfig) -> str:
    """Canonical TOML text; ``parse_config(render(cfg)) == cfg``."""
    return tomli_w.dumps(to_dict(cfg))


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError(f"cannot read config: {err.strerror}", str(path)) from err
    return parse_config(text)
