"""Execute a parsed scenario and write its artifacts."""

from __future__ import annotations

import math
import os
import sys

import numpy as np

from . import __version__
from . import analytic as A
from .analysis import gain_report, log_grid, psd, spectral_peaks, sweep_load
from .circuit_sim import SimConfig, simulate_sece, simulate_standard
from .config import ScenarioConfig, render
from .errors import ConfigError, PegError
from .excitation import STEPS_PER_PERIOD, Harmonic, ModalNoiseSource, RandomModal, build_excitation, sample_motion
from .export import (FORMAT_VERSION, write_rows, ensure_dir, write_analytic, write_events, write_gain_csv,
                     write_gain_text, write_series, write_spectrum, write_sweep)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

ANALYTIC_CURVE_HEADER = ("r_load_ohm", "p_standard_W", "p_sece_W")


def _sim_config(cfg: ScenarioConfig) -> SimConfig:
    duration = cfg.sim.duration
    if duration is None:
        if not isinstance(cfg.excitation, RandomModal):
            raise ConfigError("missing required field", "sim.duration")
        duration = cfg.excitation.duration
    return SimConfig(duration=duration, dt=cfg.sim.dt, event_time_tol=cfg.sim.event_time_tol,
                     settle=cfg.sim.settle, record_decimation=cfg.output.decimation)


def _grid(cfg: ScenarioConfig):
    job = cfg.job
    if job.r_loads is not None:
        return np.array(job.r_loads)
    if job.r_min is None or job.r_max is None:
        raise ConfigError("a load grid needs r_loads or both r_min and r_max", "job")
    return log_grid(job.r_min, job.r_max, job.points)


def _kv(path, items):
    with open(path, "w") as fh:
        for k, v in items:
            fh.write(f"{k}={v!r}\n")
    return path


def _job_analytic(cfg, out):
    ex = cfg.excitation
    if not isinstance(ex, Harmonic):
        raise ConfigError("analytic jobs need a harmonic excitation", "excitation.variant")
    op = A.HarmonicOperatingPoint.from_frequency(ex.u_m, ex.freq)
    p = cfg.piezo
    r_opt = A.standard_optimum_resistive(p, op)
    v_opt = A.standard_optimum_voltage(p, op)
    p_sece = A.sece_power(p, op)
    rows = [
        ("r_opt", r_opt.argument, "ohm"),
        ("p_standard_max", r_opt.p_max, "W"),
        ("v_opt", v_opt.argument, "V"),
        ("p_standard_voltage_max", v_opt.p_max, "W"),
        ("p_sece", p_sece, "W"),
        ("v_open_circuit", A.open_circuit_amplitude(p, op), "V"),
        ("gain", p_sece / r_opt.p_max if r_opt.p_max > 0 else math.nan, "1"),
    ]
    files = [write_analytic(os.path.join(out, "analytic.csv"), rows)]
    if cfg.job.r_loads is not None or (cfg.job.r_min is not None and cfg.job.r_max is not None):
        curve = [(r, A.standard_power_resistive(p, op, r), p_sece) for r in _grid(cfg).tolist()]
        files.append(write_rows(os.path.join(out, "analytic_curve.csv"), ANALYTIC_CURVE_HEADER, curve))
    return files


def _job_run(cfg, out):
    source = build_excitation(cfg.excitation)
    sim = _sim_config(cfg)
    files = []
    summary = []
    if cfg.standard is not None:
        res = simulate_standard(cfg.piezo, cfg.standard, source, sim)
        files.append(write_series(os.path.join(out, "series_standard.csv"), res))
        files.append(write_events(os.path.join(out, "events_standard.csv"), res))
        summary += [("standard_p_in_avg_W", res.p_in_avg), ("standard_p_load_avg_W", res.p_out_avg)]
    if cfg.sece is not None:
        res = simulate_sece(cfg.piezo, cfg.sece, source, sim)
        files.append(write_series(os.path.join(out, "series_sece.csv"), res))
        files.append(write_events(os.path.join(out, "events_sece.csv"), res))
        summary += [("sece_p_in_avg_W", res.p_in_avg), ("sece_p_load_avg_W", res.p_out_avg)]
    files.append(_kv(os.path.join(out, "summary.txt"), summary))
    return files


def _job_sweep(cfg, out):
    grid = _grid(cfg)
    source = build_excitation(cfg.excitation)
    curve = sweep_load(cfg.piezo, source, (cfg.standard, cfg.sece), grid, _sim_config(cfg),
                       workers=cfg.job.workers)
    gain = gain_report(curve)
    return [
        write_sweep(os.path.join(out, "sweep.csv"), curve),
        write_gain_text(os.path.join(out, "gain.txt"), gain),
        write_gain_csv(os.path.join(out, "gain.csv"), gain),
    ]


def _job_psd(cfg, out):
    source = build_excitation(cfg.excitation)
    duration = cfg.sim.duration
    if duration is None:
        duration = cfg.excitation.duration if isinstance(cfg.excitation, RandomModal) else 100.0 / source.lowest_freq
    dec = cfg.job.psd_decimation
    if isinstance(source, ModalNoiseSource):
        step = dec * source.hold_step
    else:
        step = dec * source.shortest_period / STEPS_PER_PERIOD
    t, u, _ = sample_motion(source, duration, step)
    spec = psd(u, 1.0 / step, cfg.job.segment_len, cfg.job.overlap)
    n_modes = len(getattr(source, "modes", ())) or len(source.freqs)
    peaks = spectral_peaks(spec, n_modes)
    files = [write_spectrum(os.path.join(out, "spectrum.csv"), spec)]
    items = [("resolution_hz", spec.resolution), ("variance_m2", float(np.var(u)))]
    items += [(f"peak_{i}_hz", float(f)) for i, f in enumerate(peaks)]
    files.append(_kv(os.path.join(out, "summary.txt"), items))
    return files


JOBS = {"analytic": _job_analytic, "run": _job_run, "sweep": _job_sweep, "psd": _job_psd}


def write_manifest(path, cfg: ScenarioConfig, files):
    lines = [
        f"format_version={FORMAT_VERSION}",
        f"software=pegsim {__version__}",
        f"seed={cfg.job.seed}",
        f"job={cfg.job.kind}",
    ]
    lines += [f"artifact={os.path.basename(f)}" for f in files]
    lines += ["", "[config]", render(cfg)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
    return path


def manifest_config(text):
    """The rendered config echoed in a manifest."""
    return text.split("[config]\n", 1)[1]


def run_scenario(cfg: ScenarioConfig, err=None) -> int:
    """Run ``cfg.job`` and write its artifacts; returns the exit status."""
    err = err if err is not None else sys.stderr
    try:
        out = ensure_dir(cfg.output.directory)
        files = JOBS[cfg.job.kind](cfg, out)
        write_manifest(os.path.join(out, "manifest.txt"), cfg, files)
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG
    except (PegError, OSError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_RUNTIME
    return EXIT_OK
