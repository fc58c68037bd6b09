"""CSV and text writers for simulation artifacts.

Every file starts with its fixed header line.  Floats are written with
``repr`` so a rerun with the same inputs produces byte-identical files.
"""

import csv
import os

import numpy as np

from .circuit_sim import EVENT_KINDS

FORMAT_VERSION = 1

SERIES_HEADER = ("t_s", "u_m", "udot_m_s", "v_piezo_V", "v_rect_V", "p_load_W", "p_in_W")
EVENTS_HEADER = ("t_s", "kind", "v_before_V", "energy_J")
SWEEP_HEADER = ("r_load_ohm", "p_standard_W", "p_sece_in_W", "p_sece_out_W")
SPECTRUM_HEADER = ("freq_hz", "psd_m2_per_hz")
MOTION_HEADER = ("t_s", "u_m", "udot_m_s")
GAIN_KEYS = ("p_standard_max_W", "r_opt_measured_ohm", "p_sece_in_W", "p_sece_out_W", "gain_in", "gain_out")
ANALYTIC_HEADER = ("quantity", "value", "unit")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


def write_series(path, result):
    return write_rows(path, SERIES_HEADER, result.series.tolist())


def write_events(path, result):
    rows = ((t, EVENT_KINDS[int(k)], v, e) for t, k, v, e in result.event_array.tolist())
    return write_rows(path, EVENTS_HEADER, rows)


def write_sweep(path, curve):
    return write_rows(path, SWEEP_HEADER, curve.points)


def write_spectrum(path, spectrum):
    return write_rows(path, SPECTRUM_HEADER, spectrum.bins)


def write_motion(path, t, u, u_dot):
    return write_rows(path, MOTION_HEADER, zip(np.asarray(t, float).tolist(),
                                                np.asarray(u, float).tolist(),
                                                np.asarray(u_dot, float).tolist()))


def write_gain_csv(path, summary):
    d = summary.as_dict()
    return write_rows(path, GAIN_KEYS, [[d[k] for k in GAIN_KEYS]])


def gain_text(summary):
    d = summary.as_dict()
    return "".join(f"{k}={d[k]!r}\n" for k in GAIN_KEYS)


def write_gain_text(path, summary):
    with open(path, "w") as fh:
        fh.write(gain_text(summary))
    return path


def write_analytic(path, rows):
    """``rows`` of ``(quantity, value, unit)``."""
    return write_rows(path, ANALYTIC_HEADER, rows)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise PermissionError(f"output directory {path!r} is not writable")
    return path
