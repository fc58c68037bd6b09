import csv
import math

import pytest

from pegsim.cli import main
from pegsim.config import load_config, parse_config, render
from pegsim.errors import ConfigError
from pegsim.excitation import Harmonic, RandomModal
from pegsim.scenario import manifest_config

MINIMAL = """
[job]
kind = "run"

[piezo]
c0 = 41.8e-9
alpha = 1e-3
k_e = 1e5

[excitation]
variant = "harmonic"
u_m = 8.64e-4
freq = 56.0

[interface.standard]
load = "resistive"
r_load = 1e5

[sim]
duration = 0.2
"""

SWEEP = MINIMAL.replace('kind = "run"', 'kind = "sweep"\nr_loads = [3e4, 1e5, 3e5]').replace(
    "duration = 0.2", "duration = 2.0\nsettle = 0.5") + """
[interface.sece]
output = "capacitive"
"""


def _write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.job.seed == 0
    assert cfg.sim.settle == 0.2
    assert cfg.sim.dt is None
    assert cfg.output.directory == "out"
    assert cfg.standard.c_r == 2.2e-6
    assert cfg.sece is None
    assert cfg.excitation == Harmonic(8.64e-4, 56.0)


def test_negative_c0_names_path():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("c0 = 41.8e-9", "c0 = -1e-9"))
    assert exc.value.path == "piezo.c0"


def test_over_specified_piezo():
    text = MINIMAL.replace("k_e = 1e5", "k_e = 1e5\n[piezo.geometry]\ne_coeff = -5.4\neps_s = 1.5e-8\n"
                           "c_e = 6e10\narea = 1e-4\nt_p = 2e-4\nw_p = 1e-2")
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.path == "piezo"


def test_unknown_key():
    with pytest.raises(ConfigError) as exc:
        parse_config(MINIMAL.replace("duration = 0.2", "duration = 0.2\nstep = 1e-5"))
    assert exc.value.path == "sim.step"


def test_grid_conflicts():
    with pytest.raises(ConfigError):
        parse_config(SWEEP.replace("r_loads = [3e4, 1e5, 3e5]", "r_loads = [1e4]\nr_min = 1e3\nr_max = 1e5"))
    with pytest.raises(ConfigError):
        parse_config(SWEEP.replace("r_loads = [3e4, 1e5, 3e5]\n", ""))


def test_random_takes_seed_from_job():
    text = MINIMAL.replace('variant = "harmonic"\nu_m = 8.64e-4\nfreq = 56.0',
                           'variant = "random"\ntarget_rms = 5e-4\nduration = 2.0')
    text = text.replace("seed", "x").replace('kind = "run"', 'kind = "run"\nseed = 11')
    cfg = parse_config(text.replace("[sim]\nduration = 0.2", "[sim]"))
    assert isinstance(cfg.excitation, RandomModal)
    assert cfg.excitation.seed == 11
    assert cfg.with_seed(4).excitation.seed == 4


@pytest.mark.parametrize("text", [MINIMAL, SWEEP], ids=["run", "sweep"])
def test_round_trip(text):
    cfg = parse_config(text)
    assert parse_config(render(cfg)) == cfg
    assert render(parse_config(render(cfg))) == render(cfg)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.toml"))


def test_cli_exit_codes(tmp_path):
    good = _write(tmp_path, MINIMAL)
    assert main(["run", "--config", good, "--out", str(tmp_path / "o"), "--quiet"]) == 0
    bad = _write(tmp_path, MINIMAL.replace("c0 = 41.8e-9", "c0 = -1e-9"), "bad.toml")
    assert main(["run", "--config", bad, "--quiet"]) == 1
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["run", "--config", good, "--out", str(blocker / "sub"), "--quiet"]) == 2


def test_sweep_subcommand_without_grid_fails(tmp_path):
    cfg = _write(tmp_path, MINIMAL + '\n[interface.sece]\noutput = "capacitive"\n')
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) != 0
    empty = _write(tmp_path, SWEEP.replace("[3e4, 1e5, 3e5]", "[]"), "empty.toml")
    assert main(["sweep", "--config", empty, "--out", str(tmp_path / "o2"), "--quiet"]) != 0


def test_run_outputs_and_byte_identical_rerun(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", cfg, "--out", str(a), "--quiet"]) == 0
    assert main(["run", "--config", cfg, "--out", str(b), "--quiet"]) == 0
    for name in ("series_standard.csv", "events_standard.csv", "summary.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "series_standard.csv").read_text().splitlines()[0]
    assert header == "t_s,u_m,udot_m_s,v_piezo_V,v_rect_V,p_load_W,p_in_W"


def test_manifest_contents(tmp_path):
    cfg = _write(tmp_path, MINIMAL)
    out = tmp_path / "o"
    assert main(["run", "--config", cfg, "--out", str(out), "--seed", "9", "--quiet"]) == 0
    text = (out / "manifest.txt").read_text()
    assert "format_version=1" in text
    assert "seed=9" in text
    assert "job=run" in text
    assert "artifact=series_standard.csv" in text
    echoed = parse_config(manifest_config(text))
    assert echoed.job.seed == 9
    assert echoed.output.directory == str(out)


def test_analytic_job(tmp_path):
    text = MINIMAL.replace('kind = "run"', 'kind = "analytic"\nr_min = 1e3\nr_max = 1e6\npoints = 7')
    cfg = _write(tmp_path, text)
    out = tmp_path / "o"
    assert main(["analytic", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    rows = {r["quantity"]: float(r["value"]) for r in csv.DictReader(open(out / "analytic.csv"))}
    assert rows["r_opt"] == pytest.approx(106.8e3, rel=2e-3)
    assert rows["gain"] == pytest.approx(4.0)
    assert rows["p_standard_max"] == pytest.approx(1e-3, rel=2e-3)
    curve = list(csv.DictReader(open(out / "analytic_curve.csv")))
    assert len(curve) == 7


def test_sweep_workers_identical(tmp_path):
    cfg = _write(tmp_path, SWEEP)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sweep", "--config", cfg, "--out", str(a), "--workers", "1", "--quiet"]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b), "--workers", "3", "--quiet"]) == 0
    for name in ("sweep.csv", "gain.csv", "gain.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    gain = dict(line.split("=") for line in (a / "gain.txt").read_text().splitlines())
    assert float(gain["gain_in"]) == pytest.approx(4.0, rel=0.05)
    assert math.isfinite(float(gain["r_opt_measured_ohm"]))


def test_psd_job(tmp_path):
    text = MINIMAL.replace('kind = "run"', 'kind = "psd"\nsegment_len = 1024\npsd_decimation = 40')
    text = text.replace('variant = "harmonic"\nu_m = 8.64e-4\nfreq = 56.0',
                        'variant = "random"\ntarget_rms = 5e-4\nduration = 10.0')
    text = text.replace("[sim]\nduration = 0.2", "[sim]")
    cfg = _write(tmp_path, text)
    out = tmp_path / "o"
    assert main(["psd", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    lines = (out / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "freq_hz,psd_m2_per_hz"
    summary = dict(line.split("=") for line in (out / "summary.txt").read_text().splitlines())
    assert float(summary["variance_m2"]) == pytest.approx(2.5e-7, rel=1e-3)
