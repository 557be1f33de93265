import csv
import json
import subprocess
import sys

import pytest

from pinbounds import ConfigError
from pinbounds.cli import fmt, main, parse_config

PIN = """
[kernel]
family = "srw_return"

[disorder]
omega = "gaussian"

[grid]
beta = {{ start = 0.0, stop = 3.0, steps = 4 }}

[output]
dir = "{out}"
formats = ["csv", "json"]
"""

MC = """
[kernel]
family = "srw_return"

[disorder]
omega = "binary"
omega_tilde = "gaussian"

[grid]
beta = [0.0, 0.8]
h = [0.1]
lam = [0.0, 0.5]
h_tilde = [0.3]

[bounds]
gamma = [0.8, 1.0]

[mc]
n = [128]
samples = 8
seed = 17

[output]
dir = "{out}"
formats = ["csv", "json"]
"""

COPOLY = """
[kernel]
family = "wetting_half_srw"

[disorder]
omega_tilde = "binary"

[grid]
lam = [1.0]

[bounds]
mode = "closed_form"

[output]
dir = "{out}"
"""


def write(tmp_path, name, text, out):
    p = tmp_path / name
    p.write_text(text.format(out=out))
    return str(p)


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_pin_bounds_report(tmp_path):
    out = tmp_path / "pin"
    cfg = write(tmp_path, "pin.toml", PIN, out)
    assert main(["pin-bounds", "--config", cfg]) == 0
    rows = read_csv(out / "pin_bounds.csv")
    assert [float(r["beta"]) for r in rows] == [0.0, 1.0, 2.0, 3.0]
    for r in rows:
        assert float(r["hc_annealed"]) <= float(r["hc_frac"]) + 1e-12
        assert r["hc_annealed_src"] == "closed-form"
        assert r["hc_frac_src"] == "solver"
    data = json.loads((out / "pin_bounds.json").read_text())
    assert data["config"]["kernel"]["family"] == "srw_return"
    assert len(data["rows"]) == 4
    assert (out / "pin_bounds.dat").exists()


def test_mc_reports_are_byte_identical(tmp_path):
    outs = []
    cfg = write(tmp_path, "mc.toml", MC, tmp_path / "unused")
    for threads in ("1", "3"):
        out = tmp_path / f"mc{threads}"
        assert main(["mc-free-energy", "--config", cfg, "--threads", threads, "--out", str(out)]) == 0
        outs.append(out)
    for name in ("mc_free_energy.csv", "mc_free_energy.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_seed_override_changes_samples(tmp_path):
    cfg = write(tmp_path, "mc.toml", MC, tmp_path / "a")
    assert main(["mc-free-energy", "--config", cfg]) == 0
    assert main(["mc-free-energy", "--config", cfg, "--seed", "18", "--out", str(tmp_path / "b")]) == 0
    a = read_csv(tmp_path / "a" / "mc_free_energy.csv")
    b = read_csv(tmp_path / "b" / "mc_free_energy.csv")
    assert [r["F_mc"] for r in a] != [r["F_mc"] for r in b]


def test_copoly_closed_form(tmp_path):
    out = tmp_path / "co"
    cfg = write(tmp_path, "co.toml", COPOLY, out)
    assert main(["copoly-bounds", "--config", cfg]) == 0
    (row,) = read_csv(out / "copoly_bounds.csv")
    assert float(row["monthus"]) <= float(row["bound_closed_form"]) <= float(row["annealed_line"]) + 1e-12


def test_audit_passes(tmp_path):
    cfg = write(tmp_path, "pin.toml", PIN, tmp_path / "audit")
    assert main(["audit", "--config", cfg]) == 0
    rows = read_csv(tmp_path / "audit" / "audit.csv")
    assert all(r["ok"] == "1" for r in rows)


@pytest.mark.parametrize(
    "text",
    [
        "[kernel]\nfamily = 'nope'\n",
        "[kernel]\nfamily = 'power_law'\nalpha = 0.5\n",
        "[kernel]\nfamily = 'power_law'\nalpha = 0.5\nmass = 1.5\n",
        "[kernel]\nfamily = 'srw_return'\n[grid]\nbeta = [-1.0]\n",
        "[kernel]\nfamily = 'srw_return'\n[bounds]\nmode = 'guess'\n",
        "[kernel]\nfamily = 'srw_return'\n[extra]\nx = 1\n",
        "kernel = 3\n",
        "[kernel]\nfamily = 'srw_return'\n[mc]\nn = [64]\n",
        "not toml at all [",
    ],
)
def test_bad_configs_exit_1(tmp_path, text):
    p = tmp_path / "bad.toml"
    p.write_text(text)
    assert main(["pin-bounds", "--config", str(p), "--out", str(tmp_path / "o")]) == 1


def test_missing_grid_exit_1(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("[kernel]\nfamily = 'srw_return'\n")
    assert main(["copoly-bounds", "--config", str(p), "--out", str(tmp_path)]) == 1
    assert main(["pin-bounds", "--config", str(tmp_path / "missing.toml")]) == 1


def test_parse_config_grids():
    cfg = parse_config({"kernel": {"family": "srw_return"}, "grid": {"beta": {"start": 1, "stop": 2, "steps": 3}, "h": 0.5}})
    assert cfg.grids["beta"] == [1.0, 1.5, 2.0]
    assert cfg.grids["h"] == [0.5]
    with pytest.raises(ConfigError):
        parse_config({"kernel": {"family": "srw_return"}, "grid": {"beta": "x"}})


def test_fmt_round_trips():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x
    assert fmt(True) == "1" and fmt(None) == "" and fmt(3) == "3"


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, "pin.toml", PIN, tmp_path / "sub")
    proc = subprocess.run([sys.executable, "-m", "pinbounds.cli", "pin-bounds", "--config", cfg, "--format", "csv"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("pin_bounds.dat")


SRW_GAMMA_C = 0.84163422129426707643


def test_pin_bounds_threshold_and_zero_row(tmp_path):
    out = tmp_path / "pin"
    text = PIN.replace("stop = 3.0, steps = 4", "stop = 10.0, steps = 11")
    assert main(["pin-bounds", "--config", write(tmp_path, "pin.toml", text, out)]) == 0
    rows = read_csv(out / "pin_bounds.csv")
    beta_star = float(rows[1]["beta_star"])
    for r in rows:
        beta, ann, frac = float(r["beta"]), float(r["hc_annealed"]), float(r["hc_frac"])
        if beta < beta_star:
            assert frac == pytest.approx(ann, abs=1e-12)
        else:
            assert frac > ann
    zero = rows[0]
    assert float(zero["hc_annealed"]) == pytest.approx(float(zero["hc_frac"]), abs=1e-14)
    assert float(zero["hc_frac"]) <= float(zero["hc_rare_stretch"])


COPOLY_SRW = """
[kernel]
family = "srw_return"

[disorder]
omega_tilde = "gaussian"

[grid]
lam = [0.5, 1.0, 2.0, 4.0]

[output]
dir = "{out}"
formats = ["csv", "json"]
"""


def test_copoly_gamma_c_column_and_ordering(tmp_path):
    out = tmp_path / "co"
    assert main(["copoly-bounds", "--config", write(tmp_path, "co.toml", COPOLY_SRW, out)]) == 0
    rows = read_csv(out / "copoly_bounds.csv")
    assert len({r["gamma_c"] for r in rows}) == 1
    assert float(rows[0]["gamma_c"]) == pytest.approx(SRW_GAMMA_C, abs=1e-12)
    for r in rows:
        assert float(r["monthus"]) <= float(r["bound_closed_form"]) <= float(r["annealed_line"]) + 1e-12
        assert r["gamma_bar"] == ""


def test_copoly_damped_law_bound_is_monthus(tmp_path):
    text = COPOLY_SRW.replace(
        'family = "srw_return"',
        'family = "log_power_law"\nalpha = 0.5\nlog_exponent = 3.0\nmass = 0.5\ndamping = 2.0',
    )
    out = tmp_path / "damped"
    assert main(["copoly-bounds", "--config", write(tmp_path, "co.toml", text, out)]) == 0
    for r in read_csv(out / "copoly_bounds.csv"):
        assert r["case"] == "monthus_exact"
        assert r["bound_closed_form"] == r["monthus"]


REDUCED = """
[kernel]
family = "wetting_half_srw"

[grid]
beta = [10.0, 20.0, 40.0]

[bounds]
gamma = [0.8]

[output]
dir = "{out}"
"""


def test_reduced_wetting_slope_column_decreases(tmp_path):
    out = tmp_path / "rw"
    assert main(["reduced-wetting", "--config", write(tmp_path, "rw.toml", REDUCED, out)]) == 0
    slopes = [float(r["slope"]) for r in read_csv(out / "reduced_wetting.csv")]
    assert slopes[0] > slopes[1] > slopes[2] > 0.8


def test_mc_rows_pass_and_share_one_schema(tmp_path):
    out = tmp_path / "mc"
    assert main(["mc-free-energy", "--config", write(tmp_path, "mc.toml", MC, out)]) == 0
    data = json.loads((out / "mc_free_energy.json").read_text())
    keys = [tuple(r) for r in data["rows"]]
    assert len(set(keys)) == 1
    for r in data["rows"]:
        assert r["ok_annealed"] and r["ok_frac"]
        assert r["ok_homogeneous"] in (True, None)
    audit = read_csv(out / "mc_frac_audit.csv")
    assert audit and all(r["ok"] == "1" for r in audit)
