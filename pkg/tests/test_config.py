import math

import pytest

from romsar.beam import BeamParams
from romsar.config import ConfigError, emission_time_for, load_text, parse_config, preset, wavelength_m


def test_minimal_file_gets_defaults(tmp_path):
    p = tmp_path / "min.toml"
    p.write_text("")
    cfg = parse_config(p)
    assert cfg["grid"]["spacing"] == pytest.approx(1 / 25)
    assert cfg.tau == pytest.approx(math.pi / (2.2 * 2 * math.pi))
    assert cfg["solver"]["M"] == 48
    assert cfg.sigma == pytest.approx(cfg["lattice"]["h"] / 2)
    assert cfg["aperture"]["S"] == 7
    assert (cfg["aperture"]["angle_min"], cfg["aperture"]["angle_max"]) == (-45.0, 45.0)
    assert cfg["grid"]["size"] == 16.0


def test_unknown_key_names_key_path_and_line(tmp_path):
    p = tmp_path / "typo.toml"
    p.write_text("[solver]\nM = 10\n\n[grid]\nspacinng = 0.05\n")
    with pytest.raises(ConfigError) as exc:
        parse_config(p)
    msg = str(exc.value)
    assert "spacinng" in msg and "unknown key" in msg
    assert f"{p}:5" in msg


def test_unknown_section():
    with pytest.raises(ConfigError, match="gird"):
        load_text("[gird]\nspacing = 0.05\n")


def test_unit_violation_reports_line(tmp_path):
    p = tmp_path / "neg.toml"
    p.write_text("[grid]\nsize = 8.0\nspacing = -0.1\n")
    with pytest.raises(ConfigError, match=r"neg\.toml:3: \[grid\] spacing: must be positive"):
        parse_config(p)
    with pytest.raises(ConfigError, match="under-resolves"):
        load_text("[grid]\nspacing = 0.5\n")
    with pytest.raises(ConfigError, match="angle"):
        load_text("[aperture]\nangle_max = 95.0\n")


def test_missing_shape_key():
    with pytest.raises(ConfigError, match="missing key"):
        load_text('[[shapes]]\nkind = "disk"\ncenter = [0.0, 0.0]\n')


def test_bad_toml_and_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        load_text("[grid\n")
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(tmp_path / "missing.toml")


def test_xband_reference_preset():
    cfg = preset("xband")
    assert cfg["units"]["frequency_ghz"] == 8.0
    assert cfg["beam"]["T_b"] == pytest.approx(0.21 * 8.0)
    assert wavelength_m(cfg) == pytest.approx(0.0375, abs=5e-5)
    b = BeamParams(cfg["beam"]["r0"], cfg["beam"]["q0"], cfg["beam"]["T_b"])
    assert b.relative_bandwidth(0.5) == pytest.approx(0.66, abs=0.01)
    assert cfg["aperture"]["S"] == 31 and cfg["solver"]["M"] == 96


def test_record_time_sets_M():
    base = load_text("")
    T = emission_time_for(base)
    tau = base.tau
    rt = 2 * (T + 9.5 * tau)
    cfg = load_text(f"[solver]\nrecord_time = {rt!r}\n")
    assert cfg["solver"]["M"] == 10
    with pytest.raises(ConfigError, match="record_time"):
        load_text(f"[solver]\nrecord_time = {T!r}\n")


def test_hash_depends_on_content():
    a = load_text("")
    assert a.hash() == load_text("").hash()
    b = load_text("[noise]\nseed = 5\n")
    assert a.hash() != b.hash()
    assert a.hash(exclude=("noise",)) == b.hash(exclude=("noise",))
    assert a.with_overrides(noise={"seed": 5}).hash() == b.hash()
