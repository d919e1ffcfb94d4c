from pathlib import Path

import numpy as np
import pytest

from romsar.cli import main
from romsar.config import parse_config
from romsar.inversion import read_history_csv
from romsar.io import read_field_csv, read_header

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _hashes(out: Path) -> dict:
    files = [f for f in out.rglob("*") if f.is_file()]
    assert files
    return {f.relative_to(out).as_posix(): read_header(f).get("config_hash") for f in files}


def test_synth_then_invert_zero_contrast(tmp_path, capsys):
    cfg = CONFIGS / "zero_contrast.toml"
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "data").glob("s*.csv"))) == 5
    assert main(["invert", "--config", str(cfg), "--out", str(tmp_path), "--iterations", "3"]) == 0
    assert "using data" not in capsys.readouterr().err
    final = read_field_csv(tmp_path / "final.csv")
    np.testing.assert_array_equal(final.values, final.eps0)
    hist = read_history_csv(tmp_path / "convergence.csv")
    assert hist[0].objective < 1e-20     # B is dimensionless: round-off only
    # synth artifacts carry the synth config, invert artifacts the overridden one
    base = parse_config(cfg)
    over = base.with_overrides(inversion={"iterations": 3}).hash()
    for name, h in _hashes(tmp_path).items():
        synth = name.startswith("data/") or name.startswith("truth")
        assert h == (base.hash() if synth else over), name


def test_iterations_zero_emits_initial_state_only(tmp_path):
    cfg = CONFIGS / "ci.toml"
    assert main(["invert", "--config", str(cfg), "--out", str(tmp_path), "--iterations", "0"]) == 0
    assert len(read_history_csv(tmp_path / "convergence.csv")) == 1
    assert sorted(p.name for p in (tmp_path / "fields").iterdir()) == ["iter_000.csv", "iter_000.pgm"]
    f = read_field_csv(tmp_path / "final.csv")
    np.testing.assert_array_equal(f.values, f.eps0)


def test_image_runs_one_iteration(tmp_path):
    cfg = CONFIGS / "ci.toml"
    assert main(["image", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    hist = read_history_csv(tmp_path / "image_history.csv")
    assert [r.iteration for r in hist] == [0, 1]
    assert (tmp_path / "image.pgm").exists()


def test_validate_passes(capsys):
    assert main(["validate", "--config", str(CONFIGS / "ci.toml"), "--out", "/tmp/romsar-validate"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) >= 8 and all(ln.startswith("PASS") for ln in lines)


@pytest.mark.slow
def test_validate_default_config(capsys, tmp_path):
    assert main(["validate", "--config", str(CONFIGS / "desk.toml"), "--out", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[grid]\nspacinng = 0.05\n")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "spacinng" in err and f"{bad}:2" in err
    assert main(["synth", "--config", str(CONFIGS / "ci.toml"), "--iterations", "-1"]) == 2


def test_module_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "tight.toml"
    # a memory budget too small for the stored snapshots
    cfg.write_text('preset = "ci"\n[solver]\nmemory_gb = 1e-6\n')
    assert main(["invert", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert "memory budget" in capsys.readouterr().err


def test_synth_deterministic_and_seeded(tmp_path):
    cfg = str(CONFIGS / "ci.toml")
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out, seed in ((a, 3), (b, 3), (c, 4)):
        assert main(["synth", "--config", cfg, "--out", str(out), "--noise-snr", "20", "--seed", str(seed)]) == 0
    fa = (a / "data" / "s000.csv").read_bytes()
    assert fa == (b / "data" / "s000.csv").read_bytes()
    assert fa != (c / "data" / "s000.csv").read_bytes()
