"""Run configuration: TOML sections, defaults, validation and presets.

All lengths are in central wavelengths and times in central periods
(c_o = 1 in the background); see FORMATS.md for every key.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .scene import SHAPE_KEYS

OMEGA_O = 2 * math.pi
TAU_DEFAULT = math.pi / (2.2 * OMEGA_O)   # 2.2 times Nyquist sampling of omega_o


class ConfigError(ValueError):
    pass


DEFAULTS: dict = {
    "grid": {"spacing": 1 / 25, "size": 16.0, "pad": "auto"},
    "beam": {"r0": 6.5, "q0": -0.0549, "T_b": 1.68, "n_k": 129},
    "aperture": {"S": 7, "angle_min": -45.0, "angle_max": 45.0, "range": 100.0},
    "lattice": {"center": [0.0, 0.0], "radius": 2.0, "h": 0.3, "sigma": None},
    "background": {"eps0": 1.0, "mu": 1.0},
    "scene": {"support_radius": None, "bumps": []},
    "solver": {"tau": TAU_DEFAULT, "M": 48, "record_time": None, "c_max": 1.25, "pml": False,
               "pml_width": 40, "memory_gb": 2.0},
    "noise": {"snr": math.inf, "ell_t": 0.7, "ell_x": 0.5, "sigma": None, "seed": 0, "eta": "auto"},
    "inversion": {"objective": "rom", "iterations": 20, "regularize": True, "tol": 1e-4, "threads": 1},
}
# beam axis angles are in degrees from +x; every beam is aimed at the lattice centre

PRESETS: dict = {
    # desk-scale default: 16 x 16 wavelengths, 7 slow times, M = 48
    "desk": {
        "shapes": [{"kind": "rectangle", "center": [0.1, 0.0], "size": [1.6, 0.25], "contrast": 2.0,
                    "angle": 30.0}],
    },
    # small configuration for continuous integration
    "ci": {
        "grid": {"size": 6.0, "spacing": 1 / 15},
        "beam": {"r0": 1.2, "q0": 0.0},
        "aperture": {"S": 5, "angle_min": -40.0, "angle_max": 40.0, "range": 8.0},
        "lattice": {"radius": 1.2, "h": 0.3},
        "solver": {"M": 24},
        "shapes": [{"kind": "rectangle", "center": [0.1, 0.0], "size": [1.6, 0.25], "contrast": 2.0,
                    "angle": 30.0}],
    },
    # reference X-band values, 8 GHz and a 0.21 ns pulse (not a runnable desk scale)
    "xband": {
        "aperture": {"S": 31, "angle_min": -75.0, "angle_max": 75.0, "range": 100.0},
        "lattice": {"h": 0.1375},
        "solver": {"M": 96},
        "units": {"frequency_ghz": 8.0, "pulse_ns": 0.21},
    },
}

UNITS_KEYS = {"frequency_ghz", "pulse_ns"}
TOP_KEYS = set(DEFAULTS) | {"shapes", "units", "preset"}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _line_of(text: str | None, section: str, key: str) -> int | None:
    if not text:
        return None
    current = ""
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[\[?([^\]]+)\]\]?", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return n
        if section == "" and current == "" and re.match(rf"^{re.escape(key)}\s*=", s):
            return n
    return None


@dataclass
class RunConfig:
    data: dict
    path: str | None = None
    text: str | None = None

    def __getitem__(self, section: str) -> dict:
        return self.data[section]

    @property
    def shapes(self) -> list:
        return self.data.get("shapes", [])

    def hash(self, exclude: tuple = ()) -> str:
        """Short digest of the settings; the thread count cannot change any result
        and is left out so artifacts compare bitwise across thread counts."""
        d = {k: v for k, v in self.data.items() if k not in exclude}
        if "inversion" in d:
            d["inversion"] = {k: v for k, v in d["inversion"].items() if k != "threads"}
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, **sections) -> "RunConfig":
        return RunConfig(_merge(self.data, sections), self.path, self.text)

    # derived quantities
    @property
    def tau(self) -> float:
        return float(self.data["solver"]["tau"])

    @property
    def sigma(self) -> float:
        lat = self.data["lattice"]
        return 0.5 * lat["h"] if lat.get("sigma") is None else float(lat["sigma"])

    @property
    def support_radius(self) -> float:
        r = self.data["scene"].get("support_radius")
        return self.data["lattice"]["radius"] + 4.0 * self.sigma if r is None else float(r)


def _fail(msg: str, cfg_path, text, section, key):
    line = _line_of(text, section, key)
    where = f"{cfg_path or '<config>'}"
    if line is not None:
        where += f":{line}"
    raise ConfigError(f"{where}: [{section}] {key}: {msg}")


def validate(data: dict, path=None, text=None) -> RunConfig:
    for k in data:
        if k not in TOP_KEYS:
            _fail("unknown section or key", path, text, "", k)
    preset = data.get("preset")
    base = DEFAULTS
    if preset is not None:
        if preset not in PRESETS:
            _fail(f"unknown preset {preset!r}", path, text, "", "preset")
        base = _merge(DEFAULTS, PRESETS[preset])
    for sec, vals in data.items():
        if sec in DEFAULTS:
            if not isinstance(vals, dict):
                _fail("must be a table", path, text, "", sec)
            for k in vals:
                if k not in DEFAULTS[sec]:
                    _fail("unknown key", path, text, sec, k)
        elif sec == "units":
            for k in vals:
                if k not in UNITS_KEYS:
                    _fail("unknown key", path, text, sec, k)
    shapes = data.get("shapes")
    if shapes is not None:
        for i, sh in enumerate(shapes):
            kind = sh.get("kind")
            if kind not in SHAPE_KEYS:
                _fail(f"unknown shape kind {kind!r}", path, text, "shapes", "kind")
            for k in sh:
                if k not in SHAPE_KEYS[kind]:
                    _fail(f"unknown key for shape {i} ({kind})", path, text, "shapes", k)
            need = SHAPE_KEYS[kind] - {"angle"}
            for k in need:
                if k not in sh:
                    _fail(f"missing key for shape {i} ({kind})", path, text, "shapes", k)
    merged = _merge(base, {k: v for k, v in data.items() if k != "preset"})
    merged.setdefault("shapes", [])
    cfg = RunConfig(merged, str(path) if path else None, text)
    _check_units(cfg, path, text)
    _apply_units(cfg)
    _derive_M(cfg)
    return cfg


def _positive(cfg, sec, key, path, text, allow_zero=False):
    v = cfg.data[sec][key]
    ok = isinstance(v, (int, float)) and (v >= 0 if allow_zero else v > 0)
    if not ok:
        _fail(f"must be {'non-negative' if allow_zero else 'positive'}, got {v!r}", path, text, sec, key)


def _check_units(cfg: RunConfig, path, text) -> None:
    for sec, key in [("grid", "spacing"), ("grid", "size"), ("beam", "r0"), ("beam", "T_b"),
                     ("aperture", "range"), ("lattice", "radius"), ("lattice", "h"),
                     ("background", "eps0"), ("background", "mu"), ("solver", "tau"),
                     ("solver", "c_max"), ("solver", "memory_gb"), ("noise", "ell_t"), ("noise", "ell_x"),
                     ("noise", "snr")]:
        _positive(cfg, sec, key, path, text)
    g = cfg["grid"]
    if g["pad"] != "auto" and not (isinstance(g["pad"], int) and g["pad"] >= 0):
        _fail("must be 'auto' or a non-negative integer number of cells", path, text, "grid", "pad")
    if g["spacing"] > 0.25:
        _fail(f"spacing {g['spacing']} wavelengths under-resolves the pulse (max 0.25)", path, text, "grid", "spacing")
    ap = cfg["aperture"]
    if not (isinstance(ap["S"], int) and ap["S"] >= 1):
        _fail("must be an integer >= 1", path, text, "aperture", "S")
    for k in ("angle_min", "angle_max"):
        if not -90.0 < ap[k] < 90.0:
            _fail("angle in degrees must lie in (-90, 90)", path, text, "aperture", k)
    if ap["angle_min"] > ap["angle_max"]:
        _fail("angle_min exceeds angle_max", path, text, "aperture", "angle_min")
    sol = cfg["solver"]
    if sol["M"] is not None and not (isinstance(sol["M"], int) and sol["M"] >= 1):
        _fail("must be an integer >= 1", path, text, "solver", "M")
    if sol["pml"] and sol["pml_width"] < 8:
        _fail("PML needs at least 8 cells", path, text, "solver", "pml_width")
    if cfg["lattice"].get("sigma") is not None:
        _positive(cfg, "lattice", "sigma", path, text)
    n = cfg["noise"]
    if n["sigma"] is not None and n["sigma"] < 0:
        _fail("must be non-negative", path, text, "noise", "sigma")
    if n["eta"] != "auto" and not (isinstance(n["eta"], (int, float)) and n["eta"] >= 0):
        _fail("must be 'auto' or a non-negative number", path, text, "noise", "eta")
    inv = cfg["inversion"]
    if inv["objective"] not in ("rom", "fwi"):
        _fail("must be 'rom' or 'fwi'", path, text, "inversion", "objective")
    if not (isinstance(inv["iterations"], int) and inv["iterations"] >= 0):
        _fail("must be a non-negative integer", path, text, "inversion", "iterations")
    if not (isinstance(inv["threads"], int) and inv["threads"] >= 1):
        _fail("must be a positive integer", path, text, "inversion", "threads")
    for b in cfg["scene"]["bumps"]:
        if len(b) != 3:
            _fail("each bump is [x, y, amplitude]", path, text, "scene", "bumps")


def _apply_units(cfg: RunConfig) -> None:
    u = cfg.data.get("units")
    if u and "frequency_ghz" in u and "pulse_ns" in u:
        cfg.data["beam"]["T_b"] = float(u["pulse_ns"]) * float(u["frequency_ghz"])


def _derive_M(cfg: RunConfig) -> None:
    """M = max{m : 2 (T + (m-1) tau) <= record_time} when a recording length is given."""
    sol = cfg.data["solver"]
    rt = sol.get("record_time")
    if rt is None:
        if sol["M"] is None:
            sol["M"] = 48
        return
    T = emission_time_for(cfg)
    m = int(math.floor((rt / 2 - T) / sol["tau"] + 1 + 1e-12))
    if m < 1:
        raise ConfigError(f"record_time {rt} is shorter than the round trip 2T = {2 * T:.4g}")
    sol["M"] = m


def emission_time_for(cfg: RunConfig) -> float:
    return cfg["aperture"]["range"] - cfg.support_radius - cfg["beam"]["T_b"]


def load_text(text: str, path=None) -> RunConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path or '<config>'}: {exc}") from exc
    return validate(data, path, text)


def parse_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read: {exc}") from exc
    return load_text(text, p)


def preset(name: str, **overrides) -> RunConfig:
    data = {"preset": name}
    data.update(overrides)
    return validate(data)


def wavelength_m(cfg: RunConfig) -> float | None:
    u = cfg.data.get("units") or {}
    if "frequency_ghz" not in u:
        return None
    return 299_792_458.0 / (u["frequency_ghz"] * 1e9)
