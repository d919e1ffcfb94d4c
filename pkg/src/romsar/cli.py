"""Command line: romsar {synth,invert,fwi,image,validate} --config FILE [options]."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import read_even_csv, write_even_csv
from .config import ConfigError, RunConfig, parse_config
from .inversion import write_history_csv
from .io import emit_field
from .pipeline import build_experiment, noise_from_config, relative_error, run_inversion, select_eta, synthesize

log = logging.getLogger("romsar")

COMMANDS = ("synth", "invert", "fwi", "image", "validate")


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    over: dict = {}
    if args.seed is not None:
        over.setdefault("noise", {})["seed"] = int(args.seed)
    if args.noise_snr is not None:
        over.setdefault("noise", {})["snr"] = float(args.noise_snr)
    if args.threads is not None:
        over.setdefault("inversion", {})["threads"] = int(args.threads)
    if args.iterations is not None:
        over.setdefault("inversion", {})["iterations"] = int(args.iterations)
    if args.no_pml:
        over.setdefault("solver", {})["pml"] = False
    return cfg.with_overrides(**over) if over else cfg


def _header(cfg: RunConfig, **extra) -> dict:
    h = {"config_hash": cfg.hash(), "romsar": __version__}
    h.update(extra)
    return h


def _load_or_synthesize(exp, out: Path):
    """Data CSVs from ``out/data`` when written by ``synth`` with this config, else synthesized."""
    ddir = out / "data"
    files = sorted(ddir.glob("s*.csv")) if ddir.is_dir() else []
    if len(files) == exp.problem.S:
        data = [read_even_csv(f) for f in files]
        if all(d.meta.get("data_hash") == exp.cfg.hash(exclude=("inversion",)) for d in data):
            log.info("using data from %s", ddir)
            return data
        log.warning("data in %s were written with a different config; resynthesizing", ddir)
    return synthesize(exp, noise_from_config(exp.cfg))


def cmd_synth(exp, out: Path) -> int:
    data = synthesize(exp, noise_from_config(exp.cfg))
    ddir = out / "data"
    ddir.mkdir(parents=True, exist_ok=True)
    for d in data:
        write_even_csv(ddir / f"s{d.s:03d}.csv", d,
                       _header(exp.cfg, data_hash=exp.cfg.hash(exclude=("inversion",)),
                               seed=exp.cfg["noise"]["seed"]))
    h = _header(exp.cfg)
    emit_field(exp.truth, out / "truth.csv", "csv", h)
    emit_field(exp.truth, out / "truth.pgm", "graymap", h)
    print(f"wrote {len(data)} data series to {ddir}")
    return 0


def _field_range(exp):
    v = exp.truth.values
    lo, hi = float(v.min()), float(v.max())
    return (lo, hi) if hi > lo else (lo, lo + 1.0)


def cmd_invert(exp, out: Path, mode: str, iterations: int | None = None) -> int:
    data = _load_or_synthesize(exp, out)
    etas = select_eta(exp.cfg, data, exp.M)
    fdir = out / "fields"
    fdir.mkdir(parents=True, exist_ok=True)
    h = _header(exp.cfg, objective=mode, eta=" ".join(f"{e:g}" for e in etas))
    vr = _field_range(exp)

    def cb(i, alpha, row):
        f = exp.problem.eps(alpha)
        emit_field(f, fdir / f"iter_{i:03d}.csv", "csv", dict(h, iteration=i))
        emit_field(f, fdir / f"iter_{i:03d}.pgm", "graymap", dict(h, iteration=i), value_range=vr)
        print(f"iteration {i:3d}  O={row.objective:.6e}  O_fwi={row.objective_fwi:.6e}  "
              f"step={row.step:.4g}  R={row.regularizer:.6g}", flush=True)

    res = run_inversion(exp, data, mode=mode, iterations=iterations, eta=etas, callback=cb)
    name = "image_history" if iterations == 1 else "convergence"
    write_history_csv(out / f"{name}.csv", res.history, dict(h, stop=res.stop_reason))
    final = "image" if iterations == 1 else "final"
    emit_field(res.field, out / f"{final}.csv", "csv", h)
    emit_field(res.field, out / f"{final}.pgm", "graymap", h, value_range=vr)
    err = relative_error(exp, res.field)
    print(f"stopped: {res.stop_reason}; relative permittivity error on the imaging disk: {err:.4g}")
    return 0


def cmd_validate(exp) -> int:
    from .validate import run_all
    results = run_all(exp)
    for r in results:
        print(r.line(), flush=True)
    return 0 if all(r.passed for r in results) else 1


def run_pipeline(command: str, cfg: RunConfig, out: Path, args=None) -> int:
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    exp = build_experiment(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if command == "synth":
        return cmd_synth(exp, out)
    if command == "invert":
        return cmd_invert(exp, out, "rom")
    if command == "fwi":
        return cmd_invert(exp, out, "fwi")
    if command == "image":
        return cmd_invert(exp, out, cfg["inversion"]["objective"], iterations=1)
    return cmd_validate(exp)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="romsar", description="ROM-based SAR permittivity inversion")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="TOML run configuration")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("--seed", type=int, help="noise seed (overrides [noise] seed)")
    p.add_argument("--iterations", type=int, help="Gauss-Newton iterations (overrides [inversion])")
    p.add_argument("--noise-snr", type=float, help="data SNR (overrides [noise] snr; inf disables noise)")
    p.add_argument("--threads", type=int, help="worker threads over slow times")
    p.add_argument("--no-pml", action="store_true", help="disable the absorbing layer")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_flags(parse_config(args.config), args)
        if args.iterations is not None and args.iterations < 0:
            raise ConfigError("--iterations must be non-negative")
        if args.noise_snr is not None and not (args.noise_snr > 0 or math.isinf(args.noise_snr)):
            raise ConfigError("--noise-snr must be positive")
        return run_pipeline(args.command, cfg, Path(args.out), args)
    except ConfigError as exc:
        print(f"romsar: configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(f"romsar: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
