"""Config -> experiment (grid, beams, truth, forward problem), synthetic data, inversion runs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .acquisition import EvenDataSeries, NoiseSpec, add_noise
from .beam import (BeamParams, SlowTimeGeometry, aperture, check_homogeneous_support, emission_time,
                   initial_condition, support_box)
from .config import RunConfig
from .gramian import choose_eta
from .inversion import InversionResult, Problem, invert
from .scene import (Grid2D, Lattice, PermittivityField, ShapeScene, build_lattice, lattice_truth, rasterize,
                    shape_from_dict)
from .solver import PmlSpec, run_even_wave, substeps

log = logging.getLogger(__name__)


@dataclass
class Experiment:
    cfg: RunConfig
    grid: Grid2D
    lattice: Lattice
    beam: BeamParams
    geoms: list[SlowTimeGeometry]
    T: list[float]
    problem: Problem
    truth: PermittivityField
    truth_alpha: np.ndarray | None    # set when the truth is lattice-representable

    @property
    def M(self) -> int:
        return self.problem.M


def beam_from_config(cfg: RunConfig) -> BeamParams:
    b = cfg["beam"]
    return BeamParams(float(b["r0"]), float(b["q0"]), float(b["T_b"]), n_k=int(b["n_k"]))


def lattice_from_config(cfg: RunConfig) -> Lattice:
    lat = cfg["lattice"]
    return build_lattice(tuple(lat["center"]), float(lat["radius"]), float(lat["h"]), cfg.sigma)


def _echo_pad(inner: tuple, boxes: np.ndarray, reach: float, spacing: float) -> int:
    """Cells to add so that no wave leaving the initial supports returns to them
    before the last recording time: boundary distance >= reach / 2 ... round trip
    of length ``reach``."""
    x0, x1, y0, y1 = inner
    d = min(np.min(boxes[:, 0] - x0), np.min(x1 - boxes[:, 0]),
            np.min(boxes[:, 1] - y0), np.min(y1 - boxes[:, 1]))
    return max(0, int(math.ceil((reach - d) / spacing)))


def build_grid(cfg: RunConfig, beam: BeamParams, geoms, T) -> Grid2D:
    """Square of side [grid].size around the target, enlarged to hold every
    initial-condition box and the imaging disk, then padded (echo rule or a
    fixed cell count) plus the PML layer."""
    g = cfg["grid"]
    h = float(g["spacing"])
    c = np.asarray(cfg["lattice"]["center"], float)
    half = 0.5 * float(g["size"])
    boxes = np.vstack([support_box(beam, geo, t) for geo, t in zip(geoms, T)])
    R = cfg.support_radius
    x0 = min(c[0] - half, boxes[:, 0].min(), c[0] - R) - 2 * h
    x1 = max(c[0] + half, boxes[:, 0].max(), c[0] + R) + 2 * h
    y0 = min(c[1] - half, boxes[:, 1].min(), c[1] - R) - 2 * h
    y1 = max(c[1] + half, boxes[:, 1].max(), c[1] + R) + 2 * h
    nx = int(math.ceil((x1 - x0) / h))
    ny = int(math.ceil((y1 - y0) / h))
    grid = Grid2D(nx, ny, h, (x0, y0))
    sol = cfg["solver"]
    if g["pad"] == "auto":
        reach = (sol["M"] - 1) * cfg.tau * float(sol["c_max"])
        pad = _echo_pad(grid.extent, boxes, reach, h)
    else:
        pad = int(g["pad"])
    if sol["pml"]:
        pad += int(sol["pml_width"])
    return grid.padded(pad)


def truth_from_config(cfg: RunConfig, grid: Grid2D, lattice: Lattice):
    eps0 = float(cfg["background"]["eps0"])
    bumps = cfg["scene"]["bumps"]
    if bumps:
        alpha = lattice_truth(lattice, bumps)
        field = rasterize(lattice, alpha, grid, eps0)
        if cfg.shapes:
            extra = ShapeScene([shape_from_dict(d) for d in cfg.shapes], eps0).rasterize(grid)
            field = PermittivityField(grid, field.values + extra.values - eps0, eps0)
            alpha = None
        return field, alpha
    return ShapeScene([shape_from_dict(d) for d in cfg.shapes], eps0).rasterize(grid), None


def build_experiment(cfg: RunConfig, *, pml: bool | None = None, threads: int | None = None) -> Experiment:
    if pml is not None and pml != cfg["solver"]["pml"]:
        cfg = cfg.with_overrides(solver={"pml": bool(pml)})
    beam = beam_from_config(cfg)
    lattice = lattice_from_config(cfg)
    ap = cfg["aperture"]
    center = tuple(cfg["lattice"]["center"])
    geoms = aperture(int(ap["S"]), float(ap["angle_min"]), float(ap["angle_max"]), center, float(ap["range"]))
    R = cfg.support_radius
    T = [emission_time(beam, geo, R) for geo in geoms]
    grid = build_grid(cfg, beam, geoms, T)
    sol = cfg["solver"]
    spec = PmlSpec(int(sol["pml_width"]), True) if sol["pml"] else PmlSpec.off()
    width = spec.width if spec.enabled else 0
    u0 = []
    for geo, t in zip(geoms, T):
        check_homogeneous_support(beam, geo, t, grid, center, R, pml_cells=width)
        u0.append(initial_condition(beam, geo, grid, t))
    truth, alpha = truth_from_config(cfg, grid, lattice)
    c_true = float(np.max(truth.speed(float(cfg["background"]["mu"]))))
    n_sub = substeps(cfg.tau, grid.spacing, max(float(sol["c_max"]), c_true))
    problem = Problem(grid, lattice, u0, cfg.tau, int(sol["M"]), n_sub,
                      eps0=float(cfg["background"]["eps0"]), mu=float(cfg["background"]["mu"]), pml=spec,
                      memory_budget=float(sol["memory_gb"]) * 1e9,
                      threads=int(threads or cfg["inversion"]["threads"]))
    log.info("grid %dx%d, spacing %.4g, n_sub %d, Q %d, S %d, M %d", grid.nx, grid.ny, grid.spacing,
             n_sub, lattice.Q, len(geoms), problem.M)
    return Experiment(cfg, grid, lattice, beam, geoms, T, problem, truth, alpha)


def noise_from_config(cfg: RunConfig, snr: float | None = None, seed: int | None = None) -> NoiseSpec:
    n = cfg["noise"]
    return NoiseSpec(snr=float(n["snr"] if snr is None else snr), ell_t=float(n["ell_t"]),
                     ell_x=float(n["ell_x"]), sigma=n["sigma"], seed=int(n["seed"] if seed is None else seed))


def synthesize(exp: Experiment, noise: NoiseSpec | None = None) -> list[EvenDataSeries]:
    """Even data of the true medium for every slow time (same solver as the inversion)."""
    p = exp.problem
    mu = float(exp.cfg["background"]["mu"])

    def one(s):
        snaps = run_even_wave(p.u0[s], exp.truth, p.tau, p.J, p.pml, n_sub=p.n_sub, mu=mu, keep="none",
                              memory_budget=p.memory_budget)
        series = EvenDataSeries(snaps.data.copy(), s, p.tau, p.M, {"T": repr(exp.T[s]),
                                                                     "theta": exp.geoms[s].theta})
        return series

    data = p.map_slow_times(one)
    if noise is not None and noise.active:
        data = [add_noise(d, noise, exp.beam.omega_o) for d in data]
    return data


def select_eta(cfg: RunConfig, data, M: int) -> list[float]:
    eta = cfg["noise"]["eta"]
    if eta == "auto":
        return [choose_eta(d.values, M) for d in data]
    return [float(eta)] * len(data)


def relative_error(exp: Experiment, field: PermittivityField) -> float:
    """||eps_hat - eps|| / ||eps - eps_o|| over the imaging disk."""
    pts = exp.grid.points()
    inside = exp.lattice.contains(pts).reshape(exp.grid.shape)
    diff = (field.values - exp.truth.values)[inside]
    ref = (exp.truth.values - exp.truth.eps0)[inside]
    nref = np.linalg.norm(ref)
    if nref == 0:
        return float(np.linalg.norm(diff))
    return float(np.linalg.norm(diff) / nref)


def run_inversion(exp: Experiment, data, mode: str | None = None, iterations: int | None = None,
                  eta=None, callback=None) -> InversionResult:
    inv = exp.cfg["inversion"]
    mode = inv["objective"] if mode is None else mode
    iterations = int(inv["iterations"]) if iterations is None else iterations
    if eta is None:
        eta = select_eta(exp.cfg, data, exp.M)
    return invert(exp.problem, data, mode=mode, iterations=iterations, eta=eta,
                  regularize=bool(inv["regularize"]), tol=float(inv["tol"]), callback=callback)
