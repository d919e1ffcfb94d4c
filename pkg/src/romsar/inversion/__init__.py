from .driver import InternalWaves, InversionResult, build_model, data_factors, internal_wave_snapshots, invert
from .forward import Problem, data_sensitivity
from .gauss_newton import (GaussNewtonError, GNState, HistoryRow, Model, gauss_newton_step, read_history_csv,
                           write_history_csv)
from .objectives import (DataFactor, cholesky_sensitivity, fwi_objective, fwi_objective_from_data, fwi_residual,
                         gramian_derivative, phi, rom_block, rom_jacobian, rom_objective, rom_objective_from_data,
                         rom_residual)
from .regularizer import RegularizerQuadrature, multiplicative_regularizer

__all__ = [
    "DataFactor", "GNState", "GaussNewtonError", "HistoryRow", "InternalWaves", "InversionResult", "Model",
    "Problem", "RegularizerQuadrature", "build_model", "cholesky_sensitivity", "data_factors", "data_sensitivity",
    "fwi_objective", "fwi_objective_from_data", "fwi_residual", "gauss_newton_step", "gramian_derivative",
    "internal_wave_snapshots", "invert", "multiplicative_regularizer", "phi", "read_history_csv", "rom_block",
    "rom_jacobian", "rom_objective", "rom_objective_from_data", "rom_residual", "write_history_csv",
]
