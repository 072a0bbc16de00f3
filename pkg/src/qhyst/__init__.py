"""Simulation and analysis of field-driven hysteresis in transverse-field Ising models."""

from .analysis import (FitResult, LoopArea, PowerLawFit, SampleEntry, SampleSet, linear_fit, loop_area,
                       max_kink_density, power_law_fit, sample_configurations, structure_factor)
from .errors import NumericalError, QHystError, ValidationError
from .exact import build_hamiltonian, eigendecompose, min_gap_scan, observe, propagate_step
from .hybrid import HybridConfig, KinkField, ipf_update, kinetics_step, run_protocol
from .io import load_sampleset_csv, load_schedule_csv, parse_config, read_trace_csv, write_trace_csv
from .lz import LzParams, lz_numeric_oracle, lz_probability, transition_probability
from .meanfield import MfaParams, SinusoidalDrive, interaction_picture_trace, mfa_derivatives, run_mfa
from .spin_model import (DriveProtocol, LatticeSpec, Schedule, UnitSystem, apply_afm_gauge, build_grid,
                         build_ring, drive_value, schedule_lookup)
from .trace import HysteresisTrace

__version__ = "0.1.0"

__all__ = [
    "DriveProtocol", "FitResult", "HybridConfig", "HysteresisTrace", "KinkField", "LatticeSpec", "LoopArea",
    "LzParams", "MfaParams", "NumericalError", "PowerLawFit", "QHystError", "SampleEntry", "SampleSet",
    "Schedule", "SinusoidalDrive", "UnitSystem", "ValidationError", "apply_afm_gauge", "build_grid",
    "build_hamiltonian", "build_ring", "drive_value", "eigendecompose", "interaction_picture_trace",
    "ipf_update", "kinetics_step", "linear_fit", "load_sampleset_csv", "load_schedule_csv", "loop_area",
    "lz_numeric_oracle", "lz_probability", "max_kink_density", "mfa_derivatives", "min_gap_scan", "observe",
    "parse_config", "power_law_fit", "propagate_step", "read_trace_csv", "run_mfa", "run_protocol",
    "sample_configurations", "schedule_lookup", "structure_factor", "transition_probability",
    "write_trace_csv",
]
