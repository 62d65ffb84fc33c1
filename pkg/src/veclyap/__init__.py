"""Decentralized output-feedback synthesis via vector Lyapunov functions.

The package splits into small layers: `model` (partitioned systems and the
scenario registry), `lyapunov` (storage functions and sampled certificate
checks), `comparison` (Metzler/M-matrix certificates and the comparison
flow), `synthesis` (the constructive two-channel control laws), `sim`
(closed-loop integration), `verify` (trajectory-level audits), and `cli`.
"""

__version__ = "0.1.0"

from .model import (CompositeSystem, Scenario, ScenarioError, StatePartition,
                    apply_run_spec, build_scenario, check_overrides,
                    eval_dynamics, eval_output, load_run_spec,
                    register_run_spec, register_scenario, scenario_names)
from .lyapunov import (CheckReport, OcvlfCheckConfig, StorageFunction,
                       VectorLyapunov, apply_comparison, check_ocvlf,
                       check_small_control, eval_v, gradient_consistency,
                       lie_derivative)
from .comparison import (ComparisonIntegrationFault, ComparisonMap,
                         ComparisonTrajectory, check_domination,
                         check_quasimonotone, is_hurwitz,
                         is_m_matrix_negation, is_metzler,
                         simulate_comparison, spectral_abscissa,
                         vector_storage_lambda)
from .synthesis import (ChannelSpec, DecentralizedController, DerivedConstants,
                        SigmaDesign, SynthesisData, check_condition1,
                        check_synthesis_conditions, derive_constants,
                        derive_lorenz_constants, gain_bound, make_controller,
                        make_outer_law, make_phi2, sontag_sigma)
from .sim import (BatchRun, IntegrationFault, IntegratorConfig, Trajectory,
                  batch_run, integrate, settling_time)
from .verify import (VerificationReport, monitor_dissipation,
                     verify_closed_loop)
from .scenarios import example1_lambda, example2_lambda

__all__ = [
    "__version__",
    # model
    "CompositeSystem", "Scenario", "ScenarioError", "StatePartition",
    "apply_run_spec", "build_scenario", "check_overrides", "eval_dynamics",
    "eval_output", "load_run_spec", "register_run_spec", "register_scenario",
    "scenario_names",
    # lyapunov
    "CheckReport", "OcvlfCheckConfig", "StorageFunction", "VectorLyapunov",
    "apply_comparison", "check_ocvlf", "check_small_control", "eval_v",
    "gradient_consistency", "lie_derivative",
    # comparison
    "ComparisonIntegrationFault", "ComparisonMap", "ComparisonTrajectory",
    "check_domination", "check_quasimonotone", "is_hurwitz",
    "is_m_matrix_negation", "is_metzler", "simulate_comparison",
    "spectral_abscissa", "vector_storage_lambda",
    # synthesis
    "ChannelSpec", "DecentralizedController", "DerivedConstants",
    "SigmaDesign", "SynthesisData", "check_condition1",
    "check_synthesis_conditions", "derive_constants",
    "derive_lorenz_constants", "gain_bound", "make_controller",
    "make_outer_law", "make_phi2", "sontag_sigma",
    # sim
    "BatchRun", "IntegrationFault", "IntegratorConfig", "Trajectory",
    "batch_run", "integrate", "settling_time",
    # verify
    "VerificationReport", "monitor_dissipation", "verify_closed_loop",
    # scenarios
    "example1_lambda", "example2_lambda",
]
