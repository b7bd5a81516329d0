"""Joint computation caching and offloading for a one-user fog node.

Offline: lift the caching vector into a PSD matrix, solve the relaxation,
round its last column, then re-optimise the offloading split. Online: the
same relaxation over a sliding window of predicted task lengths.
"""
from .conic import ConicProblem, ConicSolution, SolverOptions, SolveStatus
from .harness import (ScenarioConfig, SweepRow, generate_scenario, load_config,
                      realization_rng, sweep_deadline, sweep_error_std)
from .model import (CacheModel, EnergyReport, Policy, Scenario, SlotParams,
                    SystemParams, check_feasible, effective_input,
                    effective_inputs, offload_rate, optimal_offload_given_caching,
                    slot_energy, total_weighted_energy, upload_rate)
from .online import OnlineConfig, make_window, run_online, window_sdp
from .oracle import exhaustive_optimal, fixed_caching_policy
from .sdr import (SdpData, SdpSolution, build_sdp, rank_certificate,
                  recover_policy, round_caching, solve_offline, solve_relaxation)

__version__ = "0.1.0"
