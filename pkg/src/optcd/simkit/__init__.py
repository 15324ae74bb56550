"""Monte Carlo engine, performance measures and the exact optimality oracle."""

from .engine import BLOCK_SIZE, Estimate, combined_z, map_blocks, noise_blocks
from .metrics import (ChangeRuns, DelayProfiles, PairTrace, RunReport, delay_profiles, estimate_arl0,
                      estimate_garl_direct, estimate_garl_identity, evaluate, null_run_lengths, pair_trace,
                      ratio_estimate, simulate_changes)
from .oracle import BernoulliTree, OracleResult, count_rules, oracle_optimal

__all__ = [
    "BLOCK_SIZE", "Estimate", "combined_z", "map_blocks", "noise_blocks",
    "ChangeRuns", "DelayProfiles", "PairTrace", "RunReport", "delay_profiles", "estimate_arl0",
    "estimate_garl_direct", "estimate_garl_identity", "evaluate", "null_run_lengths", "pair_trace",
    "ratio_estimate", "simulate_changes",
    "BernoulliTree", "OracleResult", "count_rules", "oracle_optimal",
]
