"""Dubins minimum-time value functions, optimal steering and reachability."""
from .control import ExtractionWarning, Trajectory, eval_value, extract_trajectory, optimal_heading_rate
from .dump import read_reachable, read_value_function, rle_decode, rle_encode, write_reachable, write_value_function
from .reach import PursuerPlan, ReachableSet, pursuer_path, reachable_set
from .solver import DiskRegion, Grid, State, StationSet, ValueFunction, interpolate, solve_hjb, wrap_angle

__all__ = [
    "DiskRegion", "Grid", "State", "StationSet", "ValueFunction", "interpolate", "solve_hjb",
    "wrap_angle", "Trajectory", "ExtractionWarning", "eval_value", "optimal_heading_rate",
    "extract_trajectory", "ReachableSet", "reachable_set", "PursuerPlan", "pursuer_path",
    "write_value_function", "read_value_function", "rle_encode", "rle_decode",
    "write_reachable", "read_reachable",
]
