"""Rendezvous planning with a non-cooperative Dubins target.

Subpackages: ``hjb`` (minimum-time value functions and reachable sets),
``map_estimator`` and ``gp_posterior`` (trajectory estimation and the
gridded belief), ``planner`` (greedy rendezvous selection), ``baseline``
(Kalman filter with proportional guidance) and ``sim_harness`` (scenarios
and end-to-end runs).
"""
__version__ = "0.1.0"
