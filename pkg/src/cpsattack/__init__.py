"""Optimal stealthy integrity attacks on LQG control loops.

The package designs the defender's loop (Kalman filter, LQG feedback,
chi-square innovation detector), synthesizes the attacker's optimal
time-varying linear injection policy for a target/stealth trade-off, predicts
the resulting costs in closed form, and verifies everything against paired
closed-loop Monte Carlo simulation.
"""

__version__ = "0.1.0"
