"""Jerk-bounded safe reinforcement learning for joint motion."""

__version__ = "0.1.0"
