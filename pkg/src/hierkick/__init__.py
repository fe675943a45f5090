"""Dual-rate hierarchical RL for a planar robot-soccer task."""

__version__ = "0.1.0"
