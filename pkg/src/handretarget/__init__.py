"""Offline hand-to-robot retargeting for a 5-DOF arm with a gripper."""

__version__ = "0.1.0"
