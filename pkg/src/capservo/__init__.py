"""Simulated capacitive servoing of a soft wrap-around gripper for limb bathing."""

__version__ = "0.1.0"
