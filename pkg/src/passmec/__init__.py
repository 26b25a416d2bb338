"""Pinching-antenna-assisted MEC simulator and a numpy PPO trainer."""

__version__ = "0.1.0"
