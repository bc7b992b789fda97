"""Aerie - quantum multi-agent actor-critic for UAV base-station placement."""

__version__ = "0.1.0"
