"""Dhumbal card game simulator, agents, tournaments, and evaluation tools."""

__version__ = "0.1.0"
