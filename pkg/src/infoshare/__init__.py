"""Simulation, stage-game solving and panel econometrics for the two-player
costly information-sharing game."""

__version__ = "0.1.0"
