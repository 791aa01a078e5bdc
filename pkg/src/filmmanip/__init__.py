"""Simulation, identification and analysis toolkit for a film-based
electromagnetically driven soft parallel micromanipulator."""

__version__ = "0.1.0"
