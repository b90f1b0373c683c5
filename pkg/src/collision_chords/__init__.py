"""Consecutive-collision chords of the rotating Kepler problem on Moser-regularized levels."""

__version__ = "0.1.0"
