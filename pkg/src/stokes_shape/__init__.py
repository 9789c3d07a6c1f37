"""Shape optimization of an obstacle in Stokes flow with two competing shape metrics."""

__version__ = "0.1.0"
