"""Repository stability analysis: windowed activity metrics, threshold
criteria and a composite stability index over repository event histories."""

__version__ = "0.1.0"
