"""Sequential quantum changepoint detection with classical shadows.

Simulates streams of qubit states that switch family at an unknown
time, monitors them through randomized (shadow) or matched projective
measurements, and detects the change with betting-based e-detectors
whose threshold crossings control the average run length.
"""

__version__ = "0.1.0"
