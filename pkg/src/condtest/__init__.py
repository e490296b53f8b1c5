"""Identity testing for high-dimensional discrete distributions.

Sampling access to a hidden distribution over Q^n comes through
query-counted conditional oracles; testing against a described visible
distribution reduces to single-coordinate problems through entropy
tensorization (coordinate access) or the exact prefix chain rule
(subcube access).
"""

__version__ = "0.1.0"

from . import adversaries, at_tester, harness, models, oracles, subcube, testers

__all__ = [
    "adversaries",
    "at_tester",
    "harness",
    "models",
    "oracles",
    "subcube",
    "testers",
]
