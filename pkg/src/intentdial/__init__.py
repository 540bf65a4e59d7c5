"""Multi-turn intent identification over a typed intent graph.

A policy network learns (REINFORCE) to walk the graph from its root to the
query node matching the dialogue so far; every turn's reasoning path is
exported for inspection.
"""

from .estimator import IntentPathEstimator

__all__ = ["IntentPathEstimator"]
__version__ = "0.1.0"
