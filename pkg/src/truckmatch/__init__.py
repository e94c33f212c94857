"""Truck-to-shipment matching from GPS trajectories.

The package discretizes truck pings onto a hierarchical hexagonal grid,
accumulates per-lane historical cell sets, scores candidate trucks with a
gradient-boosted probabilistic ranker over route-similarity features, and
gates assignments through confidence thresholds with periodic
re-evaluation. A synthetic fleet simulator and a shadow-evaluation
harness compare the trajectory engine against a proximity-rule baseline.
"""

__version__ = "0.1.0"
