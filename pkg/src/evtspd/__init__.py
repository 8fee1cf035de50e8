"""Truck-and-drone routing toolkit with shared-battery electric truck.

Subpackages follow the pipeline: instance data (core), parallel-arc road
network with recharge paths (multigraph), coordinated route evaluation
(routes), arc MILP export (milp), set-partitioning master (rmp), labeling
pricing (pricing), exact search (bp), metaheuristic (vns), brute-force
reference (oracle), command line (cli).
"""

__version__ = "0.1.0"
