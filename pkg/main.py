"""
GraphROM - Main Entry Point
===========================
Non-local calculus on graphs and reduced-order model discovery.

Module Structure:
- config.py: Tolerances, presets, column names, exit codes
- errors.py: Exception hierarchy
- point_cloud.py: Point clouds, interlaced meshes, sorted neighbors
- poly_basis.py: Multi-indices and moment systems
- stencil.py: Neighborhood growth, reduced weights, Gaussian baseline
- operators.py: Non-local derivatives, sparse operators, graph calculus
- taylor.py: Modified Taylor surrogates and convergence studies
- regress.py: Designs, OLS/Ridge, losses, stepwise elimination
- allen_cahn.py: Allen-Cahn trajectories and the reduced-order model basis
- data_processing.py: File formats
- cli.py: Subcommands

Usage:
    python main.py convergence --p 1 --k 2 --r 3 --K 6
"""

import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
