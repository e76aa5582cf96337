"""dcpc: a rewriting system for desk-scale convex optimization problems.

The package parses a small modeling language, verifies the composition
discipline, rewrites problems through invertible reductions into LP/QP/cone
standard forms, and solves them with embedded dense solvers.
"""

__version__ = "0.1.0"
