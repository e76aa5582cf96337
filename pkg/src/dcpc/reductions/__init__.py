"""Reductions: invertible problem rewritings and their composition."""

from .framework import (InverseRecord, Reduction, ReductionChain,
                        ReductionError, Solution, Status)

__all__ = ["InverseRecord", "Reduction", "ReductionChain", "ReductionError",
           "Solution", "Status"]
