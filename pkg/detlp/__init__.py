"""
detlp - Detection-loophole critical efficiencies by linear programming

Builds the local-realist linear program over trial categories for an EPR
experiment, solves it for the largest detector efficiency that still admits a
local-realist explanation, and emits verifiable infeasibility certificates.
"""

__version__ = "0.1.0"
