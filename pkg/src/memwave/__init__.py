"""Wave equation with memory/delay boundary damping: measures, solver, energy audits."""

__version__ = "0.1.0"
