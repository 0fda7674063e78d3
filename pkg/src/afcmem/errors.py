"""Exception types raised across the package."""


class AFCError(Exception):
    """Base class for package errors."""


class FinesseError(AFCError, ValueError):
    """Comb teeth overlap: finesse delta/gamma is not above 1."""


class GridCoverageError(AFCError, ValueError):
    """Simulation grid too coarse or too short for the comb."""


class DegenerateTraceError(AFCError, ValueError):
    """Trace carries no usable structure to fit (flat, too short, too few teeth)."""


class NonDecayingError(AFCError, ValueError):
    """Echo-height series shows no Gaussian decay."""


class UnphysicalEfficiencyError(AFCError, ValueError):
    """Three-level efficiency exceeds the two-level efficiency it is built from."""


class ConfigError(AFCError, ValueError):
    """Malformed scenario configuration."""


class ValidationError(AFCError):
    """Pulse sequence violates a timing constraint."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        lines = "; ".join(f"{d.field}: {d.message}" for d in self.diagnostics)
        super().__init__(f"invalid pulse sequence: {lines}")
