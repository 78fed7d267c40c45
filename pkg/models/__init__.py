"""Models module for spikelab configuration and result schemas."""

from .schemas import (
    NonlinearitySpec,
    TruncationParams,
    PolynomialTerm,
    PotentialSpec,
    LimitProblemConfig,
    GridConfig,
    SolverConfig,
    MinmaxConfig,
    SweepConfig,
    OutputConfig,
    EpsProblem,
    RunConfig,
)
from .results import (
    CheckResult,
    RadialProfile,
    GroundState,
    MPCurve,
    CriticalPointClass,
    V0Report,
    RadiusSelection,
    GridField,
    NewtonSolution,
    SaddleResult,
    BoundaryGapReport,
    ConeMax,
    DegreeReport,
    EnergyBracket,
    UntruncationReport,
    ConcentrationClass,
    SpikeDiagnostics,
    PowerLawFit,
    SpikeRun,
    SpikeOutcome,
)

__all__ = [
    "NonlinearitySpec",
    "TruncationParams",
    "PolynomialTerm",
    "PotentialSpec",
    "LimitProblemConfig",
    "GridConfig",
    "SolverConfig",
    "MinmaxConfig",
    "SweepConfig",
    "OutputConfig",
    "EpsProblem",
    "RunConfig",
    "CheckResult",
    "RadialProfile",
    "GroundState",
    "MPCurve",
    "CriticalPointClass",
    "V0Report",
    "RadiusSelection",
    "GridField",
    "NewtonSolution",
    "SaddleResult",
    "BoundaryGapReport",
    "ConeMax",
    "DegreeReport",
    "EnergyBracket",
    "UntruncationReport",
    "ConcentrationClass",
    "SpikeDiagnostics",
    "PowerLawFit",
    "SpikeRun",
    "SpikeOutcome",
]
