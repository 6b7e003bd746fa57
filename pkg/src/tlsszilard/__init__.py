"""Qubit coupled to a finite two-level-system bath under active feedback."""

from tlsszilard.model import (
    Experiment,
    FreeDecay,
    Initialize,
    LadderParams,
    Monitor,
    PiPulseTrain,
    PopulationState,
    QubitParams,
    Stabilize,
    SystemParams,
    Wait,
)

__version__ = "0.1.0"

__all__ = [
    "Experiment",
    "FreeDecay",
    "Initialize",
    "LadderParams",
    "Monitor",
    "PiPulseTrain",
    "PopulationState",
    "QubitParams",
    "Stabilize",
    "SystemParams",
    "Wait",
    "__version__",
]
