"""Day-ahead electricity market clearing with energy storage via virtual links."""

from .formulations import ClearingResult, FormulationKind, clear
from .model import Consumer, Esr, Horizon, Node, Scenario, Supplier, TransmissionLine

__all__ = [
    "ClearingResult",
    "FormulationKind",
    "clear",
    "Consumer",
    "Esr",
    "Horizon",
    "Node",
    "Scenario",
    "Supplier",
    "TransmissionLine",
]

__version__ = "0.1.0"
