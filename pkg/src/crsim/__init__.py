"""Pulse-level simulation and tomography of a cross-resonance two-qubit gate."""
from .device import DeviceParams
from .dynamics import SolverConfig, evolve_lindblad, evolve_unitary, extract_jeff
from .kernels import BACKEND
from .pulses import Gate, PulseParams, build_sequence

__version__ = "0.1.0"

__all__ = ["BACKEND", "DeviceParams", "Gate", "PulseParams", "SolverConfig", "build_sequence",
           "evolve_lindblad", "evolve_unitary", "extract_jeff", "__version__"]
