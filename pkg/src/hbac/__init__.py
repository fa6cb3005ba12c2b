"""Heat-bath algorithmic cooling: PPA engines, cooling limits, hyperfine spin
systems and open-system HBAC rounds."""

from .core import DensityMatrix, DiagonalState, SystemShape, ThermalSpec
from .ppa import PpaConfig, run_ppa

__all__ = ["DensityMatrix", "DiagonalState", "SystemShape", "ThermalSpec", "PpaConfig", "run_ppa"]
