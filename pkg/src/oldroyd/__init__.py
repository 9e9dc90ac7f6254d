"""Pseudo-spectral solver and Littlewood-Paley toolkit for generalized Oldroyd-B systems."""

from .dynamics import EnergyLedger, ModelParams, State
from .errors import BlowUpError, CFLError, ConfigError, ContractError
from .integrator import StepperConfig, Trajectory, integrate, step
from .lp import BesovSpec, besov_norm, dyadic_block, sobolev_norm
from .spectral import Field, Grid

__version__ = "0.1.0"
