from .pce import PCExpansion, galerkin_product, galerkin_square
from .burgers import BurgersModel
from .navier_stokes import VorticityModel, velocity
from .viscosity import (
    ViscosityModel, deterministic_viscosity, kernel_kl, uniform_viscosity, viscosity_process,
)
from .ics import shear_layer_ic, temperature_ic, exact_burgers_ic, mollified_heaviside
from .exact import exact_burgers_moments, deterministic_solution

__all__ = [
    "PCExpansion", "galerkin_product", "galerkin_square", "BurgersModel", "VorticityModel",
    "velocity", "ViscosityModel", "deterministic_viscosity", "kernel_kl", "uniform_viscosity",
    "viscosity_process", "shear_layer_ic", "temperature_ic", "exact_burgers_ic",
    "mollified_heaviside", "exact_burgers_moments", "deterministic_solution",
]
