"""Lattice simulator for the renormalised continuous Anderson hamiltonian."""

__version__ = "0.1.0"

from andham.noise import LatticeGrid, Mollifier, NoiseField, mollify, rescale_noise, sample_white
from andham.greens import GreensKernel, ReflectedKernel, decompose, eval_K, eval_P
from andham.renorm import RenormConstants, compute_c1, compute_c11_c12, lattice_self_energy, scaled_constants
from andham.operator import HamiltonianMatrix, ResolventHandle, assemble, fixed_point_resolvent, resolvent_apply
from andham.spectra import SpectrumResult, eigenvalue_continuity_check, lowest_eigenpairs

__all__ = [
    "LatticeGrid", "Mollifier", "NoiseField", "mollify", "rescale_noise", "sample_white",
    "GreensKernel", "ReflectedKernel", "decompose", "eval_K", "eval_P",
    "RenormConstants", "compute_c1", "compute_c11_c12", "lattice_self_energy", "scaled_constants",
    "HamiltonianMatrix", "ResolventHandle", "assemble", "fixed_point_resolvent", "resolvent_apply",
    "SpectrumResult", "eigenvalue_continuity_check", "lowest_eigenpairs",
]
