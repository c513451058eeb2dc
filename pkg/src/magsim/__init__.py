"""Pulse-level open-system simulator for a transmon-qutrit / magnon hybrid.

Units convention used throughout: absolute frequencies in GHz, detunings and
couplings and drive amplitudes in MHz (linear frequencies, i.e. already
divided by 2π), times in ns. Hamiltonian matrices are assembled in angular
units (rad/ns), so a linear frequency f enters as 2π·f.
"""

__version__ = "0.1.0"
