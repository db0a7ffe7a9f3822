"""
fluxcav: flux-tunable transmons in a 3D cavity.

Models transmon frequencies under coil flux control, simulates dispersive
spectroscopy maps, calibrates the coil-to-qubit crosstalk matrix, plans coil
currents for target frequencies, and fits resonator quality factors.
"""

__version__ = "0.1.0"
