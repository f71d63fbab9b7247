"""
Bloch Sentinel spectral library: Fourier-lattice fields, operator assembly,
band analysis, complex-quasimomentum bounds and the ∂̄ model problem.
"""

__version__ = "1.0.0"
