"""
qsup: qubit decoherence through discrete walk-off blocks, Zeno and swap-based
protection, and six-basis shot-noise tomography.
"""
__version__ = "1.0.0"
