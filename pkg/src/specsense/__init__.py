"""Frequency-filtered photon correlations of Markovian quantum emitters."""
__version__ = "0.1.0"
