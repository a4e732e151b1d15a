"""Mixture-of-log-modular proposals for MCMC over subsets."""
__version__ = "0.1.0"
