"""
Risk-aware benchmarking of Bayesian-optimization models on protein fitness landscapes
"""
__version__ = "0.1.0"
