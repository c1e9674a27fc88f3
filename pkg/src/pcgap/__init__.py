"""pcgap: a numerical laboratory for the predictive-causal gap.

Closed-form and numerical analysis of when predictively optimal encoders
abandon the causal (system) coordinate in linear-Gaussian dynamics, plus
desk-scale neural and nonlinear (Duffing) experiments.
"""

__version__ = "0.1.0"
