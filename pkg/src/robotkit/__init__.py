"""Robustness-oriented testing for small neural networks.

Loss-based test metrics (ZOL, FOL, Gini), FGSM/PGD attacks, FOL-guided
fuzzing, test selection and a test-and-retrain loop, on top of a compact
numpy MLP.
"""

__version__ = "0.1.0"
