"""Adaptive BDDC preconditioning with learned coarse spaces.

The package solves 2D elliptic problems with oscillatory, high-contrast
coefficients by a BDDC method whose primal space is enriched with dominant
eigenvectors of per-edge generalized eigenproblems, and trains a small
feedforward network to predict those eigenvectors from Karhunen-Loeve
coordinates of the coefficient.
"""

__version__ = "0.1.0"
