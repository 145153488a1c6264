"""Meshfree solver for 3D hyperelastic boundary-value problems.

A coordinate network (random Fourier features + dense layers) predicts
displacement and first Piola-Kirchhoff stress fields and is trained
against a six-term physics loss (potential energy, constitutive
consistency, traction and interior strong-form residuals) with
coefficient-of-variation adaptive weighting.
"""

__version__ = "0.1.0"
