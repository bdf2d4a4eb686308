"""Daily water-demand forecasting with MLP, RBF and SVR models.

The :mod:`watergenius.experiments` module runs the kernel and network sweeps
and the tournament that names a Support Vector Genius (SVG), an Artificial
Neural Genius (ANG) and the Overall Genius (OG).
"""

__version__ = "0.1.0"
