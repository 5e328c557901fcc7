"""Manifold-learning dimensionality reduction and KNN image annotation.

Diffusion-map embeddings with PCA / locally-linear-embedding /
Laplacian-eigenmap baselines, synthetic benchmark manifolds, three
classical image descriptors, and a nearest-neighbour multi-label
annotation pipeline scored by mean Average Precision.
"""

__version__ = "0.1.0"
