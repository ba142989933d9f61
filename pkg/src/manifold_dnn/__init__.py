"""Feedforward neural networks on Riemannian manifolds.

Three architectures share one dense ReLU engine: ambient-embedding
networks (eDNN) feed an equivariant embedding of the manifold into a
plain network; tangent networks (tDNN) feed normal coordinates at a
single base point; chart-atlas networks (iDNN) blend per-chart networks
with a bump-function partition of unity. Geometry kernels for the
sphere, planar preshape space, and SPD matrices, an SPD layer stack with
eigendecomposition backpropagation, synthetic data generators, a
training/evaluation harness, and a config-driven CLI round out the
package.
"""

__version__ = "0.1.0"
