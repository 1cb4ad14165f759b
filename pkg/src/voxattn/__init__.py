"""Part-assembly voxel autoencoder with attention over semantic parts.

Subpackages: ``autodiff`` (numpy reverse-mode engine and layers), ``data``
(VXP files, canonicalization, synthetic shapes, manifests), ``model``,
``losses``, ``metrics`` and ``pipeline`` (training, checkpoints, latent
editing, export). The command-line entry point is ``voxattn.cli:main``.
"""

__version__ = "0.1.0"
