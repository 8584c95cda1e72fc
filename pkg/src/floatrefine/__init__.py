"""Sample-density-adaptive refinement of images reconstructed from floating meshes."""

__version__ = "0.1.0"
