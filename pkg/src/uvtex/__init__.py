"""UV texture synthesis toolkit.

Bakes garment meshes into UV position/mask maps, generates procedural
training tuples, trains a compact latent-space denoiser conditioned on a
reference image and a UV position map, and samples seam-consistent UV
textures.
"""

__version__ = "0.1.0"
