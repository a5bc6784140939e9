"""flowdance: dance video generation from music via latent optical flow.

The pipeline has three trained parts: a latent flow autoencoder that learns
to warp a reference frame toward a driving frame, a music encoder producing
a style/movement/beat embedding, and a conditional 3D diffusion model that
generates flow volumes from noise. A procedural music+dance corpus with
ground-truth beats makes the whole thing trainable and checkable on a CPU.
"""

__version__ = "0.1.0"

from flowdance.errors import (
    FlowDanceError,
    MissingArtifactError,
    NumericError,
    ValidationError,
)

__all__ = [
    "FlowDanceError",
    "ValidationError",
    "MissingArtifactError",
    "NumericError",
    "__version__",
]
