from flowdance.core.rng import RngStream, seeded_rng
from flowdance.core.types import AudioClip, BeatGrid, LatentMap, VideoTensor

__all__ = [
    "AudioClip",
    "BeatGrid",
    "LatentMap",
    "RngStream",
    "VideoTensor",
    "seeded_rng",
]
