from flowdance.musicenc.encoder import (
    MusicEmbedding,
    MusicEncoderParams,
    embedding_dim,
    encode_music,
)
from flowdance.musicenc.features import beat_features
from flowdance.musicenc.movement import embed_movement, train_movement_embedder
from flowdance.musicenc.style import embed_style, train_style_embedder

__all__ = [
    "MusicEmbedding",
    "MusicEncoderParams",
    "beat_features",
    "embed_movement",
    "embed_style",
    "embedding_dim",
    "encode_music",
    "train_movement_embedder",
    "train_style_embedder",
]
