from flowdance.flowae.model import (
    AutoencoderParams,
    decode_latent,
    encode_image,
    predict_flow,
)
from flowdance.flowae.perceptual import reconstruction_loss
from flowdance.flowae.train import train_stage1
from flowdance.flowae.warp import FlowField, OcclusionMap, warp_latent

__all__ = [
    "AutoencoderParams",
    "FlowField",
    "OcclusionMap",
    "decode_latent",
    "encode_image",
    "predict_flow",
    "reconstruction_loss",
    "train_stage1",
    "warp_latent",
]
