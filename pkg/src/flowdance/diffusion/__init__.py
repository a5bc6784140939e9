from flowdance.diffusion.sample import dynamic_threshold, sample_flow_volume
from flowdance.diffusion.schedule import NoiseSchedule, cosine_schedule
from flowdance.diffusion.train import train_stage2, training_loss
from flowdance.diffusion.unet import DenoiserParams, predict_noise
from flowdance.diffusion.volume import FlowVolume, VolumeStats, build_target_volume, diffuse_forward

__all__ = [
    "DenoiserParams",
    "FlowVolume",
    "NoiseSchedule",
    "VolumeStats",
    "build_target_volume",
    "cosine_schedule",
    "diffuse_forward",
    "dynamic_threshold",
    "predict_noise",
    "sample_flow_volume",
    "train_stage2",
    "training_loss",
]
