from flowdance.audio.beats import TempoEstimate, estimate_tempo, track_beats
from flowdance.audio.features import (
    MelSpectrogram,
    OnsetEnvelope,
    log_mel,
    onset_envelope,
)

__all__ = [
    "MelSpectrogram",
    "OnsetEnvelope",
    "TempoEstimate",
    "estimate_tempo",
    "log_mel",
    "onset_envelope",
    "track_beats",
]
