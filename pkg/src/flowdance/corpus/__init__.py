from flowdance.corpus.dataset import (
    CorpusConfig,
    CorpusSample,
    generate_corpus,
    iter_samples,
    load_sample,
)
from flowdance.corpus.dance import synth_dance
from flowdance.corpus.music import synth_music
from flowdance.corpus.styles import DanceStyle, default_styles

__all__ = [
    "CorpusConfig",
    "CorpusSample",
    "DanceStyle",
    "default_styles",
    "generate_corpus",
    "iter_samples",
    "load_sample",
    "synth_dance",
    "synth_music",
]
