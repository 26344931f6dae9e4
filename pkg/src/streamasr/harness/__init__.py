from .bpe import UNK_ID, BpeModel, bpe_train
from .config import load_config
from .pipeline import (AugmentPolicy, InstrumentedQueue, ManifestEntry, NoiseEntry, PipelineOutput, PipelineStats,
                       decide_augment, load_manifest, load_noise_catalog, process_utterance, run_pipeline,
                       utterance_seed)

__all__ = [
    "UNK_ID", "BpeModel", "bpe_train", "load_config",
    "AugmentPolicy", "InstrumentedQueue", "ManifestEntry", "NoiseEntry", "PipelineOutput", "PipelineStats",
    "decide_augment", "load_manifest", "load_noise_catalog", "process_utterance", "run_pipeline", "utterance_seed",
]
