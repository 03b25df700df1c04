"""Utterance I/O, audio/visual feature extraction, synchronisation and noise."""

from .audio import SpectrogramConfig, babble_noise, mix_at_snr, n_frames, snr_db, spectrogram
from .features import Example, Utterance, extract_features, load_examples, load_utterance
from .io import (ManifestRow, check_subject_disjoint, read_features, read_manifest, read_pgm,
                 read_wav, write_features, write_manifest, write_pgm, write_wav)
from .synth import SynthConfig, synth_dataset
from .video import FeatureSequence, mean_image_subtract, synchronize, upsample_linear

__all__ = [
    "Example", "FeatureSequence", "ManifestRow", "SpectrogramConfig", "SynthConfig", "Utterance",
    "babble_noise", "check_subject_disjoint", "extract_features", "load_examples", "load_utterance", "mean_image_subtract",
    "mix_at_snr", "n_frames", "read_features", "read_manifest", "read_pgm", "read_wav", "snr_db",
    "spectrogram", "synchronize", "synth_dataset", "upsample_linear", "write_features",
    "write_manifest", "write_pgm", "write_wav",
]
