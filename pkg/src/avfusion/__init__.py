"""End-to-end audiovisual fusion with per-modality bottleneck encoders and BLSTMs."""

__version__ = "0.1.0"
