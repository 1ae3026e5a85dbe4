"""Attention-fused ensemble of spatiotemporal streams over RGB and radar range-Doppler clips."""

__version__ = "0.1.0"
