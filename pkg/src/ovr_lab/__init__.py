"""Own-voice reconstruction toolkit: RTF estimation, in-ear corpus simulation,
a numpy time-domain U-Net and objective evaluation."""

__version__ = "0.1.0"

SAMPLE_RATE = 16000
