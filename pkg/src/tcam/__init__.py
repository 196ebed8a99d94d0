"""Always-on mm-scale camera toolkit: image codecs, change detection, lens/colour
correction layers, DNN weight compression and the system energy model."""

__version__ = "0.1.0"
