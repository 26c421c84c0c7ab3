"""EEG channel super-resolution toolkit.

Reconstructs the channels a low-density montage misses from the channels it
keeps, using an adversarially trained convolutional generator, and compares
the result against cubic interpolation across the scalp and against a
band-power classifier run on reconstructed signals.
"""

__version__ = "0.1.0"
