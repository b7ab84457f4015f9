"""Speech enhancement with complex masks, trainable on clean pairs, noisy recordings, or both."""
from .dsp import ComplexSpectrogram, StftConfig, Waveform, apply_mask, compress, istft, stft
from .losses import LossConfig
from .model import ModelConfig, ModelParams

__version__ = "0.1.0"
