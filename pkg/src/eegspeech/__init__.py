"""eegspeech: EEG-to-speech pipeline.

Direct raw-EEG to audio-waveform synthesis with a temporal convolutional
stack, GRU regression from reduced EEG features onto 16 acoustic feature
families, plus the supporting preprocessing, feature extraction, KPCA,
training, and RMSE evaluation machinery.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, EegSpeechError, NumericError

__all__ = ["ConfigError", "DataError", "EegSpeechError", "NumericError", "__version__"]
