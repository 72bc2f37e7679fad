"""Crop yield prediction from synthetic multi-spectral time series.

Pipeline: Laplacian sharpening -> diffusion-based augmentation ->
ConvLSTM + spectral/spatial attention encoder pre-trained with a
contrastive objective -> equilibrium-optimizer feature selection ->
convolutional yield head -> MAPE/RMSLE/SMAPE evaluation.
"""

__version__ = "0.1.0"
