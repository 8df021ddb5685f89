"""Standardize raw transaction features and reduce them with PCA.

Raw vectors carry 128 noisy dimensions; the pipeline keeps the 64
directions holding most of the variance and reports how much survives.
"""
import numpy as np

from autocomply.features import fit_pipeline

rng = np.random.default_rng(0)

# synthesize correlated features: 8 latent factors smeared over 128 dims
latent = rng.normal(size=(2000, 8))
mixing = rng.normal(size=(8, 128))
raw = latent @ mixing + 0.3 * rng.normal(size=(2000, 128)) + 5.0

pipeline = fit_pipeline(raw, k=64)
print(f"input dims: {pipeline.input_dim}, output dims: {pipeline.output_dim}")
print(f"variance coverage of the kept components: {pipeline.pca.coverage():.4f}")

ratios = pipeline.pca.explained_variance_ratio()
print(f"top five component shares: {np.round(ratios[:5], 4)}")

projected = pipeline.transform(raw[:5])
print(f"projected sample shape: {projected.shape}")
print("projection is orthonormal:",
      np.allclose(pipeline.pca.components @ pipeline.pca.components.T, np.eye(64), atol=1e-8))
