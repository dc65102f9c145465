"""Sketch-, texture-, and color-conditioned image synthesis toolkit.

The pipeline splits supervision across CIE Lab channels: structure losses
(feature, adversarial, style, pixel, local texture) see only L, while a
separate color loss sees only ab. A paired local texture discriminator
scores whether two patches come from the same texture.
"""

__version__ = "0.1.0"
