"""Image encoders producing one fixed-dimension vector per image.

The default `pixels` encoder is deterministic and fully offline: a 16x16 RGB
downsample, globally centered and flattened to 768 dims. The `vit` encoder
uses a pretrained torchvision backbone's class token and needs torch plus
downloadable weights; any encoder works as long as row dimensions agree.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

PIXEL_SIDE = 16


def encode_pixels(image: Image.Image) -> np.ndarray:
    rgb = image.convert("RGB").resize((PIXEL_SIDE, PIXEL_SIDE), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    flat = arr.reshape(-1)
    return flat - flat.mean()


class VitEncoder:
    """Class-token features from a pretrained torchvision ViT-B/16."""

    def __init__(self):
        try:
            import torch
            import torchvision.models as tvm
        except ImportError as exc:
            raise RuntimeError("the vit encoder needs torch and torchvision") from exc
        try:
            weights = tvm.ViT_B_16_Weights.IMAGENET1K_V1
            self._model = tvm.vit_b_16(weights=weights).eval()
            self._preprocess = weights.transforms()
        except Exception as exc:
            raise RuntimeError(
                "could not load pretrained ViT weights (offline?); "
                "use --encoder pixels instead"
            ) from exc
        self._torch = torch

    def __call__(self, image: Image.Image) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            x = self._preprocess(image.convert("RGB")).unsqueeze(0)
            feats = self._model._process_input(x)
            cls = self._model.class_token.expand(1, -1, -1)
            feats = torch.cat([cls, feats], dim=1)
            feats = self._model.encoder(feats)
        return feats[0, 0].numpy().astype(np.float32)


def get_encoder(name: str):
    if name == "pixels":
        return encode_pixels
    if name == "vit":
        return VitEncoder()
    raise ValueError(f"unknown encoder {name!r} (choose pixels or vit)")
