"""Trainable model state and head wiring.

All parameters live in one ParamSet:

  adapter.*      2-layer residual MLP over the frozen input embeddings;
                 its (un-normalized) output feeds every branch, and its
                 l2-normalized output is the shared clustering space h used
                 by both prototype classifiers
  gcd.prototypes K x d prototype rows for the discovery classifier
  rep.*          3-layer projector for the contrastive representation loss
  sdl.*          5-layer projector into the distribution-detection space
  sdl.pos/neg    per-known-class binary classifier weight rows (M x sdl_dim)
  adl.prototypes K x d prototype rows for the debiased classifier

Prototype and binary-classifier rows are stored unconstrained and
l2-normalized inside the forward pass, so scaling a stored row never changes
the produced probabilities.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from gcdlib import compute as C
from gcdlib.config import Config, config_to_text, parse_config_text
from gcdlib.errors import ConfigError, DimensionError, FormatError

CHECKPOINT_MAGIC = b"DGCK"
CHECKPOINT_VERSION = 1

# The adapter's residual branch is damped so the shared feature space drifts
# at warm-backbone pace instead of being whipped around by the head losses;
# fine-tuned pretrained blocks move slowly relative to their weight scale and
# the default loss weights assume that regime.
ADAPTER_RESIDUAL_SCALE = 0.1


def default_config() -> Config:
    """Published training defaults (200-epoch schedule, batch 128, lr 0.1)."""
    return Config()


@dataclass
class ModelState:
    dim: int
    num_total_classes: int  # K
    num_old_classes: int    # M
    config: Config
    params: C.ParamSet

    @property
    def adapter_spec(self) -> C.MlpSpec:
        return C.MlpSpec([self.dim, self.dim, self.dim])

    @property
    def rep_spec(self) -> C.MlpSpec:
        return C.MlpSpec([self.dim, self.dim, self.dim, self.config.rep_dim])

    @property
    def sdl_spec(self) -> C.MlpSpec:
        d = self.dim
        return C.MlpSpec([d, d, d, d, d, self.config.sdl_dim])


def init_model(dim: int, num_total_classes: int, num_old_classes: int,
               config: Config, seed: int) -> ModelState:
    """Fresh parameters; the adapter starts as the identity map plus noise."""
    if num_total_classes < 2:
        raise ConfigError("need at least 2 total classes")
    if not (0 < num_old_classes <= num_total_classes):
        raise ConfigError("need 0 < M <= K")
    if config.enable_sdl and num_old_classes < 2:
        raise ConfigError("the one-vs-all detector needs M >= 2 for hard negatives")

    rng = np.random.default_rng(np.uint64(seed))
    params = C.ParamSet()

    # Adapter: residual two-layer MLP, final layer zero-initialized so the
    # starting map is the identity over the pretrained embedding geometry.
    params.add("adapter.layer0.W", rng.standard_normal((dim, dim)) * np.sqrt(1.0 / dim))
    params.add("adapter.layer0.b", np.zeros((1, dim)))
    params.add("adapter.layer1.W", np.zeros((dim, dim)))
    params.add("adapter.layer1.b", np.zeros((1, dim)))

    state = ModelState(dim, num_total_classes, num_old_classes, config, params)
    C.mlp_init(params, "rep", state.rep_spec, rng)
    C.mlp_init(params, "sdl", state.sdl_spec, rng)

    params.add("gcd.prototypes", rng.standard_normal((num_total_classes, dim)))
    params.add("adl.prototypes", rng.standard_normal((num_total_classes, dim)))
    params.add("sdl.pos", rng.standard_normal((num_old_classes, config.sdl_dim)))
    params.add("sdl.neg", rng.standard_normal((num_old_classes, config.sdl_dim)))
    return state


# ---------------------------------------------------------------------------
# forward passes


def forward_backbone(state: ModelState, raw_features: np.ndarray):
    """Adapter over frozen features.

    Returns (phi, h): phi = x + MLP(x) is the un-normalized adapter output
    consumed by the projectors, h = l2_normalize(phi) is the shared
    clustering space consumed by both prototype heads.
    """
    x = C.constant(raw_features)
    p = state.params
    hidden = C.gelu(C.linear_forward(x, p["adapter.layer0.W"], p["adapter.layer0.b"]))
    delta = C.linear_forward(hidden, p["adapter.layer1.W"], p["adapter.layer1.b"])
    phi = C.add(x, C.scale(delta, ADAPTER_RESIDUAL_SCALE))
    return phi, C.l2_normalize(phi)


def prototype_logits(h: C.Tensor, prototypes: C.Tensor) -> C.Tensor:
    """dot(h, c/||c||) for every prototype row c (temperature applied later)."""
    return C.matmul(h, C.l2_normalize(prototypes), transpose_b=True)


def rep_projection(state: ModelState, phi: C.Tensor) -> C.Tensor:
    z = C.mlp_forward(state.params, "rep", state.rep_spec, phi)
    return C.l2_normalize(z)


def sdl_projection(state: ModelState, phi: C.Tensor) -> C.Tensor:
    f = C.mlp_forward(state.params, "sdl", state.sdl_spec, phi)
    return C.l2_normalize(f)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, state: ModelState) -> None:
    """DGCK v1: config blob then each parameter, sorted by name, little-endian."""
    blob = config_to_text(state.config, extra={
        "data_dim": state.dim,
        "data_num_old_classes": state.num_old_classes,
        "data_num_total_classes": state.num_total_classes,
    }).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name, p in state.params.items():
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", p.rows, p.cols))
            f.write(p.data.astype("<f8").tobytes(order="C"))


def load_checkpoint(path) -> ModelState:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise FormatError("checkpoint: bad magic, expected DGCK")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"checkpoint: unsupported version {version}")
    (blob_len,) = struct.unpack_from("<I", raw, 8)
    off = 12
    blob = raw[off:off + blob_len]
    if len(blob) != blob_len:
        raise FormatError("checkpoint: truncated config blob")
    off += blob_len
    config, extras = parse_config_text(
        blob.decode("utf-8"),
        extra_keys=("data_dim", "data_num_old_classes", "data_num_total_classes"),
    )
    for key in ("data_dim", "data_num_old_classes", "data_num_total_classes"):
        if key not in extras:
            raise FormatError(f"checkpoint: config blob missing {key}")

    params = C.ParamSet()
    while off < len(raw):
        if off + 4 > len(raw):
            raise FormatError("checkpoint: truncated parameter name length")
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        if off + 8 > len(raw):
            raise FormatError("checkpoint: truncated parameter header")
        rows, cols = struct.unpack_from("<II", raw, off)
        off += 8
        nbytes = 8 * rows * cols
        payload = raw[off:off + nbytes]
        if len(payload) != nbytes:
            raise FormatError(f"checkpoint: truncated payload for {name}")
        off += nbytes
        params.add(name, np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy())

    state = ModelState(
        dim=extras["data_dim"],
        num_total_classes=extras["data_num_total_classes"],
        num_old_classes=extras["data_num_old_classes"],
        config=config,
        params=params,
    )
    _check_shapes(state)
    return state


def _check_shapes(state: ModelState) -> None:
    d, k, m = state.dim, state.num_total_classes, state.num_old_classes
    expected = {
        "gcd.prototypes": (k, d),
        "adl.prototypes": (k, d),
        "sdl.pos": (m, state.config.sdl_dim),
        "sdl.neg": (m, state.config.sdl_dim),
    }
    for name, shape in expected.items():
        if name not in state.params:
            raise FormatError(f"checkpoint: missing parameter {name}")
        if state.params[name].shape != shape:
            raise DimensionError(
                f"checkpoint: {name} has shape {state.params[name].shape}, expected {shape}"
            )
