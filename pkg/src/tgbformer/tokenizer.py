"""Frame features to token features, plus 2-D sinusoidal positional features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor, as_tensor, matmul, reshape, swap_last

TEMPERATURE = 10000.0


@dataclass(frozen=True)
class TokenFrame:
    """Tokens of one frame (M x D) and the matching positional features."""

    tokens: Tensor
    positions: Tensor

    def __post_init__(self):
        if self.tokens.ndim != 2 or self.tokens.shape != self.positions.shape:
            raise DimensionError(
                f"tokens {list(self.tokens.shape)} and positions {list(self.positions.shape)} must both be M x D")

    @property
    def num_tokens(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    def embedded(self) -> Tensor:
        """Token plus positional features, the input to both branches."""
        return self.tokens + self.positions


def tokenize(frame, proj=None) -> Tensor:
    """Flatten a c x h x w feature map into M = h*w tokens.

    Token ``y*w + x`` is the channel vector at spatial position (y, x),
    right-multiplied by ``proj`` (c x D) when one is given.
    """
    frame = as_tensor(frame)
    if frame.ndim != 3 or min(frame.shape) < 1:
        raise DimensionError(f"frame must be c x h x w with all sizes >= 1, got {list(frame.shape)}")
    c, h, w = frame.shape
    tokens = swap_last(reshape(frame, (c, h * w)))
    if proj is None:
        return tokens
    proj = as_tensor(proj)
    if proj.ndim != 2 or proj.shape[0] != c:
        raise DimensionError(f"projection must be {c} x D, got {list(proj.shape)}")
    return matmul(tokens, proj)


def detokenize(tokens, h: int, w: int) -> Tensor:
    """Inverse of :func:`tokenize` without projection."""
    tokens = as_tensor(tokens)
    if tokens.ndim != 2 or tokens.shape[0] != h * w:
        raise DimensionError(f"{list(tokens.shape)} tokens do not tile a {h}x{w} grid")
    return reshape(swap_last(tokens), (tokens.shape[1], h, w))


def _axis_encoding(coords: np.ndarray, width: int) -> np.ndarray:
    # pairs (sin, cos) share the frequency index i // 2
    i = np.arange(width)
    freq = TEMPERATURE ** (2.0 * (i // 2) / width)
    angles = coords[:, None] / freq[None, :]
    enc = np.empty_like(angles)
    enc[:, 0::2] = np.sin(angles[:, 0::2])
    enc[:, 1::2] = np.cos(angles[:, 1::2])
    return enc


def positional_encoding(h: int, w: int, dim: int) -> Tensor:
    """DETR-style sine encoding for an h x w grid, one row per token.

    The first ``dim/2`` channels encode the row coordinate y and the last
    ``dim/2`` the column x; coordinates are 0-based and unnormalized.
    """
    if h < 1 or w < 1:
        raise ConfigError(f"grid must be at least 1x1, got {h}x{w}", field="h" if h < 1 else "w")
    if dim < 4 or dim % 4:
        raise ConfigError(f"positional dimension must be a positive multiple of 4, got {dim}", field="D")
    half = dim // 2
    ys, xs = np.divmod(np.arange(h * w), w)
    pos = np.concatenate([_axis_encoding(ys.astype(float), half),
                          _axis_encoding(xs.astype(float), half)], axis=1)
    return Tensor(pos)


def token_frames(frames, proj=None) -> list[TokenFrame]:
    """Tokenize a stack of frames (N x c x h x w) and attach shared positions."""
    frames = as_tensor(frames)
    if frames.ndim != 4:
        raise DimensionError(f"frames must be N x c x h x w, got {list(frames.shape)}")
    _, c, h, w = frames.shape
    dim = c if proj is None else as_tensor(proj).shape[-1]
    positions = positional_encoding(h, w, dim)
    return [TokenFrame(tokenize(frames[n], proj), positions) for n in range(frames.shape[0])]
