"""Trajectory serialization: meters -> discrete tokens and back.

Coordinates in [-R, R] quantize into N_t uniform bins; a serialized
trajectory is [BOS, x_1, y_1, ..., x_n, y_n, EOS] with x/y sharing one
vocabulary. Decoding returns bin centers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TokenVocab:
    n_tokens: int = 1200

    def __post_init__(self):
        if self.n_tokens < 2:
            raise ValueError("need at least two positional tokens")

    @property
    def bos(self) -> int:
        return self.n_tokens

    @property
    def eos(self) -> int:
        return self.n_tokens + 1

    @property
    def size(self) -> int:
        return self.n_tokens + 2


def serialize_coord(p: float, half_range: float, n_tokens: int) -> int:
    """Quantize one coordinate; out-of-range values clamp to the edge bins."""
    if not math.isfinite(p):
        raise ValueError("cannot serialize a non-finite coordinate")
    if half_range <= 0 or n_tokens < 2:
        raise ValueError("invalid serialization parameters")
    token = math.floor((p + half_range) / (2.0 * half_range) * n_tokens)
    return min(max(token, 0), n_tokens - 1)


def deserialize_token(token: int, half_range: float, n_tokens: int) -> float:
    """Token -> coordinate at the bin center."""
    if not 0 <= token < n_tokens:
        raise ValueError(f"token {token} is not positional (N_t={n_tokens})")
    return (token + 0.5) / n_tokens * 2.0 * half_range - half_range


def serialize_trajectory(
    points, vocab: TokenVocab, half_x: float, half_y: float
) -> list[int]:
    """Waypoints (ego frame) -> [BOS, Ser(x_1), Ser(y_1), ..., EOS]."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("cannot serialize an empty trajectory")
    seq = [vocab.bos]
    for x, y in pts:
        seq.append(serialize_coord(x, half_x, vocab.n_tokens))
        seq.append(serialize_coord(y, half_y, vocab.n_tokens))
    seq.append(vocab.eos)
    return seq


def deserialize_sequence(
    tokens, vocab: TokenVocab, half_x: float, half_y: float
) -> tuple[np.ndarray, bool]:
    """Tolerant inverse of serialize_trajectory.

    Consumes interior tokens pairwise; stops at EOS, any non-positional token,
    or an unpaired trailing token. Returns (waypoints (N, 2), clean) where
    clean is True only for a well-formed BOS ... EOS sequence.
    """
    seq = list(tokens)
    clean = bool(seq) and seq[0] == vocab.bos
    body = seq[1:] if clean else seq
    points = []
    i = 0
    ended = False
    while i < len(body):
        t = body[i]
        if t == vocab.eos:
            ended = i == len(body) - 1
            break
        if t >= vocab.n_tokens or i + 1 >= len(body):
            break  # stray special token or unpaired coordinate
        t2 = body[i + 1]
        if t2 >= vocab.n_tokens:
            break
        points.append(
            (
                deserialize_token(t, half_x, vocab.n_tokens),
                deserialize_token(t2, half_y, vocab.n_tokens),
            )
        )
        i += 2
    clean = clean and ended
    return np.array(points, dtype=float).reshape(-1, 2), clean
