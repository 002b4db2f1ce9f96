"""FiLM generators, FiLM application and the lightweight 1-D convolutions.

Tensors carry the forecast on axis ``-2`` (H) and variates on axis ``-1``
(C). A leading batch shape ``...`` is allowed everywhere.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch

Grads = Dict[str, np.ndarray]

BRANCHES = ("static", "dynamic")
TARGETS = ("gamma", "beta")
KERNEL_SIZES = (1, 3, 5, 7, 9)


def sum_to_shape(array: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to ``shape``."""
    extra = array.ndim - len(shape)
    if extra > 0:
        array = array.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and array.shape[i] != 1)
    if axes:
        array = array.sum(axis=axes, keepdims=True)
    return array


def fold_batch(array: np.ndarray, core: int) -> np.ndarray:
    """Collapse every leading axis into one, keeping the trailing ``core`` axes.

    An unbatched array gains a batch axis of length 1.
    """
    array = np.asarray(array)
    return array.reshape((-1,) + array.shape[array.ndim - core:])


@dataclass
class FilmGenerator:
    """``Linear^t o Linear^c``: maps an ``L x d_llm`` embedding to ``H x C``."""

    channel_map: np.ndarray  # d_llm x C
    channel_bias: np.ndarray  # C
    time_map: np.ndarray  # L x H
    time_bias: np.ndarray  # H
    branch: str = "static"
    target: str = "gamma"

    def __post_init__(self):
        if self.branch not in BRANCHES:
            raise ValueError(f"branch must be one of {BRANCHES}, got '{self.branch}'")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got '{self.target}'")
        if self.channel_map.ndim != 2 or self.time_map.ndim != 2:
            raise ShapeMismatch("channel_map and time_map must be matrices")
        if self.channel_bias.shape != (self.channel_map.shape[1],):
            raise ShapeMismatch(
                f"channel_bias shape {self.channel_bias.shape}, expected ({self.channels},)"
            )
        if self.time_bias.shape != (self.time_map.shape[1],):
            raise ShapeMismatch(
                f"time_bias shape {self.time_bias.shape}, expected ({self.horizon},)"
            )

    @property
    def d_llm(self) -> int:
        return int(self.channel_map.shape[0])

    @property
    def channels(self) -> int:
        return int(self.channel_map.shape[1])

    @property
    def tokens(self) -> int:
        return int(self.time_map.shape[0])

    @property
    def horizon(self) -> int:
        return int(self.time_map.shape[1])

    @classmethod
    def init(cls, rng: np.random.Generator, d_llm: int, channels: int, tokens: int,
             horizon: int, branch: str, target: str, scale: float = 1e-2) -> "FilmGenerator":
        """Near-identity start: gamma generators emit ~1, beta generators ~0."""
        return cls(
            channel_map=rng.uniform(-scale, scale, size=(d_llm, channels)),
            channel_bias=np.zeros(channels),
            time_map=rng.uniform(-scale, scale, size=(tokens, horizon)),
            time_bias=np.full(horizon, 1.0 if target == "gamma" else 0.0),
            branch=branch,
            target=target,
        )

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            "channel_map": self.channel_map,
            "channel_bias": self.channel_bias,
            "time_map": self.time_map,
            "time_bias": self.time_bias,
        }

    def check_embedding(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        if z.ndim < 2 or z.shape[-2:] != (self.tokens, self.d_llm):
            raise ShapeMismatch(
                f"{self.branch} embedding has shape {z.shape}, generator expects "
                f"L={self.tokens} x d_llm={self.d_llm}"
            )
        return z


def generator_forward(gen: FilmGenerator, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Returns the generator output (``... x H x C``) and the token/channel map ``U``."""
    z = gen.check_embedding(z)
    u = z @ gen.channel_map + gen.channel_bias
    out = np.einsum("lh,...lc->...hc", gen.time_map, u) + gen.time_bias[:, None]
    return out, u


def generator_backward(gen: FilmGenerator, z: np.ndarray, u: np.ndarray,
                       upstream: np.ndarray) -> Grads:
    """Parameter gradients of one generator; the embedding gets none."""
    z = gen.check_embedding(z)
    upstream = sum_to_shape(upstream, u.shape[:-2] + (gen.horizon, gen.channels))
    grad_u = np.einsum("lh,...hc->...lc", gen.time_map, upstream)
    z = np.broadcast_to(z, grad_u.shape[:-2] + z.shape[-2:])
    return {
        "channel_map": np.einsum("nld,nlc->dc", fold_batch(z, 2), fold_batch(grad_u, 2)),
        "channel_bias": grad_u.reshape(-1, gen.channels).sum(axis=0),
        "time_map": np.einsum("nlc,nhc->lh", fold_batch(u, 2), fold_batch(upstream, 2)),
        "time_bias": upstream.reshape(-1, gen.horizon, gen.channels).sum(axis=(0, 2)),
    }


def film_params(gen_gamma: FilmGenerator, gen_beta: FilmGenerator,
                z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Modulation tensors (gamma, beta), each ``H x C`` (or batched)."""
    gamma, _ = generator_forward(gen_gamma, z)
    beta, _ = generator_forward(gen_beta, z)
    return gamma, beta


def film_apply(gamma: np.ndarray, beta: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``gamma * y + beta`` elementwise; gamma and beta may broadcast over a batch."""
    y = np.asarray(y, dtype=np.float64)
    for name, tensor in (("gamma", gamma), ("beta", beta)):
        if np.shape(tensor)[-2:] != y.shape[-2:]:
            raise ShapeMismatch(f"{name} shape {np.shape(tensor)} does not match Y {y.shape}")
    return gamma * y + beta


def film_apply_backward(gamma: np.ndarray, y: np.ndarray,
                        upstream: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d gamma, d beta, d y); modulation grads keep the batch axes."""
    return upstream * y, upstream, upstream * gamma


@dataclass
class Conv1d:
    """Same-length 1-D convolution along H, shared across variates.

    Input layout is ``... x in_channels x H x C``.
    """

    kernels: np.ndarray  # out x in x k
    bias: np.ndarray  # out

    def __post_init__(self):
        if self.kernels.ndim != 3:
            raise ShapeMismatch("kernels must be out x in x k")
        if self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {self.kernel_size}")
        if self.bias.shape != (self.out_channels,):
            raise ShapeMismatch(f"bias must have {self.out_channels} entries")

    @property
    def out_channels(self) -> int:
        return int(self.kernels.shape[0])

    @property
    def in_channels(self) -> int:
        return int(self.kernels.shape[1])

    @property
    def kernel_size(self) -> int:
        return int(self.kernels.shape[2])

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2

    @classmethod
    def init(cls, rng: np.random.Generator, in_channels: int, out_channels: int = 1,
             kernel_size: int = 3, scale: float = 1e-2) -> "Conv1d":
        """Averaging center tap plus small noise."""
        if kernel_size not in KERNEL_SIZES:
            raise ValueError(f"kernel size must be one of {KERNEL_SIZES}, got {kernel_size}")
        kernels = rng.uniform(-scale, scale, size=(out_channels, in_channels, kernel_size))
        kernels[:, :, kernel_size // 2] += 1.0 / in_channels
        return cls(kernels=kernels, bias=np.zeros(out_channels))

    @classmethod
    def identity(cls, in_channels: int = 1, kernel_size: int = 1) -> "Conv1d":
        kernels = np.zeros((1, in_channels, kernel_size))
        kernels[0, :, kernel_size // 2] = 1.0 / in_channels
        return cls(kernels=kernels, bias=np.zeros(1))

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"kernels": self.kernels, "bias": self.bias}

    def _windows(self, stack: np.ndarray) -> np.ndarray:
        pad = [(0, 0)] * stack.ndim
        pad[-2] = (self.padding, self.padding)
        padded = np.pad(stack, pad)
        # (..., in, H, C, k)
        return sliding_window_view(padded, self.kernel_size, axis=-2)


def _check_stack(conv: Conv1d, stack: np.ndarray) -> np.ndarray:
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim < 3 or stack.shape[-3] != conv.in_channels:
        raise ShapeMismatch(
            f"stack has shape {stack.shape}, conv expects {conv.in_channels} input channels"
        )
    return stack


def conv1d_forward(conv: Conv1d, stack: np.ndarray) -> np.ndarray:
    stack = _check_stack(conv, stack)
    out = np.einsum("oij,...ihcj->...ohc", conv.kernels, conv._windows(stack))
    return out + conv.bias[:, None, None]


def conv1d_backward(conv: Conv1d, stack: np.ndarray,
                    upstream: np.ndarray) -> Tuple[Grads, np.ndarray]:
    """Returns (parameter gradients, gradient of the input stack)."""
    stack = _check_stack(conv, stack)
    upstream = np.asarray(upstream, dtype=np.float64)
    expected = stack.shape[:-3] + (conv.out_channels,) + stack.shape[-2:]
    if upstream.shape != expected:
        raise ShapeMismatch(f"upstream gradient {upstream.shape}, expected {expected}")

    grads = {
        "kernels": np.einsum(
            "nohc,nihcj->oij", fold_batch(upstream, 3), fold_batch(conv._windows(stack), 4)
        ),
        "bias": upstream.reshape(-1, conv.out_channels, *upstream.shape[-2:]).sum(axis=(0, 2, 3)),
    }
    H = stack.shape[-2]
    p = conv.padding
    padded_shape = list(stack.shape)
    padded_shape[-2] = H + 2 * p
    grad_padded = np.zeros(padded_shape)
    for j in range(conv.kernel_size):
        grad_padded[..., j:j + H, :] += np.einsum("oi,...ohc->...ihc", conv.kernels[:, :, j], upstream)
    return grads, grad_padded[..., p:p + H, :]
