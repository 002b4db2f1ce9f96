"""Time-domain linear experts, frequency-interpolation experts and the bank.

All forward/backward functions accept a single ``w x C`` view or a batch
``... x w x C``; parameter gradients are summed over the batch.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .conditioning import fold_batch
from .data import validate_window_lengths
from .errors import ShapeMismatch
from .spectral import bin_count, irfft, irfft_adjoint, rfft, rfft_adjoint

logger = logging.getLogger(__name__)

Grads = Dict[str, np.ndarray]


def _sum_leading(array: np.ndarray, keep: int) -> np.ndarray:
    """Sum all but the trailing ``keep`` axes."""
    lead = array.ndim - keep
    return array.sum(axis=tuple(range(lead))) if lead > 0 else array


@dataclass
class LinearExpert:
    """``Y = W X + b`` with ``W`` shared across channels and a per-channel bias."""

    weight: np.ndarray  # H x w
    bias: np.ndarray  # H x C

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.ndim != 2:
            raise ShapeMismatch("weight and bias must be matrices")
        if self.bias.shape[0] != self.weight.shape[0]:
            raise ShapeMismatch(
                f"bias rows {self.bias.shape[0]} != horizon {self.weight.shape[0]}"
            )

    @property
    def window_length(self) -> int:
        return int(self.weight.shape[1])

    @property
    def horizon(self) -> int:
        return int(self.weight.shape[0])

    @property
    def channels(self) -> int:
        return int(self.bias.shape[1])

    @classmethod
    def init(cls, rng: np.random.Generator, window_length: int, horizon: int,
             channels: int) -> "LinearExpert":
        bound = 1.0 / np.sqrt(window_length)
        return cls(
            weight=rng.uniform(-bound, bound, size=(horizon, window_length)),
            bias=np.zeros((horizon, channels)),
        )

    def parameters(self) -> Dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}


@dataclass
class FreqExpert:
    """Frequency interpolation expert.

    rfft of the view, one complex linear layer (kept as real/imag blocks)
    from ``K_in`` to ``K_out`` bins, inverse rfft to ``w + H`` samples scaled
    by ``(w + H) / w``; the last ``H`` samples are the forecast.
    """

    weight_re: np.ndarray  # K_out x K_in
    weight_im: np.ndarray
    bias_re: np.ndarray  # K_out
    bias_im: np.ndarray
    window_length: int
    horizon: int

    def __post_init__(self):
        expected_out = bin_count(self.window_length + self.horizon)
        if self.weight_re.shape != self.weight_im.shape:
            raise ShapeMismatch("real and imaginary weights differ in shape")
        if self.weight_re.shape[0] != expected_out:
            raise ShapeMismatch(
                f"complex layer has {self.weight_re.shape[0]} output bins, expected {expected_out}"
            )
        if self.weight_re.shape[1] > bin_count(self.window_length):
            raise ShapeMismatch(
                f"complex layer reads {self.weight_re.shape[1]} bins, "
                f"window {self.window_length} only has {bin_count(self.window_length)}"
            )
        if self.bias_re.shape != (expected_out,) or self.bias_im.shape != (expected_out,):
            raise ShapeMismatch(f"biases must have {expected_out} entries")

    @property
    def input_bins(self) -> int:
        return int(self.weight_re.shape[1])

    @property
    def output_bins(self) -> int:
        return int(self.weight_re.shape[0])

    @property
    def output_length(self) -> int:
        return self.window_length + self.horizon

    @property
    def scale(self) -> float:
        return self.output_length / self.window_length

    @staticmethod
    def continuation_map(window_length: int, horizon: int,
                         input_bins: Optional[int] = None) -> np.ndarray:
        """Frequency-matched identity: input bin k feeds output bin round(k (w+H) / w)."""
        n_out = window_length + horizon
        k_in = input_bins or bin_count(window_length)
        k_out = bin_count(n_out)
        identity = np.zeros((k_out, k_in))
        for k in range(k_in):
            target = int(np.floor(k * n_out / window_length + 0.5))
            if target < k_out:
                identity[target, k] = 1.0
        return identity

    @classmethod
    def init(cls, rng: np.random.Generator, window_length: int, horizon: int,
             cutoff_bins: Optional[int] = None, noise: float = 1e-3) -> "FreqExpert":
        k_in = bin_count(window_length)
        if cutoff_bins is not None:
            k_in = max(1, min(int(cutoff_bins), k_in))
        identity = cls.continuation_map(window_length, horizon, k_in)
        k_out = identity.shape[0]
        return cls(
            weight_re=identity + rng.uniform(-noise, noise, size=identity.shape),
            weight_im=rng.uniform(-noise, noise, size=identity.shape),
            bias_re=np.zeros(k_out),
            bias_im=np.zeros(k_out),
            window_length=window_length,
            horizon=horizon,
        )

    def parameters(self) -> Dict[str, np.ndarray]:
        return {
            "weight_re": self.weight_re,
            "weight_im": self.weight_im,
            "bias_re": self.bias_re,
            "bias_im": self.bias_im,
        }

    def _input_spectrum(self, view: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        spectrum = rfft(view, axis=-2)[..., :self.input_bins, :]
        return spectrum.real, spectrum.imag


Expert = Union[LinearExpert, FreqExpert]


def _check_view(expert: Expert, view: np.ndarray) -> np.ndarray:
    view = np.asarray(view, dtype=np.float64)
    if view.ndim < 2 or view.shape[-2] != expert.window_length:
        raise ShapeMismatch(
            f"view has shape {view.shape}, expert expects {expert.window_length} rows"
        )
    if isinstance(expert, LinearExpert) and view.shape[-1] != expert.channels:
        raise ShapeMismatch(
            f"view has {view.shape[-1]} channels, bias has {expert.channels}"
        )
    return view


def linear_forward(expert: LinearExpert, view: np.ndarray) -> np.ndarray:
    view = _check_view(expert, view)
    return np.einsum("hw,...wc->...hc", expert.weight, view) + expert.bias


def freq_forward(expert: FreqExpert, view: np.ndarray, H: Optional[int] = None) -> np.ndarray:
    view = _check_view(expert, view)
    if H is not None and H != expert.horizon:
        raise ShapeMismatch(f"expert was built for H={expert.horizon}, asked for {H}")
    s_re, s_im = expert._input_spectrum(view)
    wr, wi = expert.weight_re, expert.weight_im
    t_re = (np.einsum("ok,...kc->...oc", wr, s_re)
            - np.einsum("ok,...kc->...oc", wi, s_im)
            + expert.bias_re[:, None])
    t_im = (np.einsum("ok,...kc->...oc", wr, s_im)
            + np.einsum("ok,...kc->...oc", wi, s_re)
            + expert.bias_im[:, None])
    full = irfft(t_re + 1j * t_im, expert.output_length, axis=-2) * expert.scale
    return full[..., expert.window_length:, :]


def expert_forward(expert: Expert, view: np.ndarray) -> np.ndarray:
    if isinstance(expert, FreqExpert):
        return freq_forward(expert, view)
    return linear_forward(expert, view)


def expert_backward(expert: Expert, view: np.ndarray,
                    upstream_grad: np.ndarray) -> Tuple[Grads, np.ndarray]:
    """Gradients of the expert parameters and of its input view.

    Returns:
        Tuple[Grads, np.ndarray]: (parameter gradients by name, view gradient)
    """
    view = _check_view(expert, view)
    grad = np.asarray(upstream_grad, dtype=np.float64)
    if grad.shape[-2] != expert.horizon or grad.shape[-1] != view.shape[-1]:
        raise ShapeMismatch(
            f"upstream gradient {grad.shape} does not match H={expert.horizon}, C={view.shape[-1]}"
        )

    if isinstance(expert, LinearExpert):
        grads = {
            "weight": np.einsum("nhc,nwc->hw", fold_batch(grad, 2), fold_batch(view, 2)),
            "bias": _sum_leading(grad, 2),
        }
        return grads, np.einsum("hw,...hc->...wc", expert.weight, grad)

    s_re, s_im = expert._input_spectrum(view)
    full = np.zeros(grad.shape[:-2] + (expert.output_length, grad.shape[-1]))
    full[..., expert.window_length:, :] = grad * expert.scale
    g_t = irfft_adjoint(full, axis=-2)
    g_re, g_im = g_t.real, g_t.imag
    wr, wi = expert.weight_re, expert.weight_im

    fg_re, fg_im = fold_batch(g_re, 2), fold_batch(g_im, 2)
    fs_re, fs_im = fold_batch(s_re, 2), fold_batch(s_im, 2)
    grads = {
        "weight_re": (np.einsum("noc,nkc->ok", fg_re, fs_re)
                      + np.einsum("noc,nkc->ok", fg_im, fs_im)),
        "weight_im": (np.einsum("noc,nkc->ok", fg_im, fs_re)
                      - np.einsum("noc,nkc->ok", fg_re, fs_im)),
        "bias_re": _sum_leading(g_re, 2).sum(axis=-1),
        "bias_im": _sum_leading(g_im, 2).sum(axis=-1),
    }
    gs_re = np.einsum("ok,...oc->...kc", wr, g_re) + np.einsum("ok,...oc->...kc", wi, g_im)
    gs_im = np.einsum("ok,...oc->...kc", wr, g_im) - np.einsum("ok,...oc->...kc", wi, g_re)

    n_bins = bin_count(expert.window_length)
    spectrum_grad = np.zeros(gs_re.shape[:-2] + (n_bins, gs_re.shape[-1]), dtype=np.complex128)
    spectrum_grad[..., :expert.input_bins, :] = gs_re + 1j * gs_im
    return grads, rfft_adjoint(spectrum_grad, expert.window_length, axis=-2)


@dataclass
class ExpertBank:
    """M homogeneous experts with non-increasing window lengths."""

    experts: List[Expert]
    domain: str = "time"

    def __post_init__(self):
        if not self.experts:
            raise ValueError("an expert bank needs at least one expert")
        kind = FreqExpert if self.domain == "frequency" else LinearExpert
        if self.domain not in ("time", "frequency"):
            raise ValueError(f"unknown expert domain '{self.domain}'")
        if any(not isinstance(e, kind) for e in self.experts):
            raise ValueError(f"all experts must be {kind.__name__} for domain '{self.domain}'")
        horizons = {e.horizon for e in self.experts}
        if len(horizons) != 1:
            raise ShapeMismatch(f"experts disagree on the horizon: {sorted(horizons)}")
        validate_window_lengths(self.window_lengths[0], self.window_lengths)

    @property
    def window_lengths(self) -> List[int]:
        return [e.window_length for e in self.experts]

    @property
    def horizon(self) -> int:
        return self.experts[0].horizon

    def __len__(self) -> int:
        return len(self.experts)

    @classmethod
    def init(cls, rng: np.random.Generator, window_lengths: Sequence[int], horizon: int,
             channels: int, domain: str = "time",
             cutoff_bins: Optional[int] = None) -> "ExpertBank":
        if domain == "frequency":
            experts: List[Expert] = [
                FreqExpert.init(rng, w, horizon, cutoff_bins) for w in window_lengths
            ]
        else:
            experts = [LinearExpert.init(rng, w, horizon, channels) for w in window_lengths]
        return cls(experts=experts, domain=domain)

    def parameters(self) -> Dict[str, np.ndarray]:
        params = {}
        for m, expert in enumerate(self.experts):
            for name, value in expert.parameters().items():
                params[f"experts.{m}.{name}"] = value
        return params


def bank_forward(bank: ExpertBank, views: Sequence[np.ndarray],
                 H: Optional[int] = None) -> List[np.ndarray]:
    if len(views) != len(bank):
        raise ShapeMismatch(f"{len(views)} views for {len(bank)} experts")
    if H is not None and H != bank.horizon:
        raise ShapeMismatch(f"bank was built for H={bank.horizon}, asked for {H}")
    return [expert_forward(e, v) for e, v in zip(bank.experts, views)]
