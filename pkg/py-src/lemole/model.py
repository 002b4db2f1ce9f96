"""The full LeMoLE network: expert bank, FiLM branches and convolutional fusion."""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .conditioning import (
    BRANCHES,
    Conv1d,
    FilmGenerator,
    conv1d_backward,
    conv1d_forward,
    film_apply,
    film_apply_backward,
    generator_backward,
    generator_forward,
)
from .data import expert_views
from .errors import ShapeMismatch
from .experts import ExpertBank, bank_forward, expert_backward

logger = logging.getLogger(__name__)

AGGREGATE = "aggregate"
PER_EXPERT = "per_expert"
CONDITIONING_MODES = (AGGREGATE, PER_EXPERT)

Embedding = Union[np.ndarray, Sequence[np.ndarray]]


@dataclass(frozen=True)
class ModelHyper:
    T: int
    H: int
    C: int
    M: int
    d_llm: int
    L_S: int
    L_D: int
    kernel_size: int = 3

    def to_dict(self) -> Dict[str, int]:
        return {
            "T": self.T, "H": self.H, "C": self.C, "M": self.M, "d_llm": self.d_llm,
            "L_S": self.L_S, "L_D": self.L_D, "kernel_size": self.kernel_size,
        }


@dataclass
class LemoleModel:
    """Parameters of one LeMoLE forecaster.

    ``generators`` is keyed ``"<branch>.<gamma|beta>"`` and only holds the
    kept branches. In aggregate mode ``final_conv`` reads ``[Y; Y'_S; Y'_D]``;
    in per-expert mode it reads the M conditioned expert outputs and there
    is no ``agg_conv``.
    """

    bank: ExpertBank
    generators: Dict[str, FilmGenerator]
    final_conv: Conv1d
    hyper: ModelHyper
    agg_conv: Optional[Conv1d] = None
    conditioning_mode: str = AGGREGATE
    branches: Tuple[str, ...] = BRANCHES

    def __post_init__(self):
        self.branches = tuple(b for b in BRANCHES if b in self.branches)
        if self.conditioning_mode not in CONDITIONING_MODES:
            raise ValueError(f"unknown conditioning mode '{self.conditioning_mode}'")
        expected = {f"{b}.{t}" for b in self.branches for t in ("gamma", "beta")}
        if set(self.generators) != expected:
            raise ShapeMismatch(
                f"generators {sorted(self.generators)} do not match branches {self.branches}"
            )
        h = self.hyper
        if len(self.bank) != h.M or self.bank.horizon != h.H:
            raise ShapeMismatch("expert bank does not match hyper-parameters")
        for name, gen in self.generators.items():
            tokens = h.L_S if gen.branch == "static" else h.L_D
            if (gen.d_llm, gen.channels, gen.tokens, gen.horizon) != (h.d_llm, h.C, tokens, h.H):
                raise ShapeMismatch(f"generator {name} does not match hyper-parameters")
        if self.conditioning_mode == AGGREGATE:
            if self.agg_conv is None or self.agg_conv.in_channels != h.M:
                raise ShapeMismatch(f"aggregate mode needs an agg_conv with {h.M} inputs")
        elif self.agg_conv is not None:
            raise ShapeMismatch("per-expert mode has no agg_conv")
        if self.final_conv.in_channels != self.fusion_channels:
            raise ShapeMismatch(
                f"final_conv reads {self.final_conv.in_channels} channels, "
                f"expected {self.fusion_channels}"
            )

    @property
    def fusion_channels(self) -> int:
        if self.conditioning_mode == PER_EXPERT:
            return self.hyper.M
        return 1 + len(self.branches)

    @property
    def domain(self) -> str:
        return self.bank.domain

    def parameters(self) -> Dict[str, np.ndarray]:
        """Live parameter arrays by dotted name, in a fixed order."""
        params = dict(self.bank.parameters())
        if self.agg_conv is not None:
            params.update({f"agg_conv.{k}": v for k, v in self.agg_conv.parameters().items()})
        for key in sorted(self.generators):
            for name, value in self.generators[key].parameters().items():
                params[f"film.{key}.{name}"] = value
        params.update({f"final_conv.{k}": v for k, v in self.final_conv.parameters().items()})
        return params


def build_model(rng: np.random.Generator, hyper: ModelHyper, window_lengths: Sequence[int],
                domain: str = "time", conditioning_mode: str = AGGREGATE,
                branches: Sequence[str] = BRANCHES,
                cutoff_bins: Optional[int] = None) -> LemoleModel:
    """Freshly initialized model; draw order is fixed so a seed pins every tensor."""
    if hyper.M < 1 or len(window_lengths) != hyper.M:
        raise ValueError(f"need M >= 1 window lengths, got {list(window_lengths)}")
    bank = ExpertBank.init(rng, window_lengths, hyper.H, hyper.C, domain, cutoff_bins)
    branches = tuple(b for b in BRANCHES if b in branches)
    agg_conv = None
    if conditioning_mode == AGGREGATE:
        agg_conv = Conv1d.init(rng, hyper.M, 1, hyper.kernel_size)
        fusion = 1 + len(branches)
    else:
        fusion = hyper.M
    generators = {}
    for branch in branches:
        tokens = hyper.L_S if branch == "static" else hyper.L_D
        for target in ("gamma", "beta"):
            generators[f"{branch}.{target}"] = FilmGenerator.init(
                rng, hyper.d_llm, hyper.C, tokens, hyper.H, branch, target
            )
    final_conv = Conv1d.init(rng, fusion, 1, hyper.kernel_size)
    return LemoleModel(
        bank=bank,
        generators=generators,
        final_conv=final_conv,
        hyper=hyper,
        agg_conv=agg_conv,
        conditioning_mode=conditioning_mode,
        branches=branches,
    )


def count_params(model: LemoleModel) -> int:
    return int(sum(p.size for p in model.parameters().values()))


def count_params_formula(hyper: ModelHyper, window_lengths: Sequence[int],
                         domain: str = "time", conditioning_mode: str = AGGREGATE,
                         branches: Sequence[str] = BRANCHES,
                         cutoff_bins: Optional[int] = None) -> int:
    """Closed-form parameter count from shapes alone."""
    H, C, k = hyper.H, hyper.C, hyper.kernel_size
    total = 0
    for w in window_lengths:
        if domain == "frequency":
            k_in = w // 2 + 1
            if cutoff_bins is not None:
                k_in = max(1, min(int(cutoff_bins), k_in))
            k_out = (w + H) // 2 + 1
            total += 2 * k_out * k_in + 2 * k_out
        else:
            total += H * w + H * C
    kept = [b for b in BRANCHES if b in branches]
    for branch in kept:
        tokens = hyper.L_S if branch == "static" else hyper.L_D
        total += 2 * (hyper.d_llm * C + C + tokens * H + H)
    if conditioning_mode == AGGREGATE:
        total += len(window_lengths) * k + 1
        total += (1 + len(kept)) * k + 1
    else:
        total += len(window_lengths) * k + 1
    return total


@dataclass
class FilmTrace:
    z: np.ndarray
    u_gamma: np.ndarray
    u_beta: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    inputs: np.ndarray


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass, kept for the backward pass."""

    views: List[np.ndarray]
    expert_outputs: List[np.ndarray]
    expert_stack: np.ndarray
    aggregated: Optional[np.ndarray] = None
    film: Dict[str, List[FilmTrace]] = field(default_factory=dict)
    fusion_stack: Optional[np.ndarray] = None


def _run_film(model: LemoleModel, branch: str, z: np.ndarray, y: np.ndarray) -> FilmTrace:
    gamma, u_gamma = generator_forward(model.generators[f"{branch}.gamma"], z)
    beta, u_beta = generator_forward(model.generators[f"{branch}.beta"], z)
    return FilmTrace(z=z, u_gamma=u_gamma, u_beta=u_beta, gamma=gamma, beta=beta, inputs=y)


def _dynamic_for_expert(z_dynamic: Embedding, m: int, M: int) -> np.ndarray:
    if isinstance(z_dynamic, np.ndarray):
        return z_dynamic
    if len(z_dynamic) != M:
        raise ShapeMismatch(f"{len(z_dynamic)} dynamic embeddings for {M} experts")
    return z_dynamic[m]


def model_forward(model: LemoleModel, lookback: np.ndarray, z_static: Optional[np.ndarray],
                  z_dynamic: Optional[Embedding]) -> Tuple[np.ndarray, ForwardTrace]:
    """Forecast ``... x H x C`` from a lookback ``... x T x C``.

    ``z_static`` is ``L_S x d_llm`` (or batched); ``z_dynamic`` is
    ``L_D x d_llm`` (or batched), or in per-expert mode optionally one
    embedding per expert. Embeddings of dropped branches are ignored.
    """
    h = model.hyper
    lookback = np.asarray(lookback, dtype=np.float64)
    if lookback.ndim < 2 or lookback.shape[-2:] != (h.T, h.C):
        raise ShapeMismatch(f"lookback has shape {lookback.shape}, expected ... x {h.T} x {h.C}")
    for branch, z in (("static", z_static), ("dynamic", z_dynamic)):
        if branch in model.branches and z is None:
            raise ShapeMismatch(f"{branch} branch needs an embedding")

    views = expert_views(lookback, model.bank.window_lengths)
    outputs = bank_forward(model.bank, views, h.H)
    stack = np.stack(outputs, axis=-3)
    trace = ForwardTrace(views=views, expert_outputs=outputs, expert_stack=stack)

    if model.conditioning_mode == AGGREGATE:
        y = conv1d_forward(model.agg_conv, stack)[..., 0, :, :]
        trace.aggregated = y
        channels = [y]
        for branch in model.branches:
            z = z_static if branch == "static" else z_dynamic
            film = _run_film(model, branch, z, y)
            trace.film[branch] = [film]
            channels.append(film_apply(film.gamma, film.beta, y))
    else:
        channels = []
        for m, y_m in enumerate(outputs):
            current = y_m
            for branch in model.branches:
                if branch == "static":
                    z = z_static
                else:
                    z = _dynamic_for_expert(z_dynamic, m, h.M)
                film = _run_film(model, branch, z, current)
                trace.film.setdefault(branch, []).append(film)
                current = film_apply(film.gamma, film.beta, current)
            channels.append(current)

    fusion = np.stack(np.broadcast_arrays(*channels), axis=-3)
    trace.fusion_stack = fusion
    prediction = conv1d_forward(model.final_conv, fusion)[..., 0, :, :]
    return prediction, trace


def _accumulate(grads: Dict[str, np.ndarray], prefix: str, part: Dict[str, np.ndarray]) -> None:
    for name, value in part.items():
        key = f"{prefix}.{name}"
        if key in grads:
            grads[key] = grads[key] + value
        else:
            grads[key] = value


def _film_backward(model: LemoleModel, branch: str, film: FilmTrace, upstream: np.ndarray,
                   grads: Dict[str, np.ndarray]) -> np.ndarray:
    grad_gamma, grad_beta, grad_y = film_apply_backward(film.gamma, film.inputs, upstream)
    for target, u, g in (("gamma", film.u_gamma, grad_gamma), ("beta", film.u_beta, grad_beta)):
        key = f"{branch}.{target}"
        part = generator_backward(model.generators[key], film.z, u, g)
        _accumulate(grads, f"film.{key}", part)
    return grad_y


def model_backward(model: LemoleModel, trace: ForwardTrace,
                   upstream: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients for every tensor in ``model.parameters()``, summed over the batch."""
    upstream = np.asarray(upstream, dtype=np.float64)
    expected = trace.fusion_stack.shape[:-3] + trace.fusion_stack.shape[-2:]
    if upstream.shape != expected:
        raise ShapeMismatch(f"upstream gradient {upstream.shape}, expected {expected}")

    grads: Dict[str, np.ndarray] = {}
    final_grads, grad_fusion = conv1d_backward(
        model.final_conv, trace.fusion_stack, upstream[..., None, :, :]
    )
    _accumulate(grads, "final_conv", final_grads)

    if model.conditioning_mode == AGGREGATE:
        grad_y = grad_fusion[..., 0, :, :]
        for i, branch in enumerate(model.branches, start=1):
            film = trace.film[branch][0]
            grad_y = grad_y + _film_backward(model, branch, film, grad_fusion[..., i, :, :], grads)
        agg_grads, grad_stack = conv1d_backward(
            model.agg_conv, trace.expert_stack, grad_y[..., None, :, :]
        )
        _accumulate(grads, "agg_conv", agg_grads)
        expert_grads = [grad_stack[..., m, :, :] for m in range(len(model.bank))]
    else:
        expert_grads = []
        for m in range(len(model.bank)):
            grad = grad_fusion[..., m, :, :]
            for branch in reversed(model.branches):
                grad = _film_backward(model, branch, trace.film[branch][m], grad, grads)
            expert_grads.append(grad)

    for m, (expert, view, grad) in enumerate(zip(model.bank.experts, trace.views, expert_grads)):
        part, _ = expert_backward(expert, view, grad)
        _accumulate(grads, f"experts.{m}", part)

    params = model.parameters()
    missing = set(params) - set(grads)
    if missing:
        raise ShapeMismatch(f"no gradient produced for {sorted(missing)}")
    return {name: np.asarray(grads[name]).reshape(params[name].shape) for name in params}
