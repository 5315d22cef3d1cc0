"""Post-LN transformer encoder over [CLS]-prefixed token ids, with exact gradients.

Parameters live in a flat ``dict[str, np.ndarray]`` so optimizers and the
checkpoint writer can treat them uniformly. The batched functions
:func:`forward_batch` / :func:`backward_batch` are what training uses; the
single-sequence :func:`forward` / :func:`backward` wrap them.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import kernels
from .text import CLS_ID, TokenSequence


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    max_len: int = 64
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128
    dropout_rate: float = 0.1
    layer_norm_eps: float = 1e-12
    seed: int = 0
    # hidden sizes of each per-class MLP in the multi-way head
    head_sizes: tuple[int, int] = (256, 64)

    def __post_init__(self):
        object.__setattr__(self, "head_sizes", tuple(int(h) for h in self.head_sizes))
        for name in ("vocab_size", "max_len", "d_model", "n_heads", "n_layers", "d_ff"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.max_len < 2:
            raise ConfigError("max_len must be >= 2")
        if self.vocab_size <= CLS_ID:
            raise ConfigError("vocab_size must cover the reserved ids")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must be in [0, 1)")
        if not self.layer_norm_eps > 0:
            raise ConfigError("layer_norm_eps must be positive")
        if len(self.head_sizes) != 2 or min(self.head_sizes) <= 0:
            raise ConfigError("head_sizes must be two positive integers")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_json(self) -> dict:
        out = asdict(self)
        out["head_sizes"] = list(self.head_sizes)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**obj)


def glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[-2], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def layer_names(i: int) -> dict[str, str]:
    keys = ("wq", "wk", "wv", "wo", "ln1_g", "ln1_b", "w1", "b1", "w2", "b2", "ln2_g", "ln2_b")
    return {k: f"layers.{i}.{k}" for k in keys}


def init_parameters(config: ModelConfig, rng: np.random.Generator | None = None) -> dict[str, np.ndarray]:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    d, f = config.d_model, config.d_ff
    params = {
        "tok_emb": glorot(rng, (config.vocab_size, d)),
        "pos_emb": glorot(rng, (config.max_len, d)),
    }
    for i in range(config.n_layers):
        n = layer_names(i)
        for k in ("wq", "wk", "wv", "wo"):
            params[n[k]] = glorot(rng, (d, d))
        params[n["ln1_g"]] = np.ones(d)
        params[n["ln1_b"]] = np.zeros(d)
        params[n["w1"]] = glorot(rng, (d, f))
        params[n["b1"]] = np.zeros(f)
        params[n["w2"]] = glorot(rng, (f, d))
        params[n["b2"]] = np.zeros(d)
        params[n["ln2_g"]] = np.ones(d)
        params[n["ln2_b"]] = np.zeros(d)
    return params


def _dropout_mask(rng, shape, rate):
    if rate == 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


@dataclass
class ForwardCache:
    ids: np.ndarray
    mask: np.ndarray
    emb_drop: np.ndarray | None
    layers: list[dict] = field(default_factory=list)


def forward_batch(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    ids: np.ndarray,
    mask: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Encode ``ids[B, L]`` into hidden states ``[B, L, d_model]``."""
    ids = np.asarray(ids)
    mask = np.asarray(mask, dtype=np.int8)
    if ids.ndim != 2 or ids.shape != mask.shape:
        raise ValueError(f"ids/mask must be matching [B, L] arrays, got {ids.shape} and {mask.shape}")
    bsz, seq_len = ids.shape
    if seq_len > config.max_len:
        raise ValueError(f"sequence length {seq_len} exceeds max_len {config.max_len}")
    if ids.size and (ids.min() < 0 or ids.max() >= config.vocab_size):
        raise ValueError(f"token id out of range for vocab_size {config.vocab_size}")
    if bsz and not mask[:, 0].all():
        raise ValueError("position 0 ([CLS]) must be unmasked")
    rate = config.dropout_rate if training else 0.0
    if rate and rng is None:
        raise ValueError("training with dropout needs an rng")

    d, nh, dh = config.d_model, config.n_heads, config.head_dim
    x = params["tok_emb"][ids] + params["pos_emb"][:seq_len]
    emb_drop = _dropout_mask(rng, x.shape, rate)
    if emb_drop is not None:
        x = x * emb_drop
    cache = ForwardCache(ids, mask, emb_drop)
    scale = 1.0 / math.sqrt(dh)

    for i in range(config.n_layers):
        n = layer_names(i)
        c: dict = {"x": x}
        q = (x @ params[n["wq"]]).reshape(bsz, seq_len, nh, dh).transpose(0, 2, 1, 3)
        k = (x @ params[n["wk"]]).reshape(bsz, seq_len, nh, dh).transpose(0, 2, 1, 3)
        v = (x @ params[n["wv"]]).reshape(bsz, seq_len, nh, dh).transpose(0, 2, 1, 3)
        scores = (q @ k.transpose(0, 1, 3, 2)) * scale
        probs = kernels.masked_softmax_forward(
            scores.reshape(bsz, nh * seq_len, seq_len), mask
        ).reshape(bsz, nh, seq_len, seq_len)
        ctx = (probs @ v).transpose(0, 2, 1, 3).reshape(bsz, seq_len, d)
        attn = ctx @ params[n["wo"]]
        c.update(q=q, k=k, v=v, probs=probs, ctx=ctx)
        c["attn_drop"] = _dropout_mask(rng, attn.shape, rate)
        if c["attn_drop"] is not None:
            attn = attn * c["attn_drop"]

        y1, xhat1, rstd1 = kernels.layernorm_forward(
            (x + attn).reshape(-1, d), params[n["ln1_g"]], params[n["ln1_b"]], config.layer_norm_eps
        )
        y1 = y1.reshape(bsz, seq_len, d)
        hpre = y1 @ params[n["w1"]] + params[n["b1"]]
        hact = kernels.gelu_forward(hpre)
        ffn = hact @ params[n["w2"]] + params[n["b2"]]
        c.update(y1=y1, xhat1=xhat1, rstd1=rstd1, hpre=hpre, hact=hact)
        c["ffn_drop"] = _dropout_mask(rng, ffn.shape, rate)
        if c["ffn_drop"] is not None:
            ffn = ffn * c["ffn_drop"]

        y2, xhat2, rstd2 = kernels.layernorm_forward(
            (y1 + ffn).reshape(-1, d), params[n["ln2_g"]], params[n["ln2_b"]], config.layer_norm_eps
        )
        c.update(xhat2=xhat2, rstd2=rstd2)
        cache.layers.append(c)
        x = y2.reshape(bsz, seq_len, d)
    return x, cache


def backward_batch(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    cache: ForwardCache,
    d_hidden: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients of ``sum(d_hidden * hidden)`` for every encoder parameter."""
    bsz, seq_len = cache.ids.shape
    d, nh, dh = config.d_model, config.n_heads, config.head_dim
    if d_hidden.shape != (bsz, seq_len, d):
        raise ValueError(f"upstream gradient has shape {d_hidden.shape}, expected {(bsz, seq_len, d)}")
    scale = 1.0 / math.sqrt(dh)
    grads: dict[str, np.ndarray] = {}
    dx = d_hidden

    for i in reversed(range(config.n_layers)):
        n = layer_names(i)
        c = cache.layers[i]
        dz2, grads[n["ln2_g"]], grads[n["ln2_b"]] = kernels.layernorm_backward(
            dx.reshape(-1, d), c["xhat2"], c["rstd2"], params[n["ln2_g"]]
        )
        dz2 = dz2.reshape(bsz, seq_len, d)
        dffn = dz2 if c["ffn_drop"] is None else dz2 * c["ffn_drop"]
        dffn2 = dffn.reshape(-1, d)
        grads[n["w2"]] = c["hact"].reshape(-1, config.d_ff).T @ dffn2
        grads[n["b2"]] = dffn2.sum(axis=0)
        dhpre = kernels.gelu_backward(c["hpre"], dffn @ params[n["w2"]].T)
        dhpre2 = dhpre.reshape(-1, config.d_ff)
        grads[n["w1"]] = c["y1"].reshape(-1, d).T @ dhpre2
        grads[n["b1"]] = dhpre2.sum(axis=0)
        dy1 = dz2 + dhpre @ params[n["w1"]].T

        dz1, grads[n["ln1_g"]], grads[n["ln1_b"]] = kernels.layernorm_backward(
            dy1.reshape(-1, d), c["xhat1"], c["rstd1"], params[n["ln1_g"]]
        )
        dz1 = dz1.reshape(bsz, seq_len, d)
        dattn = dz1 if c["attn_drop"] is None else dz1 * c["attn_drop"]
        grads[n["wo"]] = c["ctx"].reshape(-1, d).T @ dattn.reshape(-1, d)
        dctx = (dattn @ params[n["wo"]].T).reshape(bsz, seq_len, nh, dh).transpose(0, 2, 1, 3)
        dprobs = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = c["probs"].transpose(0, 1, 3, 2) @ dctx
        dscores = kernels.softmax_backward(c["probs"], dprobs) * scale
        dq = dscores @ c["k"]
        dk = dscores.transpose(0, 1, 3, 2) @ c["q"]

        x2 = c["x"].reshape(-1, d)
        dx = dz1.copy()
        for name, dpart in (("wq", dq), ("wk", dk), ("wv", dv)):
            dpart = dpart.transpose(0, 2, 1, 3).reshape(-1, d)
            grads[n[name]] = x2.T @ dpart
            dx += (dpart @ params[n[name]].T).reshape(bsz, seq_len, d)

    if cache.emb_drop is not None:
        dx = dx * cache.emb_drop
    tok = np.zeros_like(params["tok_emb"])
    np.add.at(tok, cache.ids.ravel(), dx.reshape(-1, d))
    grads["tok_emb"] = tok
    pos = np.zeros_like(params["pos_emb"])
    pos[:seq_len] = dx.sum(axis=0)
    grads["pos_emb"] = pos
    return grads


@dataclass
class EncoderOutput:
    hidden_states: np.ndarray  # [max_len, d_model]
    cache: ForwardCache

    @property
    def cls_vector(self) -> np.ndarray:
        return self.hidden_states[0]

    def attention(self, layer: int) -> np.ndarray:
        """Attention probabilities ``[n_heads, L, L]`` of one layer."""
        return self.cache.layers[layer]["probs"][0]


def forward(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    seq: TokenSequence,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> EncoderOutput:
    hidden, cache = forward_batch(
        params, config, seq.ids[None, :], seq.attention_mask[None, :], training, rng
    )
    return EncoderOutput(hidden[0], cache)


def backward(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    output: EncoderOutput,
    upstream_grad: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradient of ``upstream_grad . cls_vector`` w.r.t. every parameter."""
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    if upstream_grad.shape != (config.d_model,):
        raise ValueError(f"upstream gradient must have shape ({config.d_model},)")
    d_hidden = np.zeros((1,) + output.hidden_states.shape)
    d_hidden[0, 0] = upstream_grad
    return backward_batch(params, config, output.cache, d_hidden)
