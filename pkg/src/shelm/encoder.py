"""Frozen history-compression encoders.

CachedTransformerEncoder compresses a token stream one step at a time:
each step appends the new positions' per-layer hidden states to a bounded
memory cache and attends over cache plus new positions with relative
position encodings. Because positions enter attention only through their
distance, feeding a sequence step by step with the cache reproduces a full
forward pass over the whole window (the cache-equivalence property the
tests pin down).

LstmEncoder is the recurrent drop-in used by the ablation that swaps the
transformer out.

Both encoders are weight-frozen: parameters are generated from the config
seed, gradients are disabled, and a weight hash lets training loops assert
nothing moved. Computation runs in float64 so step-vs-full comparisons are
limited by algorithm, not accumulation order.

Checkpoint format "SENC" (little-endian): magic, version u16=1, kind u8
(0=cached_transformer, 1=lstm), layers u16, heads u16, model_dim u32,
ff_dim u32, memory_len u32, input_dim u32, seed u64, param_count u64,
flat f32 payload (named_parameters order, row-major), u64 checksum of the
payload bytes mod 2**64.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ArgumentError, CorruptionError, FormatError, StorageError

KIND_TRANSFORMER = "cached_transformer"
KIND_LSTM = "lstm"
_KIND_CODES = {KIND_TRANSFORMER: 0, KIND_LSTM: 1}
_KIND_NAMES = {v: k for k, v in _KIND_CODES.items()}

SENC_MAGIC = b"SENC"
SENC_VERSION = 1


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 2
    heads: int = 2
    model_dim: int = 64
    ff_dim: int = 128
    memory_len: int = 64
    seed: int = 0
    kind: str = KIND_TRANSFORMER
    input_dim: int | None = None  # defaults to model_dim (identity adapter)

    def __post_init__(self):
        for name in ("layers", "heads", "model_dim", "ff_dim", "memory_len"):
            if getattr(self, name) <= 0:
                raise ArgumentError(f"{name} must be positive, got {getattr(self, name)}")
        if self.model_dim % self.heads != 0:
            raise ArgumentError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}"
            )
        if self.kind not in _KIND_CODES:
            raise ArgumentError(f"unknown encoder kind {self.kind!r}")
        if self.input_dim is not None and self.input_dim <= 0:
            raise ArgumentError("input_dim must be positive")
        if self.input_dim == self.model_dim:
            object.__setattr__(self, "input_dim", None)

    @property
    def effective_input_dim(self) -> int:
        return self.model_dim if self.input_dim is None else self.input_dim


@dataclass(frozen=True)
class MemoryCache:
    """Per-layer cached hidden states, each [length, model_dim] float64."""

    layers: tuple[torch.Tensor, ...]

    @property
    def current_length(self) -> int:
        return int(self.layers[0].shape[0])


@dataclass(frozen=True)
class LstmState:
    hidden: torch.Tensor  # [layers, model_dim]
    cell: torch.Tensor  # [layers, model_dim]


def _seeded_generator(seed: int) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(int(seed) % (2**62))
    return g


def _init_linear(linear: nn.Linear, gen: torch.Generator) -> None:
    fan_in, fan_out = linear.in_features, linear.out_features
    std = math.sqrt(2.0 / (fan_in + fan_out))
    with torch.no_grad():
        linear.weight.normal_(0.0, std, generator=gen)
        if linear.bias is not None:
            linear.bias.zero_()


class _RelativeAttentionLayer(nn.Module):
    """Pre-norm causal attention over [cache, current] with distance encodings."""

    def __init__(self, d: int, heads: int, ff: int):
        super().__init__()
        self.d, self.heads, self.dh = d, heads, d // heads
        kw = {"dtype": torch.float64}
        self.norm_attn = nn.LayerNorm(d, **kw)
        self.q_proj = nn.Linear(d, d, bias=False, **kw)
        self.k_proj = nn.Linear(d, d, bias=False, **kw)
        self.v_proj = nn.Linear(d, d, bias=False, **kw)
        self.r_proj = nn.Linear(d, d, bias=False, **kw)
        self.out_proj = nn.Linear(d, d, bias=False, **kw)
        self.content_bias = nn.Parameter(torch.zeros(heads, self.dh, **kw))
        self.position_bias = nn.Parameter(torch.zeros(heads, self.dh, **kw))
        self.norm_ff = nn.LayerNorm(d, **kw)
        self.ff_in = nn.Linear(d, ff, **kw)
        self.ff_out = nn.Linear(ff, d, **kw)

    def init_weights(self, gen: torch.Generator) -> None:
        for lin in (self.q_proj, self.k_proj, self.v_proj, self.r_proj,
                    self.out_proj, self.ff_in, self.ff_out):
            _init_linear(lin, gen)
        with torch.no_grad():
            self.content_bias.normal_(0.0, 0.1, generator=gen)
            self.position_bias.normal_(0.0, 0.1, generator=gen)

    def forward(self, h: torch.Tensor, mem: torch.Tensor, rel: torch.Tensor) -> torch.Tensor:
        # h: [q, d] new positions, mem: [m, d] cached inputs to this layer,
        # rel: [max_dist + 1, d] sinusoidal distance table
        q_len, m_len = h.shape[0], mem.shape[0]
        full = torch.cat([mem, h], dim=0) if m_len else h

        zq = self.norm_attn(h)
        zkv = self.norm_attn(full)
        qh = self.q_proj(zq).view(q_len, self.heads, self.dh)
        kh = self.k_proj(zkv).view(m_len + q_len, self.heads, self.dh)
        vh = self.v_proj(zkv).view(m_len + q_len, self.heads, self.dh)

        # dist[i, j] = global position of query i minus global position of key j
        dist = (m_len + torch.arange(q_len))[:, None] - torch.arange(m_len + q_len)[None, :]
        causal = dist >= 0
        rh = self.r_proj(rel).view(-1, self.heads, self.dh)
        r_gather = rh[dist.clamp(min=0)]  # [q, k, heads, dh]

        content = torch.einsum("qhd,khd->qkh", qh + self.content_bias, kh)
        position = torch.einsum("qhd,qkhd->qkh", qh + self.position_bias, r_gather)
        scores = (content + position) / math.sqrt(self.dh)
        scores = scores.masked_fill(~causal[:, :, None], float("-inf"))
        attn = torch.softmax(scores, dim=1)
        mixed = torch.einsum("qkh,khd->qhd", attn, vh).reshape(q_len, self.d)

        h = h + self.out_proj(mixed)
        h = h + self.ff_out(torch.relu(self.ff_in(self.norm_ff(h))))
        return h


class CachedTransformerEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        if config.kind != KIND_TRANSFORMER:
            raise ArgumentError(f"config kind is {config.kind!r}")
        super().__init__()
        self.config = config
        d = config.model_dim
        gen = _seeded_generator(config.seed)
        if config.effective_input_dim != d:
            self.adapter = nn.Linear(config.effective_input_dim, d, bias=False,
                                     dtype=torch.float64)
            _init_linear(self.adapter, gen)
        else:
            self.adapter = None
        self.blocks = nn.ModuleList(
            [_RelativeAttentionLayer(d, config.heads, config.ff_dim)
             for _ in range(config.layers)]
        )
        for block in self.blocks:
            block.init_weights(gen)
        self.requires_grad_(False)
        self.eval()
        self._rel_table = self._build_rel_table(config.memory_len + 8)

    def _build_rel_table(self, max_dist: int) -> torch.Tensor:
        d = self.config.model_dim
        pos = torch.arange(max_dist + 1, dtype=torch.float64)[:, None]
        idx = torch.arange(0, d, 2, dtype=torch.float64)[None, :]
        angle = pos / torch.pow(10000.0, idx / d)
        table = torch.zeros(max_dist + 1, d, dtype=torch.float64)
        table[:, 0::2] = torch.sin(angle)
        table[:, 1::2] = torch.cos(angle)
        return table

    def _rel(self, needed: int) -> torch.Tensor:
        if needed >= self._rel_table.shape[0]:
            self._rel_table = self._build_rel_table(needed + 8)
        return self._rel_table

    def reset_cache(self) -> MemoryCache:
        d = self.config.model_dim
        empty = tuple(torch.zeros(0, d, dtype=torch.float64) for _ in self.blocks)
        return MemoryCache(layers=empty)

    def _check_inputs(self, inputs) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(inputs), dtype=torch.float64)
        if x.ndim == 1:
            x = x[None, :]
        want = self.config.effective_input_dim
        if x.ndim != 2 or x.shape[1] != want or x.shape[0] < 1:
            raise ArgumentError(
                f"inputs must be [k, {want}], got shape {tuple(x.shape)}"
            )
        if not torch.isfinite(x).all():
            raise ArgumentError("encoder inputs have non-finite entries")
        return x

    @torch.no_grad()
    def encode_step(self, cache: MemoryCache, inputs) -> tuple[np.ndarray, MemoryCache]:
        """Compress the new step's inputs against the cache.

        Returns the final-layer output at the last input position and a new
        cache holding this step's per-layer states (oldest evicted beyond
        memory_len). The passed-in cache is never mutated.
        """
        if len(cache.layers) != len(self.blocks):
            raise ArgumentError("cache does not match this encoder's layer count")
        h = self._check_inputs(inputs)
        if self.adapter is not None:
            h = self.adapter(h)
        mem_len = self.config.memory_len
        rel = self._rel(cache.current_length + h.shape[0])
        new_layers = []
        for block, mem in zip(self.blocks, cache.layers):
            new_layers.append(torch.cat([mem, h], dim=0)[-mem_len:])
            h = block(h, mem, rel)
        out = h[-1].numpy().copy()
        return out, MemoryCache(layers=tuple(new_layers))

    @torch.no_grad()
    def forward_positions(self, inputs) -> np.ndarray:
        """Full-window forward: final-layer outputs at every position ([T, d]).

        This is the reference computation the cached stepwise path must
        reproduce for sequences up to memory_len.
        """
        h = self._check_inputs(inputs)
        if self.adapter is not None:
            h = self.adapter(h)
        rel = self._rel(h.shape[0])
        empty = torch.zeros(0, self.config.model_dim, dtype=torch.float64)
        for block in self.blocks:
            h = block(h, empty, rel)
        return h.numpy().copy()

    def weight_hash(self) -> str:
        return _hash_parameters(self)


class LstmEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        if config.kind != KIND_LSTM:
            raise ArgumentError(f"config kind is {config.kind!r}")
        super().__init__()
        self.config = config
        d = config.model_dim
        gen = _seeded_generator(config.seed)
        if config.effective_input_dim != d:
            self.adapter = nn.Linear(config.effective_input_dim, d, bias=False,
                                     dtype=torch.float64)
            _init_linear(self.adapter, gen)
        else:
            self.adapter = None
        self.lstm = nn.LSTM(d, d, num_layers=config.layers, dtype=torch.float64)
        bound = 1.0 / math.sqrt(d)
        with torch.no_grad():
            for p in self.lstm.parameters():
                p.uniform_(-bound, bound, generator=gen)
        self.requires_grad_(False)
        self.eval()

    def initial_state(self) -> LstmState:
        shape = (self.config.layers, self.config.model_dim)
        return LstmState(hidden=torch.zeros(*shape, dtype=torch.float64),
                         cell=torch.zeros(*shape, dtype=torch.float64))

    def _check_inputs(self, inputs) -> torch.Tensor:
        x = torch.as_tensor(np.asarray(inputs), dtype=torch.float64)
        if x.ndim == 1:
            x = x[None, :]
        want = self.config.effective_input_dim
        if x.ndim != 2 or x.shape[1] != want or x.shape[0] < 1:
            raise ArgumentError(f"inputs must be [k, {want}], got shape {tuple(x.shape)}")
        if not torch.isfinite(x).all():
            raise ArgumentError("encoder inputs have non-finite entries")
        return x

    @torch.no_grad()
    def step(self, state: LstmState, inputs) -> tuple[np.ndarray, LstmState]:
        """Feed this step's inputs through the recurrence; output at last input."""
        x = self._check_inputs(inputs)
        if self.adapter is not None:
            x = self.adapter(x)
        h0 = state.hidden[:, None, :].contiguous()
        c0 = state.cell[:, None, :].contiguous()
        out, (hn, cn) = self.lstm(x[:, None, :], (h0, c0))
        new_state = LstmState(hidden=hn[:, 0, :].clone(), cell=cn[:, 0, :].clone())
        return out[-1, 0].numpy().copy(), new_state

    @torch.no_grad()
    def unrolled(self, inputs) -> np.ndarray:
        """Whole-sequence forward, the oracle for stepwise equivalence ([T, d])."""
        x = self._check_inputs(inputs)
        if self.adapter is not None:
            x = self.adapter(x)
        out, _ = self.lstm(x[:, None, :])
        return out[:, 0, :].numpy().copy()

    def weight_hash(self) -> str:
        return _hash_parameters(self)


Encoder = CachedTransformerEncoder | LstmEncoder


def make_encoder(config: EncoderConfig) -> Encoder:
    """Deterministically build the frozen encoder the config describes."""
    if config.kind == KIND_TRANSFORMER:
        return CachedTransformerEncoder(config)
    return LstmEncoder(config)


def reset_cache(config: EncoderConfig) -> MemoryCache:
    """Empty cache for an encoder of this geometry (episode boundary)."""
    empty = tuple(
        torch.zeros(0, config.model_dim, dtype=torch.float64) for _ in range(config.layers)
    )
    return MemoryCache(layers=empty)


def _hash_parameters(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, p in module.named_parameters():
        h.update(name.encode())
        h.update(p.detach().numpy().tobytes())
    return h.hexdigest()


def save_encoder(enc: Encoder, path: str | Path) -> None:
    cfg = enc.config
    header = SENC_MAGIC + struct.pack(
        "<HBHHIIIIQ",
        SENC_VERSION,
        _KIND_CODES[cfg.kind],
        cfg.layers,
        cfg.heads,
        cfg.model_dim,
        cfg.ff_dim,
        cfg.memory_len,
        cfg.effective_input_dim,
        int(cfg.seed) % (2**64),
    )
    flat = np.concatenate(
        [p.detach().numpy().astype("<f4").ravel() for _, p in enc.named_parameters()]
    )
    payload = flat.tobytes()
    checksum = int(np.frombuffer(payload, dtype=np.uint8).sum(dtype=np.uint64)) & ((1 << 64) - 1)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(struct.pack("<Q", flat.size))
            f.write(payload)
            f.write(struct.pack("<Q", checksum))
    except OSError as e:
        raise StorageError(f"cannot write encoder checkpoint to {path}: {e}") from e


def load_encoder(path: str | Path) -> Encoder:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read encoder checkpoint from {path}: {e}") from e
    head_fmt = "<HBHHIIIIQ"
    head_size = 4 + struct.calcsize(head_fmt)
    if len(data) < head_size + 16 or data[:4] != SENC_MAGIC:
        raise FormatError(f"{path}: not a SENC checkpoint")
    version, kind_code, layers, heads, model_dim, ff_dim, memory_len, input_dim, seed = (
        struct.unpack(head_fmt, data[4:head_size])
    )
    if version != SENC_VERSION:
        raise FormatError(f"{path}: unsupported SENC version {version} "
                          f"(supported: {SENC_VERSION})")
    if kind_code not in _KIND_NAMES:
        raise FormatError(f"{path}: unknown encoder kind code {kind_code}")
    (count,) = struct.unpack("<Q", data[head_size:head_size + 8])
    body_start = head_size + 8
    body_end = body_start + count * 4
    if len(data) < body_end + 8:
        raise CorruptionError(f"{path}: truncated weight payload")
    payload = data[body_start:body_end]
    (stored_sum,) = struct.unpack("<Q", data[body_end:body_end + 8])
    actual = int(np.frombuffer(payload, dtype=np.uint8).sum(dtype=np.uint64)) & ((1 << 64) - 1)
    if stored_sum != actual:
        raise CorruptionError(f"{path}: weight checksum mismatch")

    config = EncoderConfig(
        layers=layers, heads=heads, model_dim=model_dim, ff_dim=ff_dim,
        memory_len=memory_len, seed=seed, kind=_KIND_NAMES[kind_code],
        input_dim=input_dim,
    )
    enc = make_encoder(config)
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    expected = sum(p.numel() for _, p in enc.named_parameters())
    if flat.size != expected:
        raise CorruptionError(
            f"{path}: payload has {flat.size} weights, config needs {expected}"
        )
    offset = 0
    with torch.no_grad():
        for _, p in enc.named_parameters():
            n = p.numel()
            p.copy_(torch.from_numpy(flat[offset:offset + n].reshape(p.shape).copy()))
            offset += n
    enc.requires_grad_(False)
    return enc
