"""The SDEIN network: encoder, task heads, opinion attention, message passing."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import numerics as nx
from .corpus import AE_INDEX, AE_TAGS, AS_TAGS, EncodedSentence, Vocabulary
from .graph import DependencyGraph, RelationVocabulary
from .numerics import Tensor

ENCODERS = ("cnn", "gcn", "dregcn", "dregcn+cnn")
PASSING_MODES = ("none", "predictions", "representations")
OPINION_COLUMNS = [AE_INDEX["BP"], AE_INDEX["IP"]]

# ablation grid, rows 0-5
ABLATIONS = {
    0: {"encoder": "cnn", "message_passing": "none", "opinion_passing": False},
    1: {"encoder": "gcn", "message_passing": "none", "opinion_passing": False},
    2: {"encoder": "dregcn+cnn", "message_passing": "none", "opinion_passing": False},
    3: {"encoder": "dregcn+cnn", "message_passing": "none", "opinion_passing": True},
    4: {"encoder": "dregcn+cnn", "message_passing": "predictions", "opinion_passing": True},
    5: {"encoder": "dregcn+cnn", "message_passing": "representations", "opinion_passing": True},
}


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    hidden_size: int = 256
    relation_size: int = 50
    rounds: int = 2
    cnn_windows: tuple = (3, 5)
    gcn_layers: int = 2
    encoder: str = "dregcn+cnn"
    message_passing: str = "representations"
    opinion_passing: bool = True
    domain_embeddings: bool = True
    general_dim: int = 300
    domain_dim: int = 100
    embedding_dropout: float = 0.5
    shared_dropout: float = 0.3
    adjacency_norm: str = "none"
    inverse_relations: str = "distinct"
    precision: str = "standard"

    def __post_init__(self):
        self.cnn_windows = tuple(int(w) for w in self.cnn_windows)
        for key in ("hidden_size", "relation_size", "rounds", "general_dim"):
            if getattr(self, key) < 1:
                raise ModelError(f"{key} must be positive, got {getattr(self, key)}")
        if self.domain_embeddings and self.domain_dim < 1:
            raise ModelError(f"domain_dim must be positive, got {self.domain_dim}")
        if self.encoder not in ENCODERS:
            raise ModelError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.message_passing not in PASSING_MODES:
            raise ModelError(f"message_passing must be one of {PASSING_MODES}, got {self.message_passing!r}")
        if self.adjacency_norm not in ("none", "row"):
            raise ModelError(f"adjacency_norm must be 'none' or 'row', got {self.adjacency_norm!r}")
        if self.precision not in ("standard", "verification"):
            raise ModelError(f"precision must be 'standard' or 'verification', got {self.precision!r}")
        if self.uses_cnn:
            if not self.cnn_windows:
                raise ModelError("CNN encoder needs at least one window")
            if any(w % 2 == 0 or w < 1 for w in self.cnn_windows):
                raise ModelError(f"CNN windows must be odd, got {self.cnn_windows}")
        if self.uses_graph and self.gcn_layers < 1:
            raise ModelError("graph encoder needs at least one layer")

    @property
    def uses_cnn(self) -> bool:
        return "cnn" in self.encoder

    @property
    def uses_graph(self) -> bool:
        return self.encoder != "cnn"

    @property
    def dtype(self):
        return nx.VERIFICATION if self.precision == "verification" else nx.STANDARD

    @property
    def embedding_dim(self) -> int:
        return self.general_dim + (self.domain_dim if self.domain_embeddings else 0)

    @classmethod
    def ablation(cls, row: int, **overrides) -> "ModelConfig":
        return cls(**{**ABLATIONS[row], **overrides})

    def to_dict(self) -> dict:
        out = asdict(self)
        out["cnn_windows"] = list(self.cnn_windows)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in known})


@dataclass
class ModelState:
    config: ModelConfig
    params: dict[str, Tensor]
    vocab: Vocabulary
    relations: RelationVocabulary

    def named_parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def copy(self) -> "ModelState":
        params = {k: nx.parameter(p.data.copy(), name=k, dtype=p.dtype) for k, p in self.params.items()}
        return ModelState(self.config, params, self.vocab, self.relations)


@dataclass
class ForwardTrace:
    h_s: list = field(default_factory=list)
    h_ae: list = field(default_factory=list)
    h_as: list = field(default_factory=list)
    y_ae: list = field(default_factory=list)
    y_as: list = field(default_factory=list)
    scores: list = field(default_factory=list)
    attention: list = field(default_factory=list)
    opinion_mass: list = field(default_factory=list)
    context: list = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.y_ae)

    @property
    def final_ae(self) -> Tensor:
        return self.y_ae[-1]

    @property
    def final_as(self) -> Tensor:
        return self.y_as[-1]


# -- construction --------------------------------------------------------

def init_state(config: ModelConfig, vocab: Vocabulary, relations: RelationVocabulary,
               rng: np.random.Generator, general: np.ndarray | None = None,
               domain: np.ndarray | None = None) -> ModelState:
    """Allocate every parameter: Glorot-uniform matrices, zero biases."""
    dt = config.dtype
    d, m = config.hidden_size, config.relation_size
    params: dict[str, np.ndarray] = {}

    def weight(name, out_dim, in_dim):
        params[name] = nx.glorot_uniform(rng, (out_dim, in_dim), in_dim, out_dim, dt)

    def bias(name, size):
        params[name] = np.zeros(size, dtype=dt)

    def table(name, given, dim):
        if given is None:
            given = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
        given = np.array(given, dtype=dt)
        if given.shape != (len(vocab), dim):
            raise ModelError(f"{name} has shape {given.shape}, expected {(len(vocab), dim)}")
        given[0] = 0.0
        params[name] = given

    table("emb_general", general, config.general_dim)
    if config.domain_embeddings:
        table("emb_domain", domain, config.domain_dim)

    width = config.embedding_dim
    if config.uses_cnn:
        for i, w in enumerate(config.cnn_windows):
            params[f"cnn{i}.kernel"] = nx.glorot_uniform(rng, (w, width, d), w * width, d, dt)
            bias(f"cnn{i}.bias", d)
            width = d
    if config.encoder == "gcn":
        for i in range(config.gcn_layers):
            weight(f"gcn{i}.W", d, width)
            bias(f"gcn{i}.b", d)
            width = d
    elif config.uses_graph:
        params["relations"] = nx.glorot_uniform(rng, (len(relations), m), len(relations), m, dt)
        for i in range(config.gcn_layers):
            weight(f"dregcn{i}.W", d, width + m)
            bias(f"dregcn{i}.b", d)
            width = d
    weight("proj.W", d, width)
    bias("proj.b", d)
    weight("ae_hidden.W", d, d)
    bias("ae_hidden.b", d)
    weight("ae_out.W", len(AE_TAGS), d)
    bias("ae_out.b", len(AE_TAGS))
    weight("as_hidden.W", d, d)
    bias("as_hidden.b", d)
    weight("as_out.W", len(AS_TAGS), 2 * d)
    bias("as_out.b", len(AS_TAGS))
    weight("attention.W", d, d)
    if config.message_passing != "none":
        weight("reencode.W", d, reencode_width(config))
        bias("reencode.b", d)
    return ModelState(config, {k: nx.parameter(v, name=k, dtype=dt) for k, v in params.items()}, vocab, relations)


def reencode_width(config: ModelConfig) -> int:
    d = config.hidden_size
    if config.message_passing == "representations":
        return 3 * d
    return d + len(AE_TAGS) + len(AS_TAGS)


# -- layers --------------------------------------------------------------

def affine(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    out = nx.matmul(x, W.T)
    return out if b is None else out + b


def vanilla_gcn_layer(h: Tensor, adjacency: np.ndarray, W: Tensor, b: Tensor, norm: str = "none") -> Tensor:
    """``h'_i = ReLU(sum_j A_ij (W h_j + b))``."""
    A = np.asarray(adjacency, dtype=h.dtype)
    if norm == "row":
        A = A / A.sum(axis=1, keepdims=True)
    return nx.relu(nx.matmul(nx.Tensor(A), affine(h, W, b)))


def dregcn_layer(h: Tensor, graph: DependencyGraph, R: Tensor, W: Tensor, b: Tensor,
                 norm: str = "none") -> Tensor:
    """Relation-typed graph convolution.

    ``h'_i = ReLU(sum_j sum_k Q_ijk (W [h_j ; R[k]] + b))``, evaluated as one
    message per ``(i, j, k)`` edge followed by a scatter-sum onto ``i``.
    """
    edges = graph.edges
    if edges.size and edges[:, 2].max() >= R.shape[0]:
        raise ModelError(f"relation index {int(edges[:, 2].max())} outside table of {R.shape[0]} rows")
    if h.shape[0] != graph.n:
        raise ModelError(f"graph has {graph.n} nodes but features have {h.shape[0]} rows")
    messages = affine(nx.concat([h[edges[:, 1]], R[edges[:, 2]]], axis=1), W, b)
    scatter = np.zeros((graph.n, len(edges)), dtype=h.dtype)
    scatter[edges[:, 0], np.arange(len(edges))] = 1.0
    if norm == "row":
        scatter /= scatter.sum(axis=1, keepdims=True)
    return nx.relu(nx.matmul(nx.Tensor(scatter), messages))


def embed(state: ModelState, tokens: np.ndarray, rng=None) -> Tensor:
    p = state.params
    parts = [p["emb_general"][tokens]]
    if state.config.domain_embeddings:
        parts.append(p["emb_domain"][tokens])
    x = nx.concat(parts, axis=1) if len(parts) > 1 else parts[0]
    return nx.dropout(x, state.config.embedding_dropout, rng)


def encode(state: ModelState, encoded: EncodedSentence, graph: DependencyGraph, rng=None) -> Tensor:
    """Shared representation ``h^s(0)`` (n x d)."""
    cfg, p = state.config, state.params
    if graph.n != encoded.n:
        raise ModelError(f"graph has {graph.n} nodes, sentence has {encoded.n} tokens")
    h = embed(state, encoded.tokens, rng)
    if cfg.uses_cnn:
        for i in range(len(cfg.cnn_windows)):
            h = nx.relu(nx.conv1d(h, p[f"cnn{i}.kernel"]) + p[f"cnn{i}.bias"])
    if cfg.encoder == "gcn":
        for i in range(cfg.gcn_layers):
            h = vanilla_gcn_layer(h, graph.A, p[f"gcn{i}.W"], p[f"gcn{i}.b"], cfg.adjacency_norm)
    elif cfg.uses_graph:
        for i in range(cfg.gcn_layers):
            h = dregcn_layer(h, graph, p["relations"], p[f"dregcn{i}.W"], p[f"dregcn{i}.b"], cfg.adjacency_norm)
    return affine(h, p["proj.W"], p["proj.b"])


def task_heads(h_s: Tensor, state: ModelState) -> tuple[Tensor, Tensor, Tensor]:
    p = state.params
    h_ae = nx.relu(affine(h_s, p["ae_hidden.W"], p["ae_hidden.b"]))
    y_ae = nx.softmax_rows(affine(h_ae, p["ae_out.W"], p["ae_out.b"]))
    h_as = nx.relu(affine(h_s, p["as_hidden.W"], p["as_hidden.b"]))
    return h_ae, y_ae, h_as


def distance_factors(n: int, dtype=np.float64) -> np.ndarray:
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :]).astype(dtype)
    out = np.zeros((n, n), dtype=dtype)
    off = gap > 0
    out[off] = 1.0 / gap[off]
    return out


def opinion_attention(h_as: Tensor, y_ae: Tensor, state: ModelState, enabled: bool = True):
    """Opinion-weighted context attention for the sentiment task.

    Returns ``(S, M, P_op, h_ctx, y_as)``. ``S`` holds ``-inf`` on its
    diagonal so ``M`` gives each token zero weight on itself. A disabled
    module, or a one-token sentence, yields a zero context vector.
    """
    p = state.params
    n, d = h_as.shape
    dt = h_as.dtype
    p_op = y_ae[:, OPINION_COLUMNS].sum(axis=1)
    if enabled and n > 1:
        relevance = nx.matmul(nx.matmul(h_as, p["attention.W"]), h_as.T)
        mask = np.zeros((n, n), dtype=dt)
        np.fill_diagonal(mask, -np.inf)
        S = relevance * nx.Tensor(distance_factors(n, dt)) * p_op + nx.Tensor(mask)
        M = nx.softmax_rows(S)
        h_ctx = nx.matmul(M, h_as)
    else:
        S = M = None
        if enabled:
            S = nx.Tensor(np.full((1, 1), -np.inf, dtype=dt))
            M = nx.Tensor(np.zeros((1, 1), dtype=dt))
        h_ctx = nx.Tensor(np.zeros((n, d), dtype=dt))
    y_as = nx.softmax_rows(affine(nx.concat([h_as, h_ctx], axis=1), p["as_out.W"], p["as_out.b"]))
    return S, M, p_op, h_ctx, y_as


def message_pass(h_s: Tensor, h_ae: Tensor, h_as: Tensor, y_ae: Tensor, y_as: Tensor,
                 state: ModelState, mode: str) -> Tensor:
    if mode == "none":
        return h_s
    p = state.params
    if mode == "representations":
        parts = [h_s, h_ae, h_as]
    elif mode == "predictions":
        parts = [h_s, y_ae, y_as]
    else:
        raise ModelError(f"unknown message passing mode {mode!r}")
    joined = nx.concat(parts, axis=1)
    if joined.shape[1] != p["reencode.W"].shape[1]:
        raise ModelError(f"re-encoder expects {p['reencode.W'].shape[1]} columns, got {joined.shape[1]}")
    return nx.relu(affine(joined, p["reencode.W"], p["reencode.b"]))


def forward(state: ModelState, encoded: EncodedSentence, graph: DependencyGraph, rng=None) -> ForwardTrace:
    """Run the encoder once, then rounds ``0..T`` of heads and attention.

    ``rng`` enables dropout (training mode); ``None`` is deterministic
    inference.
    """
    cfg = state.config
    trace = ForwardTrace()
    h_s = encode(state, encoded, graph, rng)
    for t in range(cfg.rounds + 1):
        trace.h_s.append(h_s)
        h_in = nx.dropout(h_s, cfg.shared_dropout, rng)
        h_ae, y_ae, h_as = task_heads(h_in, state)
        S, M, p_op, h_ctx, y_as = opinion_attention(h_as, y_ae, state, cfg.opinion_passing)
        trace.h_ae.append(h_ae)
        trace.h_as.append(h_as)
        trace.y_ae.append(y_ae)
        trace.y_as.append(y_as)
        trace.scores.append(S)
        trace.attention.append(M)
        trace.opinion_mass.append(p_op)
        trace.context.append(h_ctx)
        if t < cfg.rounds:
            h_s = message_pass(h_s, h_ae, h_as, y_ae, y_as, state, cfg.message_passing)
    return trace


# -- checkpoints ---------------------------------------------------------

MAGIC = b"SDEINCKP"
FORMAT_VERSION = 1


def save_checkpoint(state: ModelState, path, meta: dict | None = None) -> None:
    """Write a self-describing little-endian checkpoint.

    Layout: 8-byte magic, uint32 version, uint64 header length, UTF-8 JSON
    header (sorted keys), then each parameter's raw values in header order.
    """
    entries = []
    blobs = []
    offset = 0
    for name in sorted(state.params):
        arr = state.params[name].data
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": le.dtype.str,
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": "sdein-checkpoint",
        "version": FORMAT_VERSION,
        "endianness": "little",
        "config": state.config.to_dict(),
        "vocab": state.vocab.itos,
        "relations": state.relations.to_dict(),
        "params": entries,
        "meta": meta or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(head)))
        fh.write(head)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> tuple[ModelState, dict]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ModelError(f"{path}: not an SDEIN checkpoint")
    version, head_len = struct.unpack("<IQ", data[8:20])
    if version != FORMAT_VERSION:
        raise ModelError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(data[20:20 + head_len].decode("utf-8"))
    body = data[20 + head_len:]
    config = ModelConfig.from_dict(header["config"])
    params = {}
    for entry in header["params"]:
        raw = body[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        params[entry["name"]] = nx.parameter(arr.astype(config.dtype), name=entry["name"], dtype=config.dtype)
    state = ModelState(config, params, Vocabulary(header["vocab"]),
                       RelationVocabulary.from_dict(header["relations"]))
    return state, header.get("meta", {})
