"""Visual transformation head + content features -> scoring network.

The visual vector ``x_vf`` is mapped by a head to ``x_vl`` (width
``visual_out_dim``), concatenated with the content features ``x_c`` and
scored by a one-hidden-layer network::

    x_l = [head(x_vf), x_c]
    x_s = Dense(10 -> 1)(Dropout(ReLU(Dense(x_l -> 10))))

Checkpoints (``VTM1``) are little-endian: magic, uint32 length of the
``key = value`` architecture block, the block itself, uint32 array count,
then per array a uint8 ndim, uint32 dims and float64 data.
"""

from __future__ import annotations

import io
import struct
from dataclasses import asdict, dataclass, fields

import numpy as np

from visrank import nn
from visrank.text import ContentFeatureVector

MAGIC = b"VTM1"
HEAD_KINDS = ("none", "vgg_style", "resnet_style")
DEFAULT_LEARNING_RATE = {"none": 1e-4, "vgg_style": 1e-4, "resnet_style": 5e-5}


@dataclass(frozen=True)
class ArchitectureSpec:
    head_kind: str = "none"
    input_dim: int = 0
    visual_out_dim: int = 30
    content_dim: int = 11
    scoring_hidden: int = 10
    dropout_scoring: float = 0.1
    dropout_head: float = 0.5
    head_hidden: int = 4096

    def __post_init__(self):
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"head_kind must be one of {HEAD_KINDS}, got {self.head_kind!r}")
        if self.head_kind != "none" and min(self.input_dim, self.visual_out_dim, self.head_hidden) < 1:
            raise ValueError("visual head needs positive input_dim, visual_out_dim and head_hidden")
        if self.content_dim < 0 or self.scoring_hidden < 1:
            raise ValueError("invalid content_dim or scoring_hidden")
        if self.concat_width < 1:
            raise ValueError("scoring component has no inputs")
        for rate in (self.dropout_scoring, self.dropout_head):
            if not 0 <= rate < 1:
                raise ValueError("dropout rates must be in [0, 1)")

    @property
    def concat_width(self) -> int:
        if self.head_kind == "none":
            return self.content_dim
        return self.visual_out_dim + self.content_dim

    def head_widths(self) -> list[int]:
        if self.head_kind == "none":
            return []
        n_hidden = 2 if self.head_kind == "vgg_style" else 3
        return [self.input_dim] + [self.head_hidden] * n_hidden + [self.visual_out_dim]

    def dense_shapes(self) -> list[tuple[int, int]]:
        widths = self.head_widths()
        shapes = list(zip(widths[:-1], widths[1:]))
        return shapes + [(self.concat_width, self.scoring_hidden), (self.scoring_hidden, 1)]

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "ArchitectureSpec":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for line in text.splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, _, value = (s.strip() for s in line.partition("="))
            if key not in types:
                raise ValueError(f"unknown architecture key {key!r}")
            kind = types[key]
            kwargs[key] = value if kind == "str" else (float(value) if kind == "float" else int(value))
        return cls(**kwargs)


@dataclass(frozen=True)
class ScoredDocument:
    query_id: str
    doc_id: str
    score: float


class RankingNetwork:
    def __init__(self, spec: ArchitectureSpec, head: list, scorer: list):
        self.spec = spec
        self.head = head
        self.scorer = scorer

    def params(self) -> list[np.ndarray]:
        return nn.params(self.head) + nn.params(self.scorer)

    def weights(self) -> list[np.ndarray]:
        """Weight matrices only; biases are excluded from the L2 penalty."""
        return [layer.weights for layer in self.head + self.scorer if isinstance(layer, nn.Dense)]

    def forward(self, x_vf, x_c, train=False, rng=None):
        """Score a batch. Returns scores of shape (n,) and the tape."""
        x_c = np.atleast_2d(np.asarray(x_c, dtype=np.float64))
        if x_c.shape[1] != self.spec.content_dim:
            raise ValueError(
                f"dimension mismatch: expected {self.spec.content_dim} content features, got {x_c.shape[1]}"
            )
        if self.head:
            if x_vf is None:
                raise ValueError("visual vector required for a model with a visual head")
            x_vf = np.atleast_2d(np.asarray(x_vf, dtype=np.float64))
            if x_vf.shape[1] != self.spec.input_dim:
                raise ValueError(
                    f"dimension mismatch: expected visual dim {self.spec.input_dim}, got {x_vf.shape[1]}"
                )
            x_vl, head_tape = nn.forward(self.head, x_vf, train, rng)
            x_l = np.hstack([x_vl, x_c])
        else:
            head_tape = None
            x_l = x_c
        out, score_tape = nn.forward(self.scorer, x_l, train, rng)
        return out[:, 0], (head_tape, score_tape)

    def backward(self, tape, grad_scores):
        head_tape, score_tape = tape
        grad = np.asarray(grad_scores, dtype=np.float64).reshape(-1, 1)
        score_grads, grad_l = nn.backward(self.scorer, score_tape, grad)
        if not self.head:
            return score_grads
        head_grads, _ = nn.backward(self.head, head_tape, grad_l[:, : self.spec.visual_out_dim])
        return head_grads + score_grads

    def predict(self, x_vf, x_c) -> np.ndarray:
        return self.forward(x_vf, x_c, train=False)[0]

    def copy(self) -> "RankingNetwork":
        clone = build_model(self.spec, seed=0, init=False)
        for dst, src in zip(clone.params(), self.params()):
            dst[...] = src
        return clone

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())


def build_model(spec: ArchitectureSpec, seed=0, init=True) -> RankingNetwork:
    """Glorot-initialised network for ``spec``; ``init=False`` leaves zeros."""
    rng = np.random.Generator(np.random.PCG64(seed))

    def dense(i, o):
        if init:
            return nn.Dense(i, o, rng=rng)
        return nn.Dense(i, o, weights=np.zeros((o, i)))

    head = []
    widths = spec.head_widths()
    for k, (i, o) in enumerate(zip(widths[:-1], widths[1:])):
        head.append(dense(i, o))
        if k < len(widths) - 2:
            head.append(nn.ReLU())
            if spec.head_kind == "vgg_style":
                head.append(nn.Dropout(spec.dropout_head))
    scorer = [
        dense(spec.concat_width, spec.scoring_hidden),
        nn.ReLU(),
        nn.Dropout(spec.dropout_scoring),
        dense(spec.scoring_hidden, 1),
    ]
    return RankingNetwork(spec, head, scorer)


def score(model: RankingNetwork, x_vf, x_c, train=False, rng=None, query_id="", doc_id="") -> ScoredDocument:
    """Score one query-document pair."""
    if isinstance(x_c, ContentFeatureVector):
        if x_c.stage != "normalized":
            raise ValueError(f"content features must be normalized, got stage {x_c.stage!r}")
        x_c = x_c.values
    if x_vf is not None and hasattr(x_vf, "values") and not isinstance(x_vf, np.ndarray):
        x_vf = x_vf.values
    if x_vf is None and model.head:
        raise ValueError("missing visual vector for a model with a visual head")
    s = model.forward(None if x_vf is None else [x_vf], [x_c], train, rng)[0][0]
    return ScoredDocument(query_id, doc_id, float(s))


def encode_checkpoint(model: RankingNetwork) -> bytes:
    spec_block = model.spec.to_text().encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(spec_block)))
    buf.write(spec_block)
    arrays = model.params()
    buf.write(struct.pack("<I", len(arrays)))
    for arr in arrays:
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def decode_checkpoint(data: bytes) -> RankingNetwork:
    if data[:4] != MAGIC:
        raise ValueError("not a model checkpoint")
    try:
        (n,) = struct.unpack_from("<I", data, 4)
        spec = ArchitectureSpec.from_text(data[8:8 + n].decode("utf-8"))
        pos = 8 + n
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        model = build_model(spec, init=False)
        targets = model.params()
        if count != len(targets):
            raise ValueError(f"checkpoint holds {count} arrays, architecture needs {len(targets)}")
        for target in targets:
            (ndim,) = struct.unpack_from("<B", data, pos)
            shape = struct.unpack_from(f"<{ndim}I", data, pos + 1)
            pos += 1 + 4 * ndim
            if tuple(shape) != target.shape:
                raise ValueError(f"array shape {shape} does not match {target.shape}")
            size = int(np.prod(shape))
            if pos + 8 * size > len(data):
                raise struct.error("short read")
            target[...] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
            pos += 8 * size
    except struct.error:
        raise ValueError("truncated model checkpoint") from None
    return model


def concat_inputs(x_vf: np.ndarray | None, x_c: np.ndarray) -> np.ndarray:
    """Column-stack visual and content blocks into one design matrix."""
    x_c = np.atleast_2d(np.asarray(x_c, dtype=np.float64))
    if x_vf is None:
        return x_c
    return np.hstack([np.atleast_2d(np.asarray(x_vf, dtype=np.float64)), x_c])


def split_inputs(X: np.ndarray, spec: ArchitectureSpec) -> tuple[np.ndarray | None, np.ndarray]:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    expected = spec.content_dim + (spec.input_dim if spec.head_kind != "none" else 0)
    if X.shape[1] != expected:
        raise ValueError(f"expected {expected} input columns, got {X.shape[1]}")
    if spec.head_kind == "none":
        return None, X
    return X[:, : spec.input_dim], X[:, spec.input_dim:]

