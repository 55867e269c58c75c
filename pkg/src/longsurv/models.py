"""Trainable risk functions r(x) with exact hand-written reverse-mode gradients.

Three kinds share one parameter-vector convention:

- ``linear``: dot product on the flattened input (day-major matrix rows of
  [values | indicators], then one-hot time-fixed features). With one-hot
  encoding this reproduces the classical linear predictor beta' x.
- ``mlp``: fully connected ReLU stack on the same flattened input.
- ``composite``: each day row is mapped through a learned affine embedding,
  an LSTM consumes the embedded sequence, and the final hidden state is
  concatenated with learned categorical embeddings of the time-fixed features
  before a small fully connected head produces the scalar risk.

Parameters live in one flat float64 vector with a named block layout, so a
single optimizer loop serves every kind. All gradients are exact; ReLU uses
subgradient 0 at 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cohort import Cohort, FeatureSchema, LongitudinalMatrix, PatientRecord, truncate_observations
from .errors import ConfigError, NumericError, SchemaError, ShapeError

MODEL_KINDS = ("linear", "mlp", "composite")

# LSTM gate order inside stacked weight blocks.
_GATES = ("input", "forget", "cell", "output")


@dataclass(frozen=True)
class InputDims:
    """Input geometry shared by a model and the cohorts it can score."""

    days: int
    n_longitudinal: int
    vocab_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vocab_sizes", tuple(int(v) for v in self.vocab_sizes))
        if self.days < 1 or self.n_longitudinal < 1:
            raise ShapeError("days and n_longitudinal must be >= 1")

    @property
    def row_width(self) -> int:
        return 2 * self.n_longitudinal

    @property
    def flat_dim(self) -> int:
        return self.days * self.row_width + sum(self.vocab_sizes)


def dims_from_schema(schema: FeatureSchema, days: int) -> InputDims:
    return InputDims(days=int(days), n_longitudinal=schema.n_longitudinal,
                     vocab_sizes=schema.vocab_sizes)


@dataclass(frozen=True)
class RiskModelSpec:
    """Architecture description; sizes only, no learned state."""

    kind: str
    hidden_sizes: tuple[int, ...] = (128, 64)
    embed_dim: int = 15
    lstm_hidden: int = 32
    tf_embed_dim: int = 2
    head_sizes: tuple[int, ...] = (32, 16, 1)

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "head_sizes", tuple(int(h) for h in self.head_sizes))
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if any(h < 1 for h in self.hidden_sizes + self.head_sizes):
            raise ConfigError("layer sizes must be >= 1")
        if self.kind == "composite":
            if min(self.embed_dim, self.lstm_hidden, self.tf_embed_dim) < 1:
                raise ConfigError("composite sizes must be >= 1")
            if self.head_sizes[-1] != 1:
                raise ConfigError("the last head layer must have size 1")


@dataclass(frozen=True)
class ParamBlock:
    name: str
    shape: tuple[int, ...]
    init: str  # "glorot" | "zeros" | "lstm_bias"
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ParamLayout:
    blocks: tuple[ParamBlock, ...]

    @property
    def total(self) -> int:
        last = self.blocks[-1]
        return last.offset + last.size

    def views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        """Named, reshaped views into a flat array (shared memory)."""
        return {
            b.name: flat[b.offset : b.offset + b.size].reshape(b.shape)
            for b in self.blocks
        }

    def describe(self) -> list[list]:
        return [[b.name, list(b.shape), b.init] for b in self.blocks]


@dataclass(eq=False)
class ParamVector:
    """Flat float64 parameter vector plus its block layout."""

    values: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != self.layout.total:
            raise ShapeError(f"expected {self.layout.total} parameters, got {v.size}")
        if not np.isfinite(v).all():
            raise NumericError("parameters must be finite")
        self.values = v

    def block(self, name: str) -> np.ndarray:
        return self.layout.views(self.values)[name]

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)


@dataclass(eq=False)
class RiskModel:
    spec: RiskModelSpec
    dims: InputDims
    params: ParamVector

    def __post_init__(self):
        if self.params.layout.total != build_layout(self.spec, self.dims).total:
            raise ShapeError("parameter vector does not match the spec layout")


@dataclass(eq=False)
class EncodedInput:
    """One patient's features in model-ready form."""

    longitudinal: LongitudinalMatrix
    time_fixed: tuple[int, ...]
    dims: InputDims
    flattened: np.ndarray


def build_layout(spec: RiskModelSpec, dims: InputDims) -> ParamLayout:
    raw: list[tuple[str, tuple[int, ...], str]] = []
    if spec.kind == "linear":
        raw = [("w", (dims.flat_dim,), "glorot"), ("b", (1,), "zeros")]
    elif spec.kind == "mlp":
        prev = dims.flat_dim
        for i, h in enumerate(spec.hidden_sizes):
            raw += [(f"w{i}", (h, prev), "glorot"), (f"b{i}", (h,), "zeros")]
            prev = h
        raw += [("w_out", (1, prev), "glorot"), ("b_out", (1,), "zeros")]
    else:
        e, h = spec.embed_dim, spec.lstm_hidden
        raw = [
            ("embed_w", (e, dims.row_width), "glorot"),
            ("embed_b", (e,), "zeros"),
            ("lstm_wx", (4 * h, e), "glorot"),
            ("lstm_wh", (4 * h, h), "glorot"),
            ("lstm_b", (4 * h,), "lstm_bias"),
        ]
        for i, v in enumerate(dims.vocab_sizes):
            raw.append((f"tf_embed{i}", (v, spec.tf_embed_dim), "glorot"))
        prev = h + len(dims.vocab_sizes) * spec.tf_embed_dim
        for i, size in enumerate(spec.head_sizes):
            raw += [(f"head_w{i}", (size, prev), "glorot"), (f"head_b{i}", (size,), "zeros")]
            prev = size
    blocks = []
    offset = 0
    for name, shape, init in raw:
        blocks.append(ParamBlock(name, shape, init, offset))
        offset += int(np.prod(shape))
    return ParamLayout(tuple(blocks))


def init_params(spec: RiskModelSpec, dims: InputDims, seed: int) -> ParamVector:
    """Glorot-uniform weights (s = sqrt(6 / (fan_in + fan_out))), zero biases.

    The single exception is the LSTM forget-gate bias slice, initialized to 1
    so early training does not immediately forget the sequence state.
    """
    layout = build_layout(spec, dims)
    rng = np.random.default_rng(seed)
    values = np.empty(layout.total)
    for b in layout.blocks:
        view = values[b.offset : b.offset + b.size]
        if b.init == "zeros":
            view[:] = 0.0
        elif b.init == "lstm_bias":
            view[:] = 0.0
            h = b.size // 4
            view[h : 2 * h] = 1.0
        else:
            fan_out = b.shape[0]
            fan_in = b.shape[1] if len(b.shape) == 2 else 1
            s = np.sqrt(6.0 / (fan_in + fan_out))
            view[:] = rng.uniform(-s, s, size=b.size)
    return ParamVector(values, layout)


# --- input encoding ---------------------------------------------------------

def _encode_from_matrix(matrix: LongitudinalMatrix, time_fixed: tuple[int, ...],
                        dims: InputDims) -> EncodedInput:
    if matrix.days != dims.days or matrix.width != dims.n_longitudinal:
        raise ShapeError(
            f"matrix shape {matrix.values.shape} does not match dims "
            f"(days={dims.days}, features={dims.n_longitudinal})"
        )
    if len(time_fixed) != len(dims.vocab_sizes):
        raise ShapeError("wrong number of time-fixed indices")
    onehots = np.zeros(sum(dims.vocab_sizes))
    offset = 0
    for idx, size in zip(time_fixed, dims.vocab_sizes):
        if not 0 <= idx < size:
            raise ShapeError(f"time-fixed index {idx} out of range [0, {size})")
        onehots[offset + idx] = 1.0
        offset += size
    flattened = np.concatenate([matrix.flattened(), onehots])
    return EncodedInput(matrix, tuple(time_fixed), dims, flattened)


def encode_input(record: PatientRecord, schema: FeatureSchema,
                 days: "int | None" = None) -> EncodedInput:
    """Build the model-ready encoding of one patient."""
    days = record.longitudinal.days if days is None else int(days)
    return _encode_from_matrix(record.longitudinal, record.time_fixed,
                               dims_from_schema(schema, days))


def encode_inputs(cohort: Cohort, k: "int | None" = None, seed: int = 0) -> list[EncodedInput]:
    """Encode a whole cohort, optionally truncating each patient to k observed days.

    Truncation seeds are derived per patient position from ``seed``, so the
    same (cohort, k, seed) triple always yields the same encodings.
    """
    dims = dims_from_schema(cohort.schema, cohort.event_spec.cutoff_days)
    out = []
    for i, p in enumerate(cohort.patients):
        matrix = p.longitudinal
        if k is not None:
            rng = np.random.default_rng(np.random.SeedSequence((int(seed), i)))
            matrix = truncate_observations(matrix, k, rng)
        out.append(_encode_from_matrix(matrix, p.time_fixed, dims))
    return out


# --- forward / backward -----------------------------------------------------

def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _head_forward(weights, biases, x):
    """Affine stack with ReLU on every layer except the last."""
    acts = [x]
    pres = []
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        z = w @ acts[-1] + b
        pres.append(z)
        acts.append(z if l == last else np.maximum(z, 0.0))
    return acts, pres


def _head_backward(weights, acts, pres, upstream):
    """Returns (weight grads, bias grads, gradient wrt the stack input)."""
    d_w = [None] * len(weights)
    d_b = [None] * len(weights)
    delta = np.asarray(upstream, dtype=float).reshape(pres[-1].shape)
    for l in range(len(weights) - 1, -1, -1):
        d_w[l] = np.outer(delta, acts[l])
        d_b[l] = delta.copy()
        d_prev = weights[l].T @ delta
        if l > 0:
            delta = d_prev * (pres[l - 1] > 0)
        else:
            d_in = d_prev
    return d_w, d_b, d_in


def _check_input(model: RiskModel, enc: EncodedInput) -> None:
    if enc.dims != model.dims:
        raise ShapeError(f"input dims {enc.dims} do not match model dims {model.dims}")


def forward_cached(model: RiskModel, enc: EncodedInput):
    """Forward pass returning (risk, cache). The cache feeds backward_from_cache
    and is only valid while the parameters are unchanged."""
    _check_input(model, enc)
    blocks = model.params.layout.views(model.params.values)
    kind = model.spec.kind

    if kind == "linear":
        x = enc.flattened
        risk = float(blocks["w"] @ x + blocks["b"][0])
        return risk, {"kind": kind, "x": x}

    if kind == "mlp":
        names = [f"w{i}" for i in range(len(model.spec.hidden_sizes))] + ["w_out"]
        weights = [blocks[n] for n in names]
        biases = [blocks[n.replace("w", "b", 1)] for n in names]
        acts, pres = _head_forward(weights, biases, enc.flattened)
        return float(acts[-1][0]), {"kind": kind, "acts": acts, "pres": pres}

    # composite
    h_dim = model.spec.lstm_hidden
    x_rows = enc.longitudinal.row_concat()
    e_rows = x_rows @ blocks["embed_w"].T + blocks["embed_b"]
    wx, wh, b = blocks["lstm_wx"], blocks["lstm_wh"], blocks["lstm_b"]
    days = model.dims.days
    zs = np.empty((days, 4 * h_dim))
    gates_i = np.empty((days, h_dim))
    gates_f = np.empty((days, h_dim))
    gates_g = np.empty((days, h_dim))
    gates_o = np.empty((days, h_dim))
    cs = np.empty((days, h_dim))
    hs = np.empty((days, h_dim))
    tanh_c = np.empty((days, h_dim))
    h = np.zeros(h_dim)
    c = np.zeros(h_dim)
    for t in range(days):
        z = wx @ e_rows[t] + wh @ h + b
        zs[t] = z
        i_g = _sigmoid(z[:h_dim])
        f_g = _sigmoid(z[h_dim : 2 * h_dim])
        g_g = np.tanh(z[2 * h_dim : 3 * h_dim])
        o_g = _sigmoid(z[3 * h_dim :])
        c = f_g * c + i_g * g_g
        tc = np.tanh(c)
        h = o_g * tc
        gates_i[t], gates_f[t], gates_g[t], gates_o[t] = i_g, f_g, g_g, o_g
        cs[t], hs[t], tanh_c[t] = c, h, tc

    tf_parts = [blocks[f"tf_embed{i}"][idx] for i, idx in enumerate(enc.time_fixed)]
    u = np.concatenate([h] + tf_parts) if tf_parts else h
    names = [f"head_w{i}" for i in range(len(model.spec.head_sizes))]
    weights = [blocks[n] for n in names]
    biases = [blocks[n.replace("w", "b", 1)] for n in names]
    acts, pres = _head_forward(weights, biases, u)
    cache = {
        "kind": kind, "x_rows": x_rows, "e_rows": e_rows,
        "gates": (gates_i, gates_f, gates_g, gates_o),
        "cs": cs, "hs": hs, "tanh_c": tanh_c,
        "acts": acts, "pres": pres, "time_fixed": enc.time_fixed,
    }
    return float(acts[-1][0]), cache


def forward(model: RiskModel, enc: EncodedInput) -> float:
    """Scalar risk r(x). Deterministic: same params + input give the same bits."""
    return forward_cached(model, enc)[0]


def backward_from_cache(model: RiskModel, cache: dict, upstream: float) -> np.ndarray:
    """Exact gradient d(upstream * risk)/d(params), flat, aligned with the layout."""
    layout = model.params.layout
    grad = np.zeros(layout.total)
    views = layout.views(grad)
    blocks = model.params.layout.views(model.params.values)
    upstream = float(upstream)
    kind = cache["kind"]

    if kind == "linear":
        views["w"][:] = upstream * cache["x"]
        views["b"][0] = upstream
        return grad

    if kind == "mlp":
        names = [f"w{i}" for i in range(len(model.spec.hidden_sizes))] + ["w_out"]
        weights = [blocks[n] for n in names]
        d_w, d_b, _ = _head_backward(weights, cache["acts"], cache["pres"], upstream)
        for n, dw, db in zip(names, d_w, d_b):
            views[n][:] = dw
            views[n.replace("w", "b", 1)][:] = db
        return grad

    # composite
    h_dim = model.spec.lstm_hidden
    names = [f"head_w{i}" for i in range(len(model.spec.head_sizes))]
    weights = [blocks[n] for n in names]
    d_w, d_b, d_u = _head_backward(weights, cache["acts"], cache["pres"], upstream)
    for n, dw, db in zip(names, d_w, d_b):
        views[n][:] = dw
        views[n.replace("w", "b", 1)][:] = db

    offset = h_dim
    for i, idx in enumerate(cache["time_fixed"]):
        width = model.spec.tf_embed_dim
        views[f"tf_embed{i}"][idx] += d_u[offset : offset + width]
        offset += width

    gates_i, gates_f, gates_g, gates_o = cache["gates"]
    cs, hs, tanh_c = cache["cs"], cache["hs"], cache["tanh_c"]
    e_rows, x_rows = cache["e_rows"], cache["x_rows"]
    wx, wh = blocks["lstm_wx"], blocks["lstm_wh"]
    g_wx, g_wh, g_b = views["lstm_wx"], views["lstm_wh"], views["lstm_b"]
    g_we, g_be = views["embed_w"], views["embed_b"]

    d_h = d_u[:h_dim].copy()
    d_c = np.zeros(h_dim)
    for t in range(model.dims.days - 1, -1, -1):
        i_g, f_g, g_g, o_g = gates_i[t], gates_f[t], gates_g[t], gates_o[t]
        tc = tanh_c[t]
        c_prev = cs[t - 1] if t > 0 else np.zeros(h_dim)
        h_prev = hs[t - 1] if t > 0 else np.zeros(h_dim)
        d_o = d_h * tc
        d_c = d_c + d_h * o_g * (1.0 - tc * tc)
        d_i = d_c * g_g
        d_g = d_c * i_g
        d_f = d_c * c_prev
        d_z = np.concatenate([
            d_i * i_g * (1.0 - i_g),
            d_f * f_g * (1.0 - f_g),
            d_g * (1.0 - g_g * g_g),
            d_o * o_g * (1.0 - o_g),
        ])
        g_wx += np.outer(d_z, e_rows[t])
        g_wh += np.outer(d_z, h_prev)
        g_b += d_z
        d_e = wx.T @ d_z
        g_we += np.outer(d_e, x_rows[t])
        g_be += d_e
        d_h = wh.T @ d_z
        d_c = d_c * f_g
    return grad


def backward(model: RiskModel, enc: EncodedInput, upstream: float) -> ParamVector:
    """Gradient of upstream * forward(model, enc) with respect to the parameters."""
    _, cache = forward_cached(model, enc)
    return ParamVector(backward_from_cache(model, cache, upstream), model.params.layout)


# --- serialization ----------------------------------------------------------

def spec_to_dict(spec: RiskModelSpec) -> dict:
    return {
        "kind": spec.kind,
        "hidden_sizes": list(spec.hidden_sizes),
        "embed_dim": spec.embed_dim,
        "lstm_hidden": spec.lstm_hidden,
        "tf_embed_dim": spec.tf_embed_dim,
        "head_sizes": list(spec.head_sizes),
    }


def spec_from_dict(d: dict) -> RiskModelSpec:
    return RiskModelSpec(
        kind=d["kind"],
        hidden_sizes=tuple(d.get("hidden_sizes", (128, 64))),
        embed_dim=int(d.get("embed_dim", 15)),
        lstm_hidden=int(d.get("lstm_hidden", 32)),
        tf_embed_dim=int(d.get("tf_embed_dim", 2)),
        head_sizes=tuple(d.get("head_sizes", (32, 16, 1))),
    )


def dims_to_dict(dims: InputDims) -> dict:
    return {"days": dims.days, "n_longitudinal": dims.n_longitudinal,
            "vocab_sizes": list(dims.vocab_sizes)}


def dims_from_dict(d: dict) -> InputDims:
    return InputDims(days=int(d["days"]), n_longitudinal=int(d["n_longitudinal"]),
                     vocab_sizes=tuple(d["vocab_sizes"]))


def model_to_dict(model: RiskModel) -> dict:
    return {
        "spec": spec_to_dict(model.spec),
        "dims": dims_to_dict(model.dims),
        "layout": model.params.layout.describe(),
        "params": [float(v) for v in model.params.values],
    }


def model_from_dict(d: dict) -> RiskModel:
    spec = spec_from_dict(d["spec"])
    dims = dims_from_dict(d["dims"])
    layout = build_layout(spec, dims)
    if d.get("layout") is not None and layout.describe() != d["layout"]:
        raise ShapeError("stored layout does not match the spec layout")
    params = ParamVector(np.array(d["params"], dtype=float), layout)
    return RiskModel(spec, dims, params)
