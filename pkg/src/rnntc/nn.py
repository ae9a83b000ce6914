"""Recurrent cells, classifier head, forward inference, and exact BPTT gradients.

All math runs in double precision.  The cell equations, with ``[h, x]``
denoting concatenation (hidden state first, then input):

    sRNN   h_t = sigmoid(W_h [h_{t-1}, x_t] + b_h)
    GRU    z_t = sigmoid(W_z [h_{t-1}, x_t] + b_z)
           r_t = sigmoid(W_r [h_{t-1}, x_t] + b_r)
           h'_t = tanh(W_c [r_t * h_{t-1}, x_t] + b_c)
           h_t = (1 - z_t) * h_{t-1} + z_t * h'_t
    LSTM   f_t, i_t, o_t = sigmoid(W_* [h_{t-1}, x_t] + b_*)
           g_t = tanh(W_g [h_{t-1}, x_t] + b_g)
           C_t = f_t * C_{t-1} + i_t * g_t
           h_t = o_t * tanh(C_t)

Every step function accepts either single vectors or ``(batch, dim)``
arrays; the sequence runners operate on batches internally and single
sequences through thin wrappers.  Gradients are exact (no truncation) and
accumulate in a fixed order, so results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

CELL_KINDS = ("srnn", "gru", "lstm", "blstm")

LOSS_CLAMP = 1e-12


@dataclass
class ModelConfig:
    """Architecture hyperparameters shared by all cell kinds.

    ``vocab_capacity`` counts assignable token ids; the embedding table has
    two extra rows for PAD and OOV.  ``gru_bias=False`` drops the GRU gate
    bias terms (update/reset/candidate become pure matrix products).
    """

    cell_kind: str
    vocab_capacity: int
    embed_dim: int = 64
    hidden_dim: int = 64
    dense_dims: tuple[int, ...] = (32,)
    n_classes: int = 4
    seq_len: int = 2000
    gru_bias: bool = True

    def __post_init__(self):
        if self.cell_kind not in CELL_KINDS:
            raise ValueError(f"cell_kind must be one of {CELL_KINDS}, got {self.cell_kind!r}")
        self.dense_dims = tuple(int(d) for d in self.dense_dims)
        for name in ("vocab_capacity", "embed_dim", "hidden_dim", "seq_len"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if any(d < 1 for d in self.dense_dims):
            raise ValueError("dense_dims entries must be >= 1")
        if self.n_classes < 2:
            raise ValueError("n_classes must be >= 2")

    @property
    def feature_dim(self) -> int:
        """Classifier-head input width: 2H for blstm, H otherwise."""
        return 2 * self.hidden_dim if self.cell_kind == "blstm" else self.hidden_dim

    def to_dict(self) -> dict:
        return {
            "cell_kind": self.cell_kind,
            "vocab_capacity": self.vocab_capacity,
            "embed_dim": self.embed_dim,
            "hidden_dim": self.hidden_dim,
            "dense_dims": list(self.dense_dims),
            "n_classes": self.n_classes,
            "seq_len": self.seq_len,
            "gru_bias": self.gru_bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            cell_kind=d["cell_kind"],
            vocab_capacity=int(d["vocab_capacity"]),
            embed_dim=int(d["embed_dim"]),
            hidden_dim=int(d["hidden_dim"]),
            dense_dims=tuple(int(x) for x in d["dense_dims"]),
            n_classes=int(d["n_classes"]),
            seq_len=int(d["seq_len"]),
            gru_bias=bool(d["gru_bias"]),
        )


# --- activations ------------------------------------------------------------


def sigmoid(x):
    """Elementwise 1 / (1 + exp(-x)), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    """Elementwise hyperbolic tangent."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def relu(x):
    """Elementwise max(0, x)."""
    return np.maximum(0.0, np.asarray(x, dtype=np.float64))


def softmax(logits):
    """Probabilities along the last axis, computed with max-subtraction."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probabilities, one_hot):
    """-ln(p_true) with p clamped to at least 1e-12.

    Accepts single vectors or batches; returns a scalar or a per-example
    vector accordingly.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(one_hot, dtype=np.float64)
    p_true = (p * y).sum(axis=-1)
    loss = -np.log(np.maximum(p_true, LOSS_CLAMP))
    return float(loss) if loss.ndim == 0 else loss


def predict(probabilities) -> int:
    """Index of the highest probability; ties go to the smallest index."""
    return int(np.argmax(np.asarray(probabilities), axis=-1))


def predict_batch(probabilities) -> np.ndarray:
    return np.argmax(np.asarray(probabilities), axis=-1)


# --- embedding --------------------------------------------------------------


def embed(seq, table) -> np.ndarray:
    """Look up embedding rows for a sequence (or batch) of token ids."""
    seq = np.asarray(seq)
    if seq.size and (seq.min() < 0 or seq.max() >= table.shape[0]):
        raise IndexError(
            f"token id out of range [0, {table.shape[0]}): "
            f"min={seq.min()}, max={seq.max()}"
        )
    return table[seq]


# --- cell steps -------------------------------------------------------------


def _cat(h, x):
    return np.concatenate([h, x], axis=-1)


def _linear(W, v, b=None):
    out = v @ W.T
    if b is not None:
        out = out + b
    return out


def srnn_step(x_t, h_prev, params):
    """One simple-RNN step: sigmoid(W_h [h_prev, x_t] + b_h)."""
    return sigmoid(_linear(params["W_h"], _cat(h_prev, x_t), params["b_h"]))


def gru_gates(x_t, h_prev, params):
    """GRU gate activations (z_t, r_t, h_candidate).

    Bias vectors are added only when present in ``params``.
    """
    cat = _cat(h_prev, x_t)
    z = sigmoid(_linear(params["W_z"], cat, params.get("b_z")))
    r = sigmoid(_linear(params["W_r"], cat, params.get("b_r")))
    cand = tanh(_linear(params["W_c"], _cat(r * h_prev, x_t), params.get("b_c")))
    return z, r, cand


def gru_compose(z, h_prev, h_cand):
    """Convex combination (1 - z) * h_prev + z * h_cand."""
    return (1.0 - z) * h_prev + z * h_cand


def lstm_gates(x_t, h_prev, params):
    """LSTM gate activations (f_t, i_t, g_t, o_t)."""
    cat = _cat(h_prev, x_t)
    f = sigmoid(_linear(params["W_f"], cat, params["b_f"]))
    i = sigmoid(_linear(params["W_i"], cat, params["b_i"]))
    g = tanh(_linear(params["W_g"], cat, params["b_g"]))
    o = sigmoid(_linear(params["W_o"], cat, params["b_o"]))
    return f, i, g, o


def lstm_compose(f, i, g, o, c_prev):
    """Cell and hidden state update: C = f*C_prev + i*g, h = o*tanh(C)."""
    c = f * c_prev + i * g
    h = o * tanh(c)
    return c, h


# --- parameters -------------------------------------------------------------

_GATE_KEYS = {"gru": ("z", "r", "c"), "lstm": ("f", "i", "g", "o")}


def param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape map for every trainable array, in a fixed order."""
    H, E, K = config.hidden_dim, config.embed_dim, config.n_classes
    D = H + E
    shapes: dict[str, tuple[int, ...]] = {
        "embedding": (config.vocab_capacity + 2, E),
    }

    def cell_block(kind, prefix=""):
        if kind == "srnn":
            shapes[prefix + "W_h"] = (H, D)
            shapes[prefix + "b_h"] = (H,)
        elif kind == "gru":
            for gate in _GATE_KEYS["gru"]:
                shapes[prefix + f"W_{gate}"] = (H, D)
                if config.gru_bias:
                    shapes[prefix + f"b_{gate}"] = (H,)
        else:  # lstm direction
            for gate in _GATE_KEYS["lstm"]:
                shapes[prefix + f"W_{gate}"] = (H, D)
                shapes[prefix + f"b_{gate}"] = (H,)

    if config.cell_kind == "blstm":
        cell_block("lstm", "fw_")
        cell_block("lstm", "bw_")
    else:
        cell_block(config.cell_kind)

    prev = config.feature_dim
    for i, d in enumerate(config.dense_dims):
        shapes[f"dense_{i}_W"] = (d, prev)
        shapes[f"dense_{i}_b"] = (d,)
        prev = d
    shapes["out_W"] = (K, prev)
    shapes["out_b"] = (K,)
    return shapes


def init_params(config: ModelConfig, seed: int | np.random.Generator) -> dict[str, np.ndarray]:
    """Glorot-uniform weight matrices, zero biases, drawn in a fixed order."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(config).items():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            params[name] = np.zeros(shape, dtype=np.float64)
    return params


def _direction_view(params: dict, prefix: str) -> dict:
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


# --- forward ----------------------------------------------------------------


@dataclass
class ForwardCache:
    """Intermediates retained by a forward pass for exact BPTT."""

    ids: np.ndarray
    X: np.ndarray
    rec: dict[str, Any]
    head_acts: list[np.ndarray]
    head_zs: list[np.ndarray]
    probs: np.ndarray
    config_key: tuple = field(default=())


def _config_key(config: ModelConfig) -> tuple:
    return (
        config.cell_kind,
        config.vocab_capacity,
        config.embed_dim,
        config.hidden_dim,
        config.dense_dims,
        config.n_classes,
        config.gru_bias,
    )


def _srnn_forward(X, params):
    B, L, _ = X.shape
    H = params["W_h"].shape[0]
    hs = np.zeros((B, L + 1, H))
    for t in range(L):
        hs[:, t + 1] = srnn_step(X[:, t], hs[:, t], params)
    return {"hs": hs}


def _gru_forward(X, params):
    B, L, _ = X.shape
    H = params["W_z"].shape[0]
    hs = np.zeros((B, L + 1, H))
    zs = np.empty((B, L, H))
    rs = np.empty((B, L, H))
    cands = np.empty((B, L, H))
    for t in range(L):
        z, r, cand = gru_gates(X[:, t], hs[:, t], params)
        zs[:, t], rs[:, t], cands[:, t] = z, r, cand
        hs[:, t + 1] = gru_compose(z, hs[:, t], cand)
    return {"hs": hs, "z": zs, "r": rs, "cand": cands}


def _lstm_forward(X, params):
    B, L, _ = X.shape
    H = params["W_f"].shape[0]
    hs = np.zeros((B, L + 1, H))
    cs = np.zeros((B, L + 1, H))
    gates = {k: np.empty((B, L, H)) for k in ("f", "i", "g", "o")}
    for t in range(L):
        f, i, g, o = lstm_gates(X[:, t], hs[:, t], params)
        gates["f"][:, t], gates["i"][:, t] = f, i
        gates["g"][:, t], gates["o"][:, t] = g, o
        cs[:, t + 1], hs[:, t + 1] = lstm_compose(f, i, g, o, cs[:, t])
    return {"hs": hs, "cs": cs, **gates}


def _run_cells(X, params, cell_kind):
    """Returns (features, recurrent cache) for a (B, L, E) batch."""
    if cell_kind == "srnn":
        rec = _srnn_forward(X, params)
        return rec["hs"][:, -1], rec
    if cell_kind == "gru":
        rec = _gru_forward(X, params)
        return rec["hs"][:, -1], rec
    if cell_kind == "lstm":
        rec = _lstm_forward(X, params)
        return rec["hs"][:, -1], rec
    if cell_kind == "blstm":
        X_rev = X[:, ::-1].copy()
        fw = _lstm_forward(X, _direction_view(params, "fw_"))
        bw = _lstm_forward(X_rev, _direction_view(params, "bw_"))
        feats = np.concatenate([fw["hs"][:, -1], bw["hs"][:, -1]], axis=-1)
        return feats, {"fw": fw, "bw": bw, "X_rev": X_rev}
    raise ValueError(f"unknown cell kind {cell_kind!r}")


def run_recurrent(embedded, params, cell_kind):
    """Run a cell over an embedded sequence from zero initial state.

    Accepts an (L, E) matrix and returns the feature vector (the final
    hidden state, or the 2H concatenation of endpoint states for blstm);
    batches of shape (B, L, E) map to (B, features).
    """
    X = np.asarray(embedded, dtype=np.float64)
    single = X.ndim == 2
    if single:
        X = X[None]
    feats, _ = _run_cells(X, params, cell_kind)
    return feats[0] if single else feats


def forward_batch(ids, config: ModelConfig, params: dict) -> tuple[np.ndarray, ForwardCache]:
    """Embed, run the recurrent cell, and classify a (B, L) id batch."""
    ids = np.asarray(ids, dtype=np.int64)
    X = embed(ids, params["embedding"])
    feats, rec = _run_cells(X, params, config.cell_kind)
    acts = [feats]
    zs = []
    a = feats
    for i in range(len(config.dense_dims)):
        z = _linear(params[f"dense_{i}_W"], a, params[f"dense_{i}_b"])
        a = relu(z)
        zs.append(z)
        acts.append(a)
    logits = _linear(params["out_W"], a, params["out_b"])
    probs = softmax(logits)
    cache = ForwardCache(
        ids=ids, X=X, rec=rec, head_acts=acts, head_zs=zs, probs=probs,
        config_key=_config_key(config),
    )
    return probs, cache


def forward_pass(seq, config: ModelConfig, params: dict) -> tuple[np.ndarray, ForwardCache]:
    """Single-sequence forward pass: (K,) probabilities plus the cache."""
    probs, cache = forward_batch(np.asarray(seq, dtype=np.int64)[None], config, params)
    return probs[0], cache


# --- backward ---------------------------------------------------------------


def _srnn_backward(X, rec, params, dh):
    B, L, E = X.shape
    H = dh.shape[-1]
    hs = rec["hs"]
    dW = np.zeros_like(params["W_h"])
    db = np.zeros_like(params["b_h"])
    dX = np.empty_like(X)
    for t in range(L - 1, -1, -1):
        h = hs[:, t + 1]
        da = dh * h * (1.0 - h)
        cat = _cat(hs[:, t], X[:, t])
        dW += da.T @ cat
        db += da.sum(axis=0)
        dcat = da @ params["W_h"]
        dh = dcat[:, :H]
        dX[:, t] = dcat[:, H:]
    return {"W_h": dW, "b_h": db}, dX


def _gru_backward(X, rec, params, dh):
    B, L, E = X.shape
    H = dh.shape[-1]
    hs, zs, rs, cands = rec["hs"], rec["z"], rec["r"], rec["cand"]
    with_bias = "b_z" in params
    grads = {k: np.zeros_like(params[k]) for k in ("W_z", "W_r", "W_c")}
    if with_bias:
        grads.update({k: np.zeros_like(params[k]) for k in ("b_z", "b_r", "b_c")})
    dX = np.empty_like(X)
    for t in range(L - 1, -1, -1):
        h_prev = hs[:, t]
        z, r, cand = zs[:, t], rs[:, t], cands[:, t]
        dz = dh * (cand - h_prev)
        dcand = dh * z
        dh_prev = dh * (1.0 - z)

        da_c = dcand * (1.0 - cand * cand)
        cat_c = _cat(r * h_prev, X[:, t])
        grads["W_c"] += da_c.T @ cat_c
        if with_bias:
            grads["b_c"] += da_c.sum(axis=0)
        dcat_c = da_c @ params["W_c"]
        drh = dcat_c[:, :H]
        dx = dcat_c[:, H:]
        dr = drh * h_prev
        dh_prev += drh * r

        da_z = dz * z * (1.0 - z)
        da_r = dr * r * (1.0 - r)
        cat = _cat(h_prev, X[:, t])
        grads["W_z"] += da_z.T @ cat
        grads["W_r"] += da_r.T @ cat
        if with_bias:
            grads["b_z"] += da_z.sum(axis=0)
            grads["b_r"] += da_r.sum(axis=0)
        dcat = da_z @ params["W_z"] + da_r @ params["W_r"]
        dh_prev += dcat[:, :H]
        dx += dcat[:, H:]

        dX[:, t] = dx
        dh = dh_prev
    return grads, dX


def _lstm_backward(X, rec, params, dh):
    B, L, E = X.shape
    H = dh.shape[-1]
    hs, cs = rec["hs"], rec["cs"]
    fs, is_, gs, os_ = rec["f"], rec["i"], rec["g"], rec["o"]
    grads = {k: np.zeros_like(params[k]) for k in
             ("W_f", "W_i", "W_g", "W_o", "b_f", "b_i", "b_g", "b_o")}
    dX = np.empty_like(X)
    dc = np.zeros_like(dh)
    for t in range(L - 1, -1, -1):
        f, i, g, o = fs[:, t], is_[:, t], gs[:, t], os_[:, t]
        tc = np.tanh(cs[:, t + 1])
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        df = dc * cs[:, t]
        di = dc * g
        dg = dc * i
        dc_prev = dc * f

        da_f = df * f * (1.0 - f)
        da_i = di * i * (1.0 - i)
        da_g = dg * (1.0 - g * g)
        da_o = do * o * (1.0 - o)
        cat = _cat(hs[:, t], X[:, t])
        for key, da in (("f", da_f), ("i", da_i), ("g", da_g), ("o", da_o)):
            grads[f"W_{key}"] += da.T @ cat
            grads[f"b_{key}"] += da.sum(axis=0)
        dcat = (da_f @ params["W_f"] + da_i @ params["W_i"]
                + da_g @ params["W_g"] + da_o @ params["W_o"])
        dh = dcat[:, :H]
        dX[:, t] = dcat[:, H:]
        dc = dc_prev
    return grads, dX


def backward_batch(cache: ForwardCache, Y, config: ModelConfig, params: dict) -> dict[str, np.ndarray]:
    """Gradients of the summed cross-entropy over the batch.

    Returns one array per parameter, with shapes mirroring ``params``.
    Dividing by the batch size yields mean-loss gradients.
    """
    if cache.config_key != _config_key(config):
        raise ValueError("cache does not match this model configuration")
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != cache.probs.shape:
        raise ValueError(f"labels shape {Y.shape} does not match cache {cache.probs.shape}")
    grads: dict[str, np.ndarray] = {}

    # head: d(sum loss)/dlogits = probs - Y
    dlogits = cache.probs - Y
    a_last = cache.head_acts[-1]
    grads["out_W"] = dlogits.T @ a_last
    grads["out_b"] = dlogits.sum(axis=0)
    da = dlogits @ params["out_W"]
    for i in range(len(config.dense_dims) - 1, -1, -1):
        dz = da * (cache.head_zs[i] > 0)
        grads[f"dense_{i}_W"] = dz.T @ cache.head_acts[i]
        grads[f"dense_{i}_b"] = dz.sum(axis=0)
        da = dz @ params[f"dense_{i}_W"]
    dfeats = da

    H = config.hidden_dim
    if config.cell_kind == "srnn":
        cell_grads, dX = _srnn_backward(cache.X, cache.rec, params, dfeats)
        grads.update(cell_grads)
    elif config.cell_kind == "gru":
        cell_grads, dX = _gru_backward(cache.X, cache.rec, params, dfeats)
        grads.update(cell_grads)
    elif config.cell_kind == "lstm":
        cell_grads, dX = _lstm_backward(cache.X, cache.rec, params, dfeats)
        grads.update(cell_grads)
    else:  # blstm
        fw_grads, dX_fw = _lstm_backward(
            cache.X, cache.rec["fw"], _direction_view(params, "fw_"), dfeats[:, :H]
        )
        bw_grads, dX_bw = _lstm_backward(
            cache.rec["X_rev"], cache.rec["bw"], _direction_view(params, "bw_"),
            dfeats[:, H:],
        )
        grads.update({f"fw_{k}": v for k, v in fw_grads.items()})
        grads.update({f"bw_{k}": v for k, v in bw_grads.items()})
        dX = dX_fw + dX_bw[:, ::-1]

    demb = np.zeros_like(params["embedding"])
    np.add.at(demb, cache.ids.ravel(), dX.reshape(-1, config.embed_dim))
    grads["embedding"] = demb
    return grads


def backward_pass(cache: ForwardCache, one_hot, config: ModelConfig, params: dict) -> dict[str, np.ndarray]:
    """Gradients of a single example's cross-entropy w.r.t. every parameter."""
    one_hot = np.asarray(one_hot, dtype=np.float64)
    if one_hot.ndim == 1:
        one_hot = one_hot[None]
    return backward_batch(cache, one_hot, config, params)
