"""From-scratch stacked LSTM binary sequence classifier.

Two LSTM layers feed a tanh dense layer and a sigmoid head that emits one
score per cycle. Training is mini-batch Adam on binary cross entropy with
exact gradients from backpropagation through time; everything runs in 64-bit
numpy for reproducibility.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
SCORE_EPS = 1e-12

GATE_NAMES = ("inp", "cand", "forget", "out")


@dataclass
class GateParams:
    w: np.ndarray   # (hidden, input)
    u: np.ndarray   # (hidden, hidden)
    b: np.ndarray   # (hidden,)


@dataclass
class LayerParams:
    inp: GateParams
    cand: GateParams
    forget: GateParams
    out: GateParams

    def gates(self):
        return [(name, getattr(self, name)) for name in GATE_NAMES]


@dataclass
class ModelParams:
    layers: list[LayerParams]
    dense_w: np.ndarray   # (dense, hidden)
    dense_b: np.ndarray   # (dense,)
    head_w: np.ndarray    # (dense,)
    head_b: np.ndarray    # (1,)
    input_size: int
    hidden_size: int
    dense_size: int

    def named_arrays(self):
        """(name, array) pairs in a fixed order shared by all mirrors."""
        for li, layer in enumerate(self.layers):
            for gname, gate in layer.gates():
                yield f"layer{li}.{gname}.w", gate.w
                yield f"layer{li}.{gname}.u", gate.u
                yield f"layer{li}.{gname}.b", gate.b
        yield "dense.w", self.dense_w
        yield "dense.b", self.dense_b
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def copy(self) -> "ModelParams":
        return _map_arrays(self, np.copy)

    def zeros_like(self) -> "ModelParams":
        return _map_arrays(self, np.zeros_like)


def _map_arrays(params: ModelParams, fn) -> ModelParams:
    layers = [LayerParams(*(GateParams(fn(g.w), fn(g.u), fn(g.b))
                            for _, g in layer.gates()))
              for layer in params.layers]
    return ModelParams(layers, fn(params.dense_w), fn(params.dense_b),
                       fn(params.head_w), fn(params.head_b),
                       params.input_size, params.hidden_size, params.dense_size)


def init_model(input_size: int, hidden_size: int = 128, dense_size: int = 32,
               num_layers: int = 2, seed: int = 0) -> ModelParams:
    """Uniform +-1/sqrt(fan-in) weights, forget-gate bias 1.0, other biases 0."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        k = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-k, k, size=shape)

    layers = []
    for li in range(num_layers):
        width = input_size if li == 0 else hidden_size
        gates = {}
        for gname in GATE_NAMES:
            b = np.ones(hidden_size) if gname == "forget" else np.zeros(hidden_size)
            gates[gname] = GateParams(
                w=uniform((hidden_size, width), width),
                u=uniform((hidden_size, hidden_size), hidden_size),
                b=b,
            )
        layers.append(LayerParams(**gates))
    return ModelParams(
        layers=layers,
        dense_w=uniform((dense_size, hidden_size), hidden_size),
        dense_b=np.zeros(dense_size),
        head_w=uniform((dense_size,), dense_size),
        head_b=np.zeros(1),
        input_size=input_size,
        hidden_size=hidden_size,
        dense_size=dense_size,
    )


def lstm_cell_forward(x, h_prev, c_prev, gates: LayerParams):
    """One memory-cell step: gated candidate into the cell state, gated output.

    Accepts single vectors or (batch, dim) arrays.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
        h_prev = np.asarray(h_prev, dtype=float)[None, :]
        c_prev = np.asarray(c_prev, dtype=float)[None, :]
    if x.shape[1] != gates.inp.w.shape[1]:
        raise ValueError(f"input width {x.shape[1]} != gate width {gates.inp.w.shape[1]}")
    if h_prev.shape[1] != gates.inp.u.shape[1]:
        raise ValueError("hidden state width mismatch")
    h, c, _ = _cell_forward(x, h_prev, c_prev, gates)
    if single:
        return h[0], c[0]
    return h, c


def _cell_forward(x, h_prev, c_prev, layer: LayerParams):
    i = expit(x @ layer.inp.w.T + h_prev @ layer.inp.u.T + layer.inp.b)
    g = np.tanh(x @ layer.cand.w.T + h_prev @ layer.cand.u.T + layer.cand.b)
    f = expit(x @ layer.forget.w.T + h_prev @ layer.forget.u.T + layer.forget.b)
    c = f * c_prev + i * g
    o = expit(x @ layer.out.w.T + h_prev @ layer.out.u.T + layer.out.b)
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (x, h_prev, c_prev, i, g, f, o, c, tanh_c)
    return h, c, cache


def _head_forward(h_top, params: ModelParams):
    dense = np.tanh(h_top @ params.dense_w.T + params.dense_b)
    z = dense @ params.head_w + params.head_b[0]
    return expit(z), dense


def forward_scores(inputs: np.ndarray, params: ModelParams) -> np.ndarray:
    """Scores for a batch of sequences; inputs (N, T, F) -> (N, T)."""
    scores, _ = _forward_cached(inputs, params, keep_cache=False)
    return scores


def model_forward(sequence: np.ndarray, params: ModelParams) -> np.ndarray:
    """Per-cycle scores for one sequence (T, F) -> (T,)."""
    sequence = np.asarray(sequence, dtype=float)
    if sequence.ndim != 2 or sequence.shape[1] != params.input_size:
        raise ValueError(f"expected (T, {params.input_size}) sequence, "
                         f"got {sequence.shape}")
    return forward_scores(sequence[None], params)[0]


def _forward_cached(inputs: np.ndarray, params: ModelParams, keep_cache: bool = True):
    inputs = np.asarray(inputs, dtype=float)
    n, t_len, width = inputs.shape
    if width != params.input_size:
        raise ValueError(f"input width {width} != model input size {params.input_size}")
    n_layers = len(params.layers)
    h = [np.zeros((n, params.hidden_size)) for _ in range(n_layers)]
    c = [np.zeros((n, params.hidden_size)) for _ in range(n_layers)]
    scores = np.zeros((n, t_len))
    caches = [] if keep_cache else None
    denses = [] if keep_cache else None
    tops = [] if keep_cache else None
    for t in range(t_len):
        x = inputs[:, t, :]
        step_caches = []
        for li, layer in enumerate(params.layers):
            h[li], c[li], cache = _cell_forward(x, h[li], c[li], layer)
            step_caches.append(cache)
            x = h[li]
        y_t, dense = _head_forward(x, params)
        scores[:, t] = y_t
        if keep_cache:
            caches.append(step_caches)
            denses.append(dense)
            tops.append(x)
    return scores, (caches, denses, tops)


class InferenceSession:
    """Carries recurrent state so each new cycle costs one cell step."""

    def __init__(self, params: ModelParams):
        self.params = params
        n_layers = len(params.layers)
        self._h = [np.zeros(params.hidden_size) for _ in range(n_layers)]
        self._c = [np.zeros(params.hidden_size) for _ in range(n_layers)]

    def step(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        for li, layer in enumerate(self.params.layers):
            self._h[li], self._c[li] = lstm_cell_forward(x, self._h[li], self._c[li], layer)
            x = self._h[li]
        score, _ = _head_forward(x[None, :], self.params)
        return float(score[0])


def bce_loss(scores: np.ndarray, y: int, per_timestep: bool = True) -> float:
    """Binary cross entropy for one case: mean over cycles, or final cycle only."""
    scores = np.atleast_1d(np.asarray(scores, dtype=float))
    if y not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {y}")
    picked = scores if per_timestep else scores[-1:]
    clamped = np.clip(picked, SCORE_EPS, 1.0 - SCORE_EPS)
    if np.any(picked != clamped):
        log.warning("clamped %d saturated scores in loss", int(np.sum(picked != clamped)))
    ll = y * np.log(clamped) + (1 - y) * np.log(1.0 - clamped)
    return float(-ll.mean())


def batch_bce_loss(scores: np.ndarray, labels: np.ndarray,
                   per_timestep: bool = True) -> float:
    """Batch objective: sum of per-case losses."""
    return float(sum(bce_loss(scores[i], int(labels[i]), per_timestep)
                     for i in range(scores.shape[0])))


def backprop_gradients(batch: tuple[np.ndarray, np.ndarray], params: ModelParams,
                       per_timestep: bool = True) -> ModelParams:
    """Exact gradients of the batch loss via backpropagation through time.

    ``batch`` is (inputs (N, T, F), labels (N,)); the returned structure
    mirrors ModelParams.
    """
    inputs, labels = batch
    inputs = np.asarray(inputs, dtype=float)
    labels = np.asarray(labels, dtype=float)
    if inputs.ndim != 3 or inputs.shape[0] == 0:
        raise ValueError("batch inputs must be a non-empty (N, T, F) array")
    n, t_len, _ = inputs.shape

    scores, (caches, denses, tops) = _forward_cached(inputs, params)
    grads = params.zeros_like()
    n_layers = len(params.layers)

    # dLoss/dz at the pre-sigmoid head is (score - y), weighted per cycle.
    clamped = np.clip(scores, SCORE_EPS, 1.0 - SCORE_EPS)
    dz_all = clamped - labels[:, None]
    if per_timestep:
        dz_all = dz_all / t_len
    else:
        mask = np.zeros((n, t_len))
        mask[:, -1] = 1.0
        dz_all = dz_all * mask

    dh_next = [np.zeros((n, params.hidden_size)) for _ in range(n_layers)]
    dc_next = [np.zeros((n, params.hidden_size)) for _ in range(n_layers)]

    for t in reversed(range(t_len)):
        dz = dz_all[:, t]
        dense = denses[t]
        h_top = tops[t]
        da_dense = (dz[:, None] * params.head_w[None, :]) * (1.0 - dense**2)
        grads.head_w += dense.T @ dz
        grads.head_b += dz.sum(keepdims=True)
        grads.dense_w += da_dense.T @ h_top
        grads.dense_b += da_dense.sum(axis=0)
        dh_above = da_dense @ params.dense_w

        for li in reversed(range(n_layers)):
            layer = params.layers[li]
            glayer = grads.layers[li]
            x, h_prev, c_prev, i, g, f, o, c, tanh_c = caches[t][li]
            dh = dh_above + dh_next[li]
            do = dh * tanh_c
            dc = dc_next[li] + dh * o * (1.0 - tanh_c**2)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next[li] = dc * f

            da_i = di * i * (1.0 - i)
            da_g = dg * (1.0 - g**2)
            da_f = df * f * (1.0 - f)
            da_o = do * o * (1.0 - o)

            dx = np.zeros_like(x)
            dh_prev = np.zeros_like(h_prev)
            for da, gate, ggate in ((da_i, layer.inp, glayer.inp),
                                    (da_g, layer.cand, glayer.cand),
                                    (da_f, layer.forget, glayer.forget),
                                    (da_o, layer.out, glayer.out)):
                ggate.w += da.T @ x
                ggate.u += da.T @ h_prev
                ggate.b += da.sum(axis=0)
                dx += da @ gate.w
                dh_prev += da @ gate.u
            dh_next[li] = dh_prev
            dh_above = dx
    return grads


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int
    hyper: AdamHyper


def init_adam_state(params: ModelParams, hyper: AdamHyper = AdamHyper()) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(arr) for name, arr in params.named_arrays()},
        v={name: np.zeros_like(arr) for name, arr in params.named_arrays()},
        step=0,
        hyper=hyper,
    )


def adam_update(params: ModelParams, grads: ModelParams,
                state: AdamState) -> tuple[ModelParams, AdamState]:
    """Standard Adam with bias correction; returns fresh params and state."""
    hy = state.hyper
    t = state.step + 1
    new_params = params.copy()
    new_m, new_v = {}, {}
    grad_map = dict(grads.named_arrays())
    for name, arr in new_params.named_arrays():
        g = grad_map[name]
        m = hy.beta1 * state.m[name] + (1 - hy.beta1) * g
        v = hy.beta2 * state.v[name] + (1 - hy.beta2) * g**2
        m_hat = m / (1 - hy.beta1**t)
        v_hat = v / (1 - hy.beta2**t)
        arr -= hy.lr * m_hat / (np.sqrt(v_hat) + hy.eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(new_m, new_v, t, hy)


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 100
    batch_size: int = 32
    patience: int = 10
    seed: int = 0
    per_timestep_loss: bool = True
    hidden_size: int = 128
    dense_size: int = 32
    learning_rate: float = 1e-3

    def __post_init__(self):
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class EarlyStopper:
    """Stop after ``patience`` consecutive epochs without improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch: int | None = None
        self.streak = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch's validation loss; True means stop now."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.streak = 0
            return False
        self.streak += 1
        return self.streak >= self.patience


@dataclass
class TrainHistory:
    epochs: list[tuple[int, float, float]] = field(default_factory=list)  # (epoch, train, valid)
    best_epoch: int = 0
    stopped_epoch: int = 0


def train_model(train, valid, config: TrainConfig) -> tuple[ModelParams, TrainHistory]:
    """Mini-batch Adam with early stopping on validation loss.

    ``train`` and ``valid`` are Datasets (or anything exposing
    feature_matrix()/labels()); the parameters from the best validation epoch
    are returned. Identical data, config, and seed reproduce the model
    bit-for-bit.
    """
    x_train = train.feature_matrix()
    y_train = train.labels()
    x_valid = valid.feature_matrix()
    y_valid = valid.labels()
    if x_train.shape[0] == 0 or x_valid.shape[0] == 0:
        raise ValueError("training and validation sets must be non-empty")
    if x_train.shape[2] != x_valid.shape[2]:
        raise ValueError("train/valid feature widths differ")

    rng = np.random.default_rng(config.seed)
    params = init_model(x_train.shape[2], config.hidden_size, config.dense_size,
                        seed=config.seed)
    adam = init_adam_state(params, AdamHyper(lr=config.learning_rate))
    stopper = EarlyStopper(config.patience)
    history = TrainHistory()
    best_params = params.copy()
    n = x_train.shape[0]

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            ix = order[start:start + config.batch_size]
            grads = backprop_gradients((x_train[ix], y_train[ix]), params,
                                       config.per_timestep_loss)
            params, adam = adam_update(params, grads, adam)
        train_loss = batch_bce_loss(forward_scores(x_train, params), y_train,
                                    config.per_timestep_loss) / n
        valid_loss = batch_bce_loss(forward_scores(x_valid, params), y_valid,
                                    config.per_timestep_loss) / x_valid.shape[0]
        history.epochs.append((epoch, train_loss, valid_loss))
        improved = valid_loss < stopper.best
        stop = stopper.update(epoch, valid_loss)
        if improved:
            best_params = params.copy()
        if stop:
            break
    history.best_epoch = stopper.best_epoch or 0
    history.stopped_epoch = history.epochs[-1][0] if history.epochs else 0
    return best_params, history


def gradient_check(params: ModelParams, batch, step: float = 1e-5,
                   per_timestep: bool = True, analytic_scale: float = 1.0,
                   floor: float = 1e-6) -> float:
    """Max relative error of BPTT gradients against central finite differences.

    ``floor`` bounds the relative-error denominator from below: central
    differences at step 1e-5 on an O(1) loss carry ~1e-11 of roundoff, so
    on coordinates whose true gradient is below ~1e-7 the quotient would
    measure that noise instead of gradient correctness. Exactly-zero
    gradients still contribute zero error.

    ``analytic_scale`` deliberately mis-scales the analytic gradient so the
    check itself can be validated; leave at 1.0 for real use.
    """
    inputs, labels = batch
    analytic = backprop_gradients((inputs, labels), params, per_timestep)
    analytic_map = {name: arr * analytic_scale for name, arr in analytic.named_arrays()}

    work = params.copy()
    arrays = dict(work.named_arrays())
    worst = 0.0
    for name, arr in arrays.items():
        flat = arr.ravel()
        a_flat = analytic_map[name].ravel()
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + step
            up = batch_bce_loss(forward_scores(inputs, work), labels, per_timestep)
            flat[k] = orig - step
            down = batch_bce_loss(forward_scores(inputs, work), labels, per_timestep)
            flat[k] = orig
            numeric = (up - down) / (2 * step)
            denom = max(abs(a_flat[k]), abs(numeric), floor)
            rel = abs(a_flat[k] - numeric) / denom
            if rel > worst:
                worst = rel
    return worst


# ---------------------------------------------------------------------------
# Persistence: versioned JSON with full-precision row-major tensor values.

def save_model(params: ModelParams, path) -> None:
    doc = {
        "format": "tsakit-model",
        "version": MODEL_FORMAT_VERSION,
        "input_size": params.input_size,
        "hidden_size": params.hidden_size,
        "dense_size": params.dense_size,
        "num_layers": len(params.layers),
        "tensors": [
            {"name": name, "shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.named_arrays()
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path) -> ModelParams:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "tsakit-model":
        raise ValueError(f"{path} is not a model file")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    params = init_model(doc["input_size"], doc["hidden_size"], doc["dense_size"],
                        num_layers=doc["num_layers"], seed=0)
    expected = {name: arr.shape for name, arr in params.named_arrays()}
    loaded = {}
    for rec in doc["tensors"]:
        name = rec["name"]
        shape = tuple(rec["shape"])
        if name not in expected:
            raise ValueError(f"unexpected tensor {name!r} in {path}")
        if shape != expected[name]:
            raise ValueError(f"tensor {name!r} shape {shape} != expected {expected[name]}")
        loaded[name] = np.array(rec["data"], dtype=float).reshape(shape)
    missing = set(expected) - set(loaded)
    if missing:
        raise ValueError(f"model file missing tensors: {sorted(missing)}")
    for name, arr in params.named_arrays():
        arr[...] = loaded[name]
    return params
