"""Stacked LSTM with linear output head, exact BPTT, and Adam.

All arithmetic is double precision so finite-difference gradient checks
are meaningful.  The cell update follows the coupled-gate convention

    f, i, o = sigmoid(W_* [h, x] + b_*)
    g       = tanh(W_s [h, x] + b_s)
    S       = (1 - f) * S_prev + i * g
    h       = o * tanh(S)

with ``forget_mode="standard"`` switching the state update to the
textbook ``f * S_prev + i * g`` form.

Forward passes operate on batched arrays (time, batch, features); the
step-level entry points are exposed so callers can interleave cell
updates with other dynamics and still run an exact reverse sweep.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _binio
from .errors import DomainError, FileFormatError

FORGET_MODES = ("one_minus", "standard")


def _sigmoid(z):
    # numerically safe piecewise form
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class LayerParams:
    """Gate weights acting on the concatenation [h_prev, x], plus biases."""

    w_f: np.ndarray
    w_i: np.ndarray
    w_o: np.ndarray
    w_s: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_s: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_f.shape[1] - self.w_f.shape[0]


@dataclass
class LstmParams:
    """All trainable tensors of the stacked LSTM and its linear head."""

    layers: list
    v: np.ndarray                  # (output, hidden_top)
    d: np.ndarray                  # (output,)
    forget_mode: str = "one_minus"

    def __post_init__(self):
        if self.forget_mode not in FORGET_MODES:
            raise DomainError(f"forget_mode must be one of {FORGET_MODES}")

    @property
    def input_size(self) -> int:
        return self.layers[0].input_size

    @property
    def output_size(self) -> int:
        return self.v.shape[0]

    @property
    def hidden_sizes(self) -> list:
        return [lay.hidden_size for lay in self.layers]

    def tensors(self):
        """Yield (name, array) in a fixed canonical order."""
        for i, lay in enumerate(self.layers):
            for gate in ("w_f", "w_i", "w_o", "w_s", "b_f", "b_i", "b_o", "b_s"):
                yield f"layer{i}.{gate}", getattr(lay, gate)
        yield "head.v", self.v
        yield "head.d", self.d

    def arrays(self) -> list:
        return [a for _, a in self.tensors()]

    def zeros_like(self) -> "LstmParams":
        return self.map(np.zeros_like)

    def copy(self) -> "LstmParams":
        return self.map(np.copy)

    def map(self, fn) -> "LstmParams":
        layers = [LayerParams(*(fn(getattr(lay, g)) for g in
                                ("w_f", "w_i", "w_o", "w_s",
                                 "b_f", "b_i", "b_o", "b_s")))
                  for lay in self.layers]
        return LstmParams(layers, fn(self.v), fn(self.d), self.forget_mode)

    def zip_map(self, fn, other: "LstmParams") -> "LstmParams":
        layers = [LayerParams(*(fn(getattr(a, g), getattr(b, g)) for g in
                                ("w_f", "w_i", "w_o", "w_s",
                                 "b_f", "b_i", "b_o", "b_s")))
                  for a, b in zip(self.layers, other.layers)]
        return LstmParams(layers, fn(self.v, other.v), fn(self.d, other.d),
                          self.forget_mode)


def init_params(input_size: int, hidden_sizes, output_size: int, seed: int,
                forget_mode: str = "one_minus") -> LstmParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    layers = []
    prev = input_size
    for h in hidden_sizes:
        fan = h + prev
        bound = 1.0 / np.sqrt(fan)
        ws = [rng.uniform(-bound, bound, (h, fan)) for _ in range(4)]
        bs = [np.zeros(h) for _ in range(4)]
        layers.append(LayerParams(*ws, *bs))
        prev = h
    bound = 1.0 / np.sqrt(prev)
    v = rng.uniform(-bound, bound, (output_size, prev))
    return LstmParams(layers, v, np.zeros(output_size), forget_mode)


def init_state(params: LstmParams, batch_size: int | None = None) -> list:
    """Zero hidden and cell state for every layer."""
    shape = (lambda h: (h,)) if batch_size is None else (lambda h: (batch_size, h))
    return [(np.zeros(shape(h)), np.zeros(shape(h))) for h in params.hidden_sizes]


def lstm_cell_step(layer: LayerParams, x: np.ndarray, h_prev: np.ndarray,
                   s_prev: np.ndarray, forget_mode: str = "one_minus"):
    """One cell update.  Returns (h, S, cache) with the cache holding the
    intermediates the backward pass needs."""
    if x.shape[-1] != layer.input_size:
        raise DomainError(
            f"input width {x.shape[-1]} != layer input size {layer.input_size}")
    z = np.concatenate([h_prev, x], axis=-1)
    f = _sigmoid(z @ layer.w_f.T + layer.b_f)
    i = _sigmoid(z @ layer.w_i.T + layer.b_i)
    o = _sigmoid(z @ layer.w_o.T + layer.b_o)
    g = np.tanh(z @ layer.w_s.T + layer.b_s)
    if forget_mode == "one_minus":
        s = (1.0 - f) * s_prev + i * g
    else:
        s = f * s_prev + i * g
    ts = np.tanh(s)
    h = o * ts
    cache = (z, s_prev, f, i, o, g, ts)
    return h, s, cache


def _cell_backward(layer: LayerParams, cache, dh, ds, forget_mode, grads: LayerParams):
    """Reverse one cell update; returns (dx, dh_prev, ds_prev)."""
    z, s_prev, f, i, o, g, ts = cache
    do = dh * ts
    ds = ds + dh * o * (1.0 - ts * ts)
    if forget_mode == "one_minus":
        df = -ds * s_prev
    else:
        df = ds * s_prev
    di = ds * g
    dg = ds * i
    ds_prev = ds * (1.0 - f) if forget_mode == "one_minus" else ds * f
    dpf = df * f * (1.0 - f)
    dpi = di * i * (1.0 - i)
    dpo = do * o * (1.0 - o)
    dpg = dg * (1.0 - g * g)
    grads.w_f += dpf.T @ z
    grads.w_i += dpi.T @ z
    grads.w_o += dpo.T @ z
    grads.w_s += dpg.T @ z
    grads.b_f += dpf.sum(axis=0)
    grads.b_i += dpi.sum(axis=0)
    grads.b_o += dpo.sum(axis=0)
    grads.b_s += dpg.sum(axis=0)
    dz = dpf @ layer.w_f + dpi @ layer.w_i + dpo @ layer.w_o + dpg @ layer.w_s
    h = layer.hidden_size
    return dz[:, h:], dz[:, :h], ds_prev


def step_forward(params: LstmParams, x: np.ndarray, state: list):
    """Advance all layers one time step and apply the linear head.

    Returns (y, new_state, caches); `x` is (batch, input)."""
    caches = []
    new_state = []
    inp = x
    for layer, (h, s) in zip(params.layers, state):
        h_new, s_new, cache = lstm_cell_step(layer, inp, h, s, params.forget_mode)
        caches.append(cache)
        new_state.append((h_new, s_new))
        inp = h_new
    y = inp @ params.v.T + params.d
    caches.append(inp)  # top hidden values, for the head gradient
    return y, new_state, caches


def step_backward(params: LstmParams, caches, dy: np.ndarray, carry: list,
                  grads: LstmParams):
    """Reverse one step_forward call.

    `carry` holds per-layer (dh, dS) gradients flowing from later time
    steps and is replaced by the gradients for the previous step;
    parameter gradients accumulate into `grads`.  Returns (dx, carry).
    """
    h_top = caches[-1]
    grads.v += dy.T @ h_top
    grads.d += dy.sum(axis=0)
    dh_extra = dy @ params.v
    new_carry = [None] * len(params.layers)
    d_input = None
    for li in reversed(range(len(params.layers))):
        dh, ds = carry[li]
        dh = dh + dh_extra if li == len(params.layers) - 1 else dh + d_input
        dx, dh_prev, ds_prev = _cell_backward(
            params.layers[li], caches[li], dh, ds, params.forget_mode,
            grads.layers[li])
        new_carry[li] = (dh_prev, ds_prev)
        d_input = dx
    return d_input, new_carry


def _promote(xs):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 2:
        return xs[:, None, :], True
    if xs.ndim == 3:
        return xs, False
    raise DomainError(f"sequence array must be 2- or 3-dimensional, got {xs.ndim}")


def lstm_forward(params: LstmParams, xs: np.ndarray, state: list | None = None):
    """Run the full stack over a sequence.

    `xs` is (time, input) or (time, batch, input).  Returns
    (ys, final_state, tape) where the tape is what bptt_from_tape needs.
    """
    xs, squeeze = _promote(xs)
    t_len, batch, _ = xs.shape
    if t_len == 0:
        raise DomainError("empty input sequence")
    if state is None:
        state = init_state(params, batch)
    ys = np.empty((t_len, batch, params.output_size))
    tape = []
    for t in range(t_len):
        y, state, caches = step_forward(params, xs[t], state)
        ys[t] = y
        tape.append(caches)
    if squeeze:
        ys = ys[:, 0, :]
        state = [(h[0], s[0]) for h, s in state]
    return ys, state, tape


def bptt_from_tape(params: LstmParams, tape: list, dys: np.ndarray):
    """Reverse sweep over a recorded forward tape.

    Returns (grads, dxs, dstate0): parameter gradients, gradients with
    respect to every input step, and with respect to the initial state.
    """
    dys, squeeze = _promote(dys)
    t_len, batch, _ = dys.shape
    grads = params.zeros_like()
    carry = [(np.zeros((batch, h)), np.zeros((batch, h)))
             for h in params.hidden_sizes]
    dxs = np.empty((t_len, batch, params.input_size))
    for t in reversed(range(t_len)):
        dx, carry = step_backward(params, tape[t], dys[t], carry, grads)
        dxs[t] = dx
    if squeeze:
        dxs = dxs[:, 0, :]
        carry = [(dh[0], ds[0]) for dh, ds in carry]
    return grads, dxs, carry


def bptt_gradients(params: LstmParams, xs: np.ndarray, dys: np.ndarray,
                   state: list | None = None) -> LstmParams:
    """Exact reverse-mode parameter gradients for loss gradients `dys`.

    `dys[t]` is the gradient of the loss with respect to the step-t
    output.
    """
    _, _, tape = lstm_forward(params, xs, state)
    grads, _, _ = bptt_from_tape(params, tape, dys)
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators shaped like the parameters."""

    m: LstmParams
    v: LstmParams
    t: int = 0
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: LstmParams, alpha: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(params.zeros_like(), params.zeros_like(), 0,
                     alpha, beta1, beta2, eps)


def adam_update(params: LstmParams, grads: LstmParams, opt: AdamState):
    """One bias-corrected Adam step.  Returns (new_params, new_opt)."""
    t = opt.t + 1
    b1, b2 = opt.beta1, opt.beta2
    m = opt.m.zip_map(lambda m_, g: b1 * m_ + (1 - b1) * g, grads)
    v = opt.v.zip_map(lambda v_, g: b2 * v_ + (1 - b2) * g * g, grads)
    c1 = 1.0 / (1.0 - b1**t)
    c2 = 1.0 / (1.0 - b2**t)
    upd = m.zip_map(lambda m_, v_: opt.alpha * (m_ * c1) / (np.sqrt(v_ * c2) + opt.eps), v)
    new_params = params.zip_map(lambda p, u: p - u, upd)
    return new_params, AdamState(m, v, t, opt.alpha, b1, b2, opt.eps)


# ---------------------------------------------------------------------------
# checkpoint file format


def checkpoint_write(path, params: LstmParams, opt: AdamState | None = None,
                     meta: dict | None = None):
    """Write parameters (and optionally optimizer state) to a checkpoint.

    Layout: magic "MZNN", version u32, length-prefixed JSON manifest
    (tensor names/shapes, gate convention, optimizer hyperparameters,
    free-form metadata), then flat little-endian f64 tensors in manifest
    order -- parameters, then Adam first and second moments when present
    -- and a CRC32 trailer over the tensor bytes.
    """
    manifest = {
        "tensors": [{"name": n, "shape": list(a.shape)}
                    for n, a in params.tensors()],
        "forget_mode": params.forget_mode,
        "input_size": params.input_size,
        "hidden_sizes": params.hidden_sizes,
        "output_size": params.output_size,
        "adam": None if opt is None else {
            "t": opt.t, "alpha": opt.alpha, "beta1": opt.beta1,
            "beta2": opt.beta2, "eps": opt.eps},
        "meta": meta,
    }
    blob = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_binio.CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", _binio.CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        body = _binio.CrcWriter(fh)
        groups = [params] if opt is None else [params, opt.m, opt.v]
        for group in groups:
            for _, arr in group.tensors():
                body.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        fh.write(struct.pack("<I", body.crc))


def _params_from_manifest(manifest, tensor_map):
    hidden = manifest["hidden_sizes"]
    layers = []
    for i in range(len(hidden)):
        vals = [tensor_map[f"layer{i}.{g}"] for g in
                ("w_f", "w_i", "w_o", "w_s", "b_f", "b_i", "b_o", "b_s")]
        layers.append(LayerParams(*vals))
    return LstmParams(layers, tensor_map["head.v"], tensor_map["head.d"],
                      manifest["forget_mode"])


def checkpoint_read(path):
    """Read a checkpoint; returns (params, opt_or_None, meta_or_None)."""
    with open(path, "rb") as fh:
        _binio.check_magic(fh, _binio.CHECKPOINT_MAGIC)
        version, mlen = struct.unpack(
            "<II", _binio.read_exact(fh, 8, "checkpoint header"))
        if version != _binio.CHECKPOINT_VERSION:
            raise FileFormatError(
                f"unsupported checkpoint version {version}, expected "
                f"{_binio.CHECKPOINT_VERSION}")
        try:
            manifest = json.loads(_binio.read_exact(fh, mlen, "manifest").decode())
        except ValueError as exc:
            raise FileFormatError(f"manifest is not valid JSON: {exc}") from exc
        body = _binio.CrcReader(fh)

        def read_group():
            out = {}
            for entry in manifest["tensors"]:
                name, shape = entry["name"], tuple(entry["shape"])
                n = int(np.prod(shape)) if shape else 1
                raw = body.read_exact(8 * n, f"tensor {name}")
                out[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
            return out

        params = _params_from_manifest(manifest, read_group())
        opt = None
        if manifest.get("adam") is not None:
            a = manifest["adam"]
            m = _params_from_manifest(manifest, read_group())
            v = _params_from_manifest(manifest, read_group())
            opt = AdamState(m, v, a["t"], a["alpha"], a["beta1"], a["beta2"],
                            a["eps"])
        (crc,) = struct.unpack("<I", _binio.read_exact(fh, 4, "CRC trailer"))
        if crc != body.crc:
            raise FileFormatError(
                f"checkpoint body CRC mismatch: stored {crc:#010x}, "
                f"computed {body.crc:#010x}")
    return params, opt, manifest.get("meta")
