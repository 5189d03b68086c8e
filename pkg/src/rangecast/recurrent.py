"""Vanilla RNN and single-layer LSTM written directly in numpy.

The RNN exists to make the gradient-product argument executable
(:func:`rnn_gradient_flow`). The LSTM is the forecasting model: a gate cell
operating on ``[h_{t-1}, x_t]``, a linear readout of the final hidden state,
hand-written backpropagation through time, and an Adam trainer.

Shapes follow one convention throughout: a batch of windows is
``(batch, steps, features)``, a batch of targets is ``(batch, outputs)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import ParameterError, SeededRng, ShapeError, apply_activation, sigmoid

log = logging.getLogger(__name__)

LOSSES = ("mae", "sse")


class TrainingError(RuntimeError):
    """Raised when training produces a non-finite loss."""


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------


def sse_loss(y, o) -> float:
    """Half the summed squared error, ``0.5 * sum((y - o)**2)``."""
    y = np.asarray(y, dtype=np.float64).ravel()
    o = np.asarray(o, dtype=np.float64).ravel()
    if y.shape != o.shape:
        raise ShapeError(f"length mismatch: {y.shape} vs {o.shape}")
    d = y - o
    return 0.5 * float(d @ d)


def mae_loss(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ShapeError(f"length mismatch: {y.shape} vs {y_hat.shape}")
    if y.size == 0:
        raise ParameterError("mae_loss needs at least one value")
    return float(np.mean(np.abs(y - y_hat)))


def _batch_loss(y_hat: np.ndarray, y: np.ndarray, loss: str) -> tuple[float, np.ndarray]:
    """Batch-mean loss and its gradient w.r.t. ``y_hat``.

    MAE averages over every output of every sample; SSE is the per-sample
    half squared error averaged over the batch. The MAE subgradient at a
    zero residual is 0.
    """
    r = y_hat - y
    n = y.shape[0]
    if loss == "mae":
        return float(np.mean(np.abs(r))), np.sign(r) / r.size
    if loss == "sse":
        return 0.5 * float(np.sum(r * r)) / n, r / n
    raise ParameterError(f"unknown loss {loss!r}; expected one of {LOSSES}")


# --------------------------------------------------------------------------
# Vanilla RNN
# --------------------------------------------------------------------------


@dataclass
class RnnParams:
    W_x: np.ndarray
    W_s: np.ndarray
    b_1: np.ndarray
    W_0: np.ndarray
    b_2: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.W_x = np.atleast_2d(np.asarray(self.W_x, dtype=np.float64))
        self.W_s = np.atleast_2d(np.asarray(self.W_s, dtype=np.float64))
        self.W_0 = np.atleast_2d(np.asarray(self.W_0, dtype=np.float64))
        self.b_1 = np.atleast_1d(np.asarray(self.b_1, dtype=np.float64))
        self.b_2 = np.atleast_1d(np.asarray(self.b_2, dtype=np.float64))
        n = self.W_s.shape[0]
        if self.W_s.shape != (n, n):
            raise ShapeError(f"W_s must be square, got {self.W_s.shape}")
        if self.W_x.shape[0] != n or self.W_0.shape[1] != n or self.b_1.shape != (n,):
            raise ShapeError(
                f"inconsistent RNN shapes W_x={self.W_x.shape} W_s={self.W_s.shape} "
                f"W_0={self.W_0.shape} b_1={self.b_1.shape}"
            )
        if self.b_2.shape != (self.W_0.shape[0],):
            raise ShapeError(f"b_2 shape {self.b_2.shape} does not match W_0 {self.W_0.shape}")
        if self.activation not in ("linear", "tanh"):
            raise ParameterError(f"RNN activation must be linear or tanh, got {self.activation!r}")

    @classmethod
    def scalar(cls, w_x=1.0, w_s=1.0, b_1=0.0, w_0=1.0, b_2=0.0, activation="linear"):
        return cls([[w_x]], [[w_s]], [b_1], [[w_0]], [b_2], activation)


@dataclass
class RnnTrace:
    states: list
    outputs: list
    initial_state: np.ndarray
    pre_activations: list = field(default_factory=list)


def rnn_forward(params: RnnParams, inputs, s0=None) -> RnnTrace:
    """Run ``S_t = act(W_x X_t + W_s S_{t-1} + b_1)``, ``O_t = W_0 S_t + b_2``."""
    n = params.W_s.shape[0]
    s = np.zeros(n) if s0 is None else np.atleast_1d(np.asarray(s0, dtype=np.float64))
    if s.shape != (n,):
        raise ShapeError(f"initial state shape {s.shape} does not match state size {n}")
    trace = RnnTrace([], [], s.copy())
    for x in inputs:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        if x.shape != (params.W_x.shape[1],):
            raise ShapeError(f"input shape {x.shape} does not match W_x {params.W_x.shape}")
        a = params.W_x @ x + params.W_s @ s + params.b_1
        s = apply_activation(a, params.activation)
        trace.pre_activations.append(a)
        trace.states.append(s)
        trace.outputs.append(params.W_0 @ s + params.b_2)
    return trace


@dataclass
class GradientFlow:
    """Per-step Jacobians ``dS_t/dS_{t-1}`` and their running products.

    ``cumulative[k]`` is ``dS_{k+2}/dS_1``; ``cumulative[-1]`` is the full
    ``dS_T/dS_1``.
    """

    factors: list
    cumulative: list

    @property
    def norms(self) -> list[float]:
        return [float(np.linalg.norm(c, 2)) for c in self.cumulative]

    @property
    def final(self) -> np.ndarray:
        return self.cumulative[-1]


def rnn_gradient_flow(params: RnnParams, seq_len: int, inputs=None, s0=None) -> GradientFlow:
    """Jacobian chain of the state recurrence along one forward pass.

    Inputs default to zeros. With a linear activation every factor is
    ``W_s`` exactly, so the cumulative product is a matrix power.
    """
    if seq_len < 2:
        raise ParameterError(f"seq_len must be >= 2, got {seq_len}")
    if inputs is None:
        inputs = np.zeros((seq_len, params.W_x.shape[1]))
    inputs = list(inputs)
    if len(inputs) != seq_len:
        raise ShapeError(f"got {len(inputs)} inputs for seq_len={seq_len}")
    trace = rnn_forward(params, inputs, s0)
    factors, cumulative = [], []
    running = None
    for t in range(1, seq_len):
        d = apply_activation(trace.pre_activations[t], params.activation, derivative=True)
        jac = d[:, None] * params.W_s
        factors.append(jac)
        running = jac if running is None else jac @ running
        cumulative.append(running)
    return GradientFlow(factors, cumulative)


# --------------------------------------------------------------------------
# LSTM
# --------------------------------------------------------------------------

GATE_NAMES = ("f", "i", "o", "c")
PARAM_NAMES = ("W_f", "b_f", "W_i", "b_i", "W_o", "b_o", "W_c", "b_c", "W_y", "b_y")


@dataclass
class LstmParams:
    """Gate weights act on the concatenation ``[h_{t-1}, x_t]``.

    Each gate matrix is ``hidden_size x (hidden_size + input_size)``; the
    readout ``W_y`` maps the last hidden state to ``output_size`` values.
    """

    W_f: np.ndarray
    b_f: np.ndarray
    W_i: np.ndarray
    b_i: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray
    W_c: np.ndarray
    b_c: np.ndarray
    W_y: np.ndarray
    b_y: np.ndarray

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64))
        h, width = self.W_f.shape
        for g in GATE_NAMES:
            w, b = getattr(self, "W_" + g), getattr(self, "b_" + g)
            if w.shape != (h, width) or b.shape != (h,):
                raise ShapeError(f"gate {g} has shapes {w.shape}/{b.shape}, expected {(h, width)}/{(h,)}")
        if width <= h:
            raise ShapeError(f"gate width {width} leaves no room for inputs with hidden size {h}")
        if self.W_y.ndim != 2 or self.W_y.shape[1] != h or self.b_y.shape != (self.W_y.shape[0],):
            raise ShapeError(f"readout shapes W_y={self.W_y.shape} b_y={self.b_y.shape} invalid for hidden {h}")

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[0]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[1] - self.W_f.shape[0]

    @property
    def output_size(self) -> int:
        return self.W_y.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "LstmParams":
        return LstmParams(**{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self) -> "LstmParams":
        return LstmParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def num_parameters(self) -> int:
        return sum(v.size for v in self.arrays().values())

    @classmethod
    def zeros(cls, hidden_size: int, input_size: int, output_size: int = 1) -> "LstmParams":
        width = hidden_size + input_size
        kw = {}
        for g in GATE_NAMES:
            kw["W_" + g] = np.zeros((hidden_size, width))
            kw["b_" + g] = np.zeros(hidden_size)
        return cls(**kw, W_y=np.zeros((output_size, hidden_size)), b_y=np.zeros(output_size))

    @classmethod
    def init(
        cls,
        hidden_size: int,
        input_size: int,
        output_size: int = 1,
        seed: int = 0,
        forget_bias: float = 1.0,
    ) -> "LstmParams":
        """Uniform ``+-1/sqrt(fan_in)`` weights, zero biases, forget bias raised."""
        if hidden_size < 1 or input_size < 1 or output_size < 1:
            raise ParameterError("layer sizes must be positive")
        rng = SeededRng(seed)
        p = cls.zeros(hidden_size, input_size, output_size)
        bound = 1.0 / math.sqrt(hidden_size + input_size)
        for g in GATE_NAMES:
            getattr(p, "W_" + g)[...] = rng.uniform(-bound, bound, (hidden_size, hidden_size + input_size))
        p.b_f[...] = forget_bias
        p.W_y[...] = rng.uniform(-1.0 / math.sqrt(hidden_size), 1.0 / math.sqrt(hidden_size), (output_size, hidden_size))
        return p


@dataclass
class GateRecord:
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    candidate: np.ndarray


def lstm_cell_step(params: LstmParams, x_t, h_prev, c_prev):
    """One cell update; works on single vectors or on row-stacked batches."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    H = params.hidden_size
    if x_t.shape[-1] != params.input_size or h_prev.shape[-1] != H or c_prev.shape != h_prev.shape:
        raise ShapeError(
            f"cell got x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for input_size={params.input_size}, hidden_size={H}"
        )
    z = np.concatenate([h_prev, x_t], axis=-1)
    f = sigmoid(z @ params.W_f.T + params.b_f)
    i = sigmoid(z @ params.W_i.T + params.b_i)
    o = sigmoid(z @ params.W_o.T + params.b_o)
    g = np.tanh(z @ params.W_c.T + params.b_c)
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, GateRecord(f, i, o, g)


@dataclass
class LstmTrace:
    """Everything computed on one forward pass.

    Arrays are indexed ``[step]`` for a single window or ``[step, sample]``
    for a batch. ``c[0]``/``h[0]`` are the zero initial states, so
    ``c[t+1]`` is the cell state after step ``t``.
    """

    z: np.ndarray
    f: np.ndarray
    i: np.ndarray
    o: np.ndarray
    candidate: np.ndarray
    c: np.ndarray
    h: np.ndarray
    prediction: np.ndarray


def _check_windows(params: LstmParams, windows) -> np.ndarray:
    X = np.asarray(windows, dtype=np.float64)
    if X.ndim != 3:
        raise ShapeError(f"expected (batch, steps, features) windows, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ParameterError("batch is empty")
    if X.shape[1] == 0:
        raise ParameterError("window is empty")
    if X.shape[2] != params.input_size:
        raise ShapeError(f"window has {X.shape[2]} features, model expects {params.input_size}")
    return X


def forward_batch(params: LstmParams, windows) -> LstmTrace:
    """Unroll the cell over a ``(batch, steps, features)`` array from zero state."""
    X = _check_windows(params, windows)
    B, T, _ = X.shape
    H = params.hidden_size
    z = np.empty((T, B, H + params.input_size))
    gates = {k: np.empty((T, B, H)) for k in ("f", "i", "o", "candidate")}
    c = np.zeros((T + 1, B, H))
    h = np.zeros((T + 1, B, H))
    for t in range(T):
        h_t, c_t, rec = lstm_cell_step(params, X[:, t, :], h[t], c[t])
        z[t, :, :H] = h[t]
        z[t, :, H:] = X[:, t, :]
        gates["f"][t], gates["i"][t], gates["o"][t], gates["candidate"][t] = rec.f, rec.i, rec.o, rec.candidate
        c[t + 1], h[t + 1] = c_t, h_t
    pred = h[T] @ params.W_y.T + params.b_y
    return LstmTrace(z, gates["f"], gates["i"], gates["o"], gates["candidate"], c, h, pred)


def lstm_forward(params: LstmParams, window) -> LstmTrace:
    """Forward pass over a single ``(steps, features)`` window."""
    W = np.asarray(window, dtype=np.float64)
    if W.ndim == 1:
        W = W.reshape(-1, 1)
    if W.shape[0] == 0:
        raise ParameterError("window is empty")
    tr = forward_batch(params, W[None, :, :])
    return LstmTrace(
        tr.z[:, 0], tr.f[:, 0], tr.i[:, 0], tr.o[:, 0], tr.candidate[:, 0], tr.c[:, 0], tr.h[:, 0], tr.prediction[0]
    )


def predict(params: LstmParams, windows, batch_size: int = 512) -> np.ndarray:
    X = _check_windows(params, windows)
    out = [forward_batch(params, X[s : s + batch_size]).prediction for s in range(0, X.shape[0], batch_size)]
    return np.concatenate(out, axis=0)


def memory_retention(trace: LstmTrace) -> np.ndarray:
    """``dc_T/dc_1`` along the cell line: the product of forget gates after step 1.

    This is the direct (additive) path the LSTM uses to carry gradients; it
    is the full derivative when the gate weights are zero.
    """
    return np.prod(trace.f[1:], axis=0)


def bptt_gradients(params: LstmParams, windows, targets, loss: str = "mae", trace: LstmTrace | None = None):
    """Batch-mean loss and its gradient for every parameter.

    Returns ``(loss_value, grads)`` where ``grads`` is an :class:`LstmParams`
    holding derivatives of the same shapes.
    """
    if trace is None:
        trace = forward_batch(params, windows)
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if Y.shape != trace.prediction.shape:
        raise ShapeError(f"targets shape {Y.shape} does not match predictions {trace.prediction.shape}")
    value, d_pred = _batch_loss(trace.prediction, Y, loss)

    H = params.hidden_size
    T = trace.f.shape[0]
    g = params.zeros_like()
    g.W_y[...] = d_pred.T @ trace.h[T]
    g.b_y[...] = d_pred.sum(axis=0)
    dh = d_pred @ params.W_y
    dc = np.zeros_like(dh)
    for t in range(T - 1, -1, -1):
        f, i, o, cand = trace.f[t], trace.i[t], trace.o[t], trace.candidate[t]
        tc = np.tanh(trace.c[t + 1])
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        df = dc * trace.c[t]
        di = dc * cand
        dg = dc * i
        dc = dc * f
        dz_f = df * f * (1.0 - f)
        dz_i = di * i * (1.0 - i)
        dz_o = do * o * (1.0 - o)
        dz_c = dg * (1.0 - cand * cand)
        z = trace.z[t]
        g.W_f += dz_f.T @ z
        g.W_i += dz_i.T @ z
        g.W_o += dz_o.T @ z
        g.W_c += dz_c.T @ z
        g.b_f += dz_f.sum(axis=0)
        g.b_i += dz_i.sum(axis=0)
        g.b_o += dz_o.sum(axis=0)
        g.b_c += dz_c.sum(axis=0)
        dh = (dz_f @ params.W_f + dz_i @ params.W_i + dz_o @ params.W_o + dz_c @ params.W_c)[:, :H]
    return value, g


def batch_loss(params: LstmParams, windows, targets, loss: str = "mae") -> float:
    pred = forward_batch(params, windows).prediction
    Y = np.asarray(targets, dtype=np.float64).reshape(pred.shape)
    return _batch_loss(pred, Y, loss)[0]


# --------------------------------------------------------------------------
# Gradient checking
# --------------------------------------------------------------------------


@dataclass
class GradientCheckReport:
    max_relative_error: float
    worst_parameter: str
    worst_index: tuple
    analytic: float
    numeric: float
    per_parameter: dict

    @property
    def passed(self) -> bool:
        return self.max_relative_error < 1e-5


GRADCHECK_FLOOR = 1e-5


def relative_error(a, n, floor: float = GRADCHECK_FLOOR):
    """``|a - n| / max(|a|, |n|, floor)``.

    Central differences at ``h=1e-5`` on an O(1) loss carry ~1e-11 of
    roundoff, so coordinates smaller than ``floor`` are effectively judged on
    absolute error.
    """
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def numeric_gradients(params: LstmParams, windows, targets, loss: str = "mae", epsilon: float = 1e-5) -> LstmParams:
    """Central finite differences of the batch loss, one coordinate at a time."""
    probe = params.copy()
    out = params.zeros_like()
    for name in PARAM_NAMES:
        arr = getattr(probe, name)
        grad = getattr(out, name)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + epsilon
            up = batch_loss(probe, windows, targets, loss)
            arr[idx] = old - epsilon
            down = batch_loss(probe, windows, targets, loss)
            arr[idx] = old
            grad[idx] = (up - down) / (2.0 * epsilon)
    return out


def gradient_check(
    params: LstmParams,
    windows,
    targets,
    loss: str = "mae",
    epsilon: float = 1e-5,
    analytic: LstmParams | None = None,
    floor: float = GRADCHECK_FLOOR,
) -> GradientCheckReport:
    """Compare analytic BPTT gradients with central differences.

    ``analytic`` may be supplied to check an externally computed gradient
    (this is how fault injection is tested).
    """
    if not 1e-8 < epsilon < 1e-3:
        raise ParameterError(f"epsilon must lie in (1e-8, 1e-3), got {epsilon}")
    X = np.asarray(windows, dtype=np.float64)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ParameterError("gradient_check needs a nonempty batch of windows")
    if analytic is None:
        _, analytic = bptt_gradients(params, X, targets, loss)
    numeric = numeric_gradients(params, X, targets, loss, epsilon)
    worst = (-1.0, "", (), 0.0, 0.0)
    per = {}
    for name in PARAM_NAMES:
        a, n = getattr(analytic, name), getattr(numeric, name)
        err = relative_error(a, n, floor)
        k = np.unravel_index(int(np.argmax(err)), err.shape)
        per[name] = float(err[k])
        if err[k] > worst[0]:
            worst = (float(err[k]), name, tuple(int(v) for v in k), float(a[k]), float(n[k]))
    return GradientCheckReport(*worst, per_parameter=per)


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    validation_fraction: float = 0.1
    loss: str = "mae"
    hidden_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self):
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        # 0 is allowed: it freezes the parameters, which is useful as a control run.
        if not self.learning_rate >= 0 or not math.isfinite(self.learning_rate):
            raise ParameterError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.validation_fraction < 1:
            raise ParameterError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")
        if self.loss not in LOSSES:
            raise ParameterError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.hidden_size < 1:
            raise ParameterError(f"hidden_size must be >= 1, got {self.hidden_size}")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown training options: {sorted(unknown)}")
        return cls(**d).validate()


@dataclass
class EpochLog:
    epoch: int
    loss: float
    mae: float
    val_loss: float | None
    val_mae: float | None


class Adam:
    """Adam update over every array of an :class:`LstmParams`."""

    def __init__(self, params: LstmParams, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: LstmParams, grads: LstmParams):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name in PARAM_NAMES:
            g = getattr(grads, name)
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p = getattr(params, name)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _as_arrays(data):
    """Accept a WindowSet-like object or an ``(X, Y)`` pair."""
    if hasattr(data, "features_array"):
        return data.features_array(), data.targets_array()
    X, Y = data
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    return X, Y.reshape(len(Y), -1)


def train(params: LstmParams, config: TrainConfig, train_windows) -> tuple[LstmParams, list[EpochLog]]:
    """Mini-batch Adam on chronologically ordered windows.

    The last ``validation_fraction`` of the windows is held out (no
    shuffling across the boundary); the rest is reshuffled every epoch with a
    generator seeded from ``config.seed``. Returns a trained copy and the
    per-epoch log; the input params are left untouched.
    """
    config.validate()
    X, Y = _as_arrays(train_windows)
    if X.shape[0] == 0:
        raise ParameterError("training set is empty")
    if Y.shape[1] != params.output_size:
        raise ShapeError(f"targets have {Y.shape[1]} outputs, model has {params.output_size}")
    n_val = int(math.floor(X.shape[0] * config.validation_fraction))
    n_fit = X.shape[0] - n_val
    if n_fit < 1:
        raise ParameterError("validation split leaves no training windows")
    X_fit, Y_fit, X_val, Y_val = X[:n_fit], Y[:n_fit], X[n_fit:], Y[n_fit:]

    p = params.copy()
    opt = Adam(p, config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = SeededRng(config.seed).derive(1)
    logs = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n_fit)
        total = total_abs = 0.0
        for s in range(0, n_fit, config.batch_size):
            idx = order[s : s + config.batch_size]
            tr = forward_batch(p, X_fit[idx])
            value, grads = bptt_gradients(p, None, Y_fit[idx], config.loss, trace=tr)
            total += value * len(idx)
            total_abs += float(np.sum(np.abs(tr.prediction - Y_fit[idx]))) / Y.shape[1]
            opt.step(p, grads)
        loss, mae = total / n_fit, total_abs / n_fit
        val_loss = val_mae = None
        if n_val:
            pv = predict(p, X_val)
            val_loss = _batch_loss(pv, Y_val, config.loss)[0]
            val_mae = float(np.mean(np.abs(pv - Y_val)))
        if not all(math.isfinite(v) for v in (loss, mae) + ((val_loss, val_mae) if n_val else ())):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        logs.append(EpochLog(epoch, loss, mae, val_loss, val_mae))
        log.debug("epoch %d/%d loss=%.5f mae=%.5f val_mae=%s", epoch, config.epochs, loss, mae, val_mae)
    return p, logs


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------

CHECKPOINT_FORMAT = "rangecast-lstm-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: LstmParams, meta: dict | None = None) -> Path:
    """Write params as JSON; float ``repr`` makes the round trip bit-exact."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "hidden_size": params.hidden_size,
        "input_size": params.input_size,
        "output_size": params.output_size,
        "meta": meta or {},
        "tensors": {
            name: {"shape": list(arr.shape), "values": arr.ravel().tolist()} for name, arr in params.arrays().items()
        },
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path


def load_checkpoint(path) -> tuple[LstmParams, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ParameterError(f"{path} is not a version {CHECKPOINT_VERSION} {CHECKPOINT_FORMAT} file")
    arrays = {}
    for name in PARAM_NAMES:
        t = doc["tensors"][name]
        arrays[name] = np.array(t["values"], dtype=np.float64).reshape(t["shape"])
    return LstmParams(**arrays), doc.get("meta", {})
