"""Small LSTM regressor over windows of daily feature rows.

Forward, backward (BPTT), and the ADAM optimizer are written directly in
numpy so every gradient is checkable against finite differences. Gates
follow the standard formulation: sigmoid input/forget/output gates, tanh
candidate and cell activations, readout from the final hidden state.
The gate pre-activation layout is [input, forget, candidate, output]
stacked along the first axis.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import FeatureMatrix


@dataclass(frozen=True)
class LstmConfig:
    window: int = 14
    hidden: int = 32
    layers: int = 1
    learning_rate: float = 1e-3
    epochs: int = 60
    batch: int = 32
    seed: int = 0
    grad_clip: float | None = None

    def __post_init__(self):
        if self.window < 1 or self.hidden < 1 or self.layers < 1:
            raise ValueError("window, hidden, and layers must be positive")
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")


@dataclass
class LayerParams:
    W: np.ndarray  # (4H, D) input-to-hidden
    U: np.ndarray  # (4H, H) hidden-to-hidden
    b: np.ndarray  # (4H,)


@dataclass
class LstmParams:
    layers: tuple[LayerParams, ...]
    readout_w: np.ndarray
    readout_b: float

    @property
    def hidden(self) -> int:
        return self.layers[0].U.shape[1]

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[1]

    def blocks(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            out += [(f"W{i}", layer.W), (f"U{i}", layer.U), (f"b{i}", layer.b)]
        out += [("readout_w", self.readout_w), ("readout_b", np.array([self.readout_b]))]
        return out

    def to_vector(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, a in self.blocks()])

    def from_vector(self, vec: np.ndarray) -> "LstmParams":
        layers = []
        pos = 0
        for layer in self.layers:
            parts = []
            for a in (layer.W, layer.U, layer.b):
                parts.append(vec[pos : pos + a.size].reshape(a.shape).copy())
                pos += a.size
            layers.append(LayerParams(*parts))
        w = vec[pos : pos + self.readout_w.size].copy()
        pos += self.readout_w.size
        return LstmParams(tuple(layers), w, float(vec[pos]))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(n: int) -> AdamState:
    return AdamState(m=np.zeros(n), v=np.zeros(n))


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float):
    """One bias-corrected ADAM update; returns (new_params, new_state)."""
    if params.shape != grads.shape:
        raise ValueError("parameter and gradient shapes differ")
    step = state.step + 1
    # divergent gradients overflow to inf here; the trainer detects that
    with np.errstate(over="ignore", invalid="ignore"):
        m = state.beta1 * state.m + (1 - state.beta1) * grads
        v = state.beta2 * state.v + (1 - state.beta2) * grads * grads
        m_hat = m / (1 - state.beta1 ** step)
        v_hat = v / (1 - state.beta2 ** step)
        new = params - lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, AdamState(m=m, v=v, step=step, beta1=state.beta1,
                          beta2=state.beta2, eps=state.eps)


def init_params(input_dim: int, config: LstmConfig) -> LstmParams:
    """Uniform +-1/sqrt(hidden) weights, zero biases, forget bias +1."""
    rng = np.random.default_rng(config.seed)
    h = config.hidden
    bound = 1.0 / np.sqrt(h)
    layers = []
    d = input_dim
    for _ in range(config.layers):
        W = rng.uniform(-bound, bound, size=(4 * h, d))
        U = rng.uniform(-bound, bound, size=(4 * h, h))
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0
        layers.append(LayerParams(W, U, b))
        d = h
    readout_w = rng.uniform(-bound, bound, size=h)
    return LstmParams(tuple(layers), readout_w, 0.0)


def lstm_forward(params: LstmParams, window):
    """Run the recurrence; returns (predictions, cache for backward).

    `window` is (T, D) for one sample or (B, T, D) for a batch.
    """
    x = np.asarray(window, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None, :, :]
    if x.ndim != 3:
        raise ValueError("window must be (T, D) or (B, T, D)")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite activation in forward pass")
    B, T, _ = x.shape

    cache = {"x": x, "layers": []}
    inp = x
    for layer in params.layers:
        H = layer.U.shape[1]
        i_s = np.empty((B, T, H)); f_s = np.empty((B, T, H))
        g_s = np.empty((B, T, H)); o_s = np.empty((B, T, H))
        c_s = np.empty((B, T, H)); h_s = np.empty((B, T, H))
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        for t in range(T):
            z = inp[:, t, :] @ layer.W.T + h @ layer.U.T + layer.b
            i = expit(z[:, :H])
            f = expit(z[:, H : 2 * H])
            g = np.tanh(z[:, 2 * H : 3 * H])
            o = expit(z[:, 3 * H :])
            c = f * c + i * g
            h = o * np.tanh(c)
            i_s[:, t] = i; f_s[:, t] = f; g_s[:, t] = g; o_s[:, t] = o
            c_s[:, t] = c; h_s[:, t] = h
        cache["layers"].append(
            {"inp": inp, "i": i_s, "f": f_s, "g": g_s, "o": o_s, "c": c_s, "h": h_s}
        )
        inp = h_s

    pred = inp[:, -1, :] @ params.readout_w + params.readout_b
    if not np.all(np.isfinite(pred)):
        raise ValueError("non-finite activation in forward pass")
    cache["h_last"] = inp[:, -1, :]
    return (pred[0], cache) if single else (pred, cache)


def lstm_backward(params: LstmParams, cache, loss_grad) -> LstmParams:
    """Gradients of the batch-mean loss; loss_grad is dloss_i/dprediction_i.

    Returns an LstmParams-shaped container of gradients, so the readout
    bias gradient equals the mean of loss_grad over the batch.
    """
    lam = np.atleast_1d(np.asarray(loss_grad, dtype=float))
    B, T, _ = cache["x"].shape
    if lam.shape != (B,):
        raise ValueError("loss gradient shape does not match the cached batch")
    if len(cache["layers"]) != len(params.layers):
        raise ValueError("cache does not match the parameter structure")
    lam = lam / B

    d_readout_w = cache["h_last"].T @ lam
    d_readout_b = float(lam.sum())

    H_top = params.layers[-1].U.shape[1]
    dh_ext = np.zeros((B, T, H_top))
    dh_ext[:, -1, :] = lam[:, None] * params.readout_w

    grad_layers = []
    for li in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[li]
        lc = cache["layers"][li]
        if lc["h"].shape[2] != layer.U.shape[1]:
            raise ValueError("cache does not match the parameter structure")
        H = layer.U.shape[1]
        dW = np.zeros_like(layer.W)
        dU = np.zeros_like(layer.U)
        db = np.zeros_like(layer.b)
        d_inp = np.zeros_like(lc["inp"])

        dh = np.zeros((B, H))
        dc = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            dh = dh + dh_ext[:, t, :]
            i, f, g, o, c = (lc[k][:, t] for k in ("i", "f", "g", "o", "c"))
            tanh_c = np.tanh(c)
            c_prev = lc["c"][:, t - 1] if t > 0 else np.zeros((B, H))
            h_prev = lc["h"][:, t - 1] if t > 0 else np.zeros((B, H))

            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c ** 2)
            di = dc * g
            dg = dc * i
            df = dc * c_prev

            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g ** 2),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dW += dz.T @ lc["inp"][:, t, :]
            dU += dz.T @ h_prev
            db += dz.sum(axis=0)
            d_inp[:, t, :] = dz @ layer.W
            dh = dz @ layer.U
            dc = dc * f

        grad_layers.append(LayerParams(dW, dU, db))
        dh_ext = d_inp

    grad_layers.reverse()
    return LstmParams(tuple(grad_layers), d_readout_w, d_readout_b)


def _clip_blocks(grads: LstmParams, clip: float | None) -> LstmParams:
    if clip is None:
        return grads
    layers = []
    for layer in grads.layers:
        parts = []
        for a in (layer.W, layer.U, layer.b):
            norm = float(np.linalg.norm(a))
            parts.append(a * (clip / norm) if norm > clip else a)
        layers.append(LayerParams(*parts))
    w = grads.readout_w
    norm = float(np.linalg.norm(w))
    if norm > clip:
        w = w * (clip / norm)
    b = grads.readout_b
    if abs(b) > clip:
        b = b * (clip / abs(b))
    return LstmParams(tuple(layers), w, b)


@dataclass
class TrainedLstm:
    params: LstmParams
    loss_history: np.ndarray
    config: LstmConfig
    target_mean: float
    target_scale: float
    feature_names: tuple[str, ...]


def _windows(values: np.ndarray, window: int):
    n = values.shape[0]
    if n < window + 1:
        raise ValueError("need at least window+1 training days")
    return np.stack([values[i : i + window] for i in range(n - window + 1)])


def train_lstm(features: FeatureMatrix, config: LstmConfig | None = None) -> TrainedLstm:
    """Mini-batch ADAM training on MSE over sliding windows.

    The target is standardized internally; loss history is recorded per
    epoch in demand units. Deterministic for a given (config, seed).
    """
    config = config or LstmConfig()
    if not features.standardized:
        raise ValueError("features must be standardized before training")
    values = features.values
    target = features.target
    t_mean = float(np.mean(target))
    t_scale = float(np.std(target))
    if t_scale == 0.0:
        t_scale = 1.0
    y = (target - t_mean) / t_scale

    X = _windows(values, config.window)
    Y = y[config.window - 1 :]
    S = X.shape[0]

    params = init_params(values.shape[1], config)
    theta = params.to_vector()
    state = init_adam(theta.size)
    rng = np.random.default_rng(config.seed + 1)

    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        order = rng.permutation(S)
        for lo in range(0, S, config.batch):
            idx = order[lo : lo + config.batch]
            pred, cache = lstm_forward(params, X[idx])
            grads = lstm_backward(params, cache, 2.0 * (pred - Y[idx]))
            grads = _clip_blocks(grads, config.grad_clip)
            theta, state = adam_step(theta, grads.to_vector(), state, config.learning_rate)
            if not np.all(np.isfinite(theta)):
                raise ValueError(
                    "training diverged to non-finite parameters; lower the learning rate"
                )
            params = params.from_vector(theta)
        full_pred, _ = lstm_forward(params, X)
        mse = float(np.mean((full_pred - Y) ** 2)) * t_scale ** 2
        if not np.isfinite(mse):
            raise ValueError(
                "training diverged to a non-finite loss; lower the learning rate"
            )
        history[epoch] = mse

    return TrainedLstm(
        params=params,
        loss_history=history,
        config=config,
        target_mean=t_mean,
        target_scale=t_scale,
        feature_names=features.feature_names,
    )


def predict_lstm(model: TrainedLstm, features: FeatureMatrix, dates) -> np.ndarray:
    """One de-standardized prediction per requested date."""
    if not features.standardized:
        raise ValueError("features must be standardized with training stats")
    if features.feature_names != model.feature_names:
        raise ValueError("feature names do not match the fitted model")
    index = {d: i for i, d in enumerate(features.dates)}
    w = model.config.window
    rows = []
    for d in dates:
        if d not in index:
            raise ValueError(f"no feature row for {d}")
        i = index[d]
        if i < w - 1:
            raise ValueError(f"insufficient history before {d}")
        rows.append(features.values[i - w + 1 : i + 1])
    if not rows:
        return np.empty(0)
    pred, _ = lstm_forward(model.params, np.stack(rows))
    return np.atleast_1d(pred) * model.target_scale + model.target_mean


def _slice_features(fm: FeatureMatrix, lo: int, hi: int) -> FeatureMatrix:
    return FeatureMatrix(
        dates=fm.dates[lo:hi],
        feature_names=fm.feature_names,
        values=fm.values[lo:hi],
        target=fm.target[lo:hi],
        col_means=fm.col_means,
        col_scales=fm.col_scales,
    )


@dataclass(frozen=True)
class GridResult:
    best_config: LstmConfig
    val_errors: tuple[float, ...]
    best_model: TrainedLstm


def grid_search(train: FeatureMatrix, grid, validation: FeatureMatrix | None = None) -> GridResult:
    """Train each config and pick the lowest validation MSE.

    When no validation matrix is given, the trailing 20% of the training
    rows are held out. Validation windows may reach back into the fit
    rows for history. Ties go to the smaller hidden size, then the
    smaller window.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("config grid is empty")
    if validation is None:
        cut = int(round(len(train.dates) * 0.8))
        fit_fm = _slice_features(train, 0, cut)
        val_fm = _slice_features(train, cut, len(train.dates))
    else:
        fit_fm, val_fm = train, validation
    if len(val_fm.dates) == 0:
        raise ValueError("validation split is empty")

    context = FeatureMatrix(
        dates=fit_fm.dates + val_fm.dates,
        feature_names=fit_fm.feature_names,
        values=np.vstack([fit_fm.values, val_fm.values]),
        target=np.concatenate([fit_fm.target, val_fm.target]),
        col_means=fit_fm.col_means,
        col_scales=fit_fm.col_scales,
    )

    results = []
    for config in grid:
        model = train_lstm(fit_fm, config)
        pred = predict_lstm(model, context, val_fm.dates)
        mse = float(np.mean((pred - val_fm.target) ** 2))
        results.append((mse, config, model))

    best = min(range(len(results)),
               key=lambda k: (results[k][0], results[k][1].hidden, results[k][1].window))
    return GridResult(
        best_config=results[best][1],
        val_errors=tuple(r[0] for r in results),
        best_model=results[best][2],
    )


def save_checkpoint(model: TrainedLstm, path) -> None:
    """Tensor dump with a shape manifest plus training metadata."""
    arrays = {name: np.asarray(a) for name, a in model.params.blocks()}
    meta = {
        "config": {
            "window": model.config.window,
            "hidden": model.config.hidden,
            "layers": model.config.layers,
            "learning_rate": model.config.learning_rate,
            "epochs": model.config.epochs,
            "batch": model.config.batch,
            "seed": model.config.seed,
            "grad_clip": model.config.grad_clip,
        },
        "target_mean": model.target_mean,
        "target_scale": model.target_scale,
        "feature_names": list(model.feature_names),
        "shapes": {name: list(a.shape) for name, a in arrays.items()},
    }
    np.savez(
        path,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
        loss_history=model.loss_history,
        **arrays,
    )


def load_checkpoint(path) -> TrainedLstm:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"].tobytes()).decode())
        config = LstmConfig(**meta["config"])
        layers = []
        for i in range(config.layers):
            layers.append(LayerParams(
                data[f"W{i}"].copy(), data[f"U{i}"].copy(), data[f"b{i}"].copy()))
        params = LstmParams(
            tuple(layers), data["readout_w"].copy(), float(data["readout_b"][0]))
        return TrainedLstm(
            params=params,
            loss_history=data["loss_history"].copy(),
            config=config,
            target_mean=meta["target_mean"],
            target_scale=meta["target_scale"],
            feature_names=tuple(meta["feature_names"]),
        )


def write_loss_history(history: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mse\n")
        for i, mse in enumerate(history):
            fh.write(f"{i + 1},{float(mse)!r}\n")
