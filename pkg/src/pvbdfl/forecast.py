"""PV forecasting models: a from-scratch LSTM and a naive daily-repeat baseline.

The LSTM consumes one feature vector per hour of the day being forecast
(previous-day PV, irradiance forecast, cyclical hour encoding), runs a
stacked recurrence over the 24 steps, and maps the final hidden state to
all 24 hourly outputs at once. Backpropagation through time is exact and
is verified against finite differences in the tests. Predictions are
produced in a 0..~1 scaled space (PV divided by the building's training
peak) and clamped at zero with subgradient zero below the clamp.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, MissingCheckpoint

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LstmHyper:
    layers: int = 3
    hidden_size: int = 200
    dropout_frac: float = 0.5
    learning_rate: float = 1e-4
    batch_size: int = 32

    def __post_init__(self):
        if self.layers <= 0 or self.hidden_size <= 0 or self.batch_size <= 0:
            raise InvalidSpec("layers, hidden_size and batch_size must be positive")
        if not 0 <= self.dropout_frac < 1:
            raise InvalidSpec("dropout_frac must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise InvalidSpec("learning_rate must be positive")


N_FEATURES = 4
HORIZON = 24


@dataclass(frozen=True)
class FeatureWindow:
    """Inputs for one day-ahead forecast, all 24-long."""

    pv_hist: np.ndarray
    dni_fcst: np.ndarray
    hour_cos: np.ndarray
    hour_sin: np.ndarray

    def __post_init__(self):
        for name in ("pv_hist", "dni_fcst", "hour_cos", "hour_sin"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            if arr.shape != (HORIZON,):
                raise InvalidSpec(f"{name} must have exactly {HORIZON} entries")
        radius = self.hour_cos**2 + self.hour_sin**2
        if np.abs(radius - 1.0).max() > 1e-9:
            raise InvalidSpec("hour encoding must lie on the unit circle")

    def matrix(self) -> np.ndarray:
        return np.stack(
            [self.pv_hist, self.dni_fcst, self.hour_cos, self.hour_sin], axis=1
        )


def hour_encoding(hours=None) -> tuple[np.ndarray, np.ndarray]:
    """(cos, sin) encoding of hour-of-day; defaults to a midnight-aligned day."""
    if hours is None:
        hours = np.arange(HORIZON)
    angle = 2.0 * np.pi * (np.asarray(hours) % 24) / 24.0
    return np.cos(angle), np.sin(angle)


def windows_matrix(windows) -> np.ndarray:
    """Stack FeatureWindows into a (B, 24, 4) feature tensor."""
    return np.stack([w.matrix() for w in windows], axis=0)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class ForecastModel:
    """Stacked-LSTM PV forecaster with explicit parameters and BPTT.

    Parameters live in ``params``: per layer ``W{l}`` (input weights,
    4H x in), ``U{l}`` (recurrent weights, 4H x H), ``b{l}`` (4H,), plus
    the output head ``Wy`` (24 x H) and ``by`` (24,). Gate order within
    the 4H rows is input, forget, cell, output; the forget-gate bias
    starts at +1.
    """

    def __init__(self, hyper: LstmHyper | None = None, rng_seed: int = 0,
                 dtype=np.float64):
        self.hyper = hyper or LstmHyper()
        self.rng_seed = int(rng_seed)
        self.dtype = np.dtype(dtype)
        self._rng = np.random.default_rng(self.rng_seed)
        self.params: dict[str, np.ndarray] = {}
        self.feat_mean = np.zeros(N_FEATURES)
        self.feat_std = np.ones(N_FEATURES)
        self.pv_scale = 1.0
        self._cache = None
        self._init_params()

    def _init_params(self):
        H = self.hyper.hidden_size
        rng = self._rng
        for layer in range(self.hyper.layers):
            n_in = N_FEATURES if layer == 0 else H
            bound = 1.0 / np.sqrt(H)
            self.params[f"W{layer}"] = rng.uniform(
                -bound, bound, size=(4 * H, n_in)
            ).astype(self.dtype)
            self.params[f"U{layer}"] = rng.uniform(
                -bound, bound, size=(4 * H, H)
            ).astype(self.dtype)
            b = np.zeros(4 * H, dtype=self.dtype)
            b[H : 2 * H] = 1.0
            self.params[f"b{layer}"] = b
        bound = 1.0 / np.sqrt(H)
        self.params["Wy"] = rng.uniform(
            -bound, bound, size=(HORIZON, H)
        ).astype(self.dtype)
        self.params["by"] = np.zeros(HORIZON, dtype=self.dtype)

    def check_finite(self):
        for name, value in self.params.items():
            if not np.isfinite(value).all():
                raise InvalidSpec(f"parameter {name} contains non-finite values")

    def fit_normalization(self, feature_tensor: np.ndarray, pv_targets: np.ndarray):
        """Freeze z-score statistics and the PV scale from the training split."""
        flat = feature_tensor.reshape(-1, N_FEATURES)
        self.feat_mean = flat.mean(axis=0)
        self.feat_std = np.maximum(flat.std(axis=0), 1e-8)
        self.pv_scale = max(float(np.max(pv_targets)), 1e-8)

    def scale_targets(self, pv_kwh: np.ndarray) -> np.ndarray:
        return np.asarray(pv_kwh, float) / self.pv_scale

    # ------------------------------------------------------------------
    # forward / backward

    def forward_batch(self, feature_tensor: np.ndarray, training: bool = False):
        """Scaled predictions for a (B, 24, 4) feature tensor.

        Returns (pred_scaled (B, 24), cache); the cache feeds
        ``backward_batch``. Dropout masks are drawn from the model's own
        generator, so training runs are reproducible from ``rng_seed``.
        The input projection of every step is hoisted into one matrix
        product per layer; only the recurrent product runs per step.
        """
        hyper = self.hyper
        H = hyper.hidden_size
        dt = self.dtype
        B, steps, _ = feature_tensor.shape
        x = ((feature_tensor - self.feat_mean) / self.feat_std).astype(dt)
        keep = 1.0 - hyper.dropout_frac
        cache = {"layers": [], "masks": [], "B": B, "steps": steps}
        layer_input = x
        for layer in range(hyper.layers):
            W = self.params[f"W{layer}"]
            U = self.params[f"U{layer}"]
            b = self.params[f"b{layer}"]
            xw = layer_input.reshape(B * steps, -1) @ W.T
            xw = xw.reshape(B, steps, 4 * H)
            gates = np.empty((steps, B, 4 * H), dtype=dt)
            h_seq = np.zeros((steps + 1, B, H), dtype=dt)
            c_seq = np.zeros((steps + 1, B, H), dtype=dt)
            tanh_c = np.empty((steps, B, H), dtype=dt)
            h = h_seq[0]
            c = c_seq[0]
            for t in range(steps):
                a = xw[:, t, :] + h @ U.T + b
                i = _sigmoid(a[:, 0 * H : 1 * H])
                f = _sigmoid(a[:, 1 * H : 2 * H])
                g = np.tanh(a[:, 2 * H : 3 * H])
                o = _sigmoid(a[:, 3 * H : 4 * H])
                c = f * c + i * g
                tc = np.tanh(c)
                h = o * tc
                gates[t, :, 0 * H : 1 * H] = i
                gates[t, :, 1 * H : 2 * H] = f
                gates[t, :, 2 * H : 3 * H] = g
                gates[t, :, 3 * H : 4 * H] = o
                h_seq[t + 1] = h
                c_seq[t + 1] = c
                tanh_c[t] = tc
            cache["layers"].append(
                {"inp": layer_input, "gates": gates, "h_seq": h_seq,
                 "c_seq": c_seq, "tanh_c": tanh_c}
            )
            seq = h_seq[1:].transpose(1, 0, 2)  # (B, steps, H)
            if layer < hyper.layers - 1:
                if training and hyper.dropout_frac > 0:
                    mask = (
                        self._rng.random(seq.shape) < keep
                    ).astype(dt) / dt.type(keep)
                else:
                    mask = None
                cache["masks"].append(mask)
                layer_input = seq * mask if mask is not None else seq
            else:
                cache["h_last"] = np.ascontiguousarray(seq[:, -1, :])
        head = cache["h_last"] @ self.params["Wy"].T + self.params["by"]
        pred = np.maximum(head, 0.0)
        cache["head"] = head
        self._cache = cache
        return pred, cache

    def backward_batch(self, cache, dpred_scaled: np.ndarray) -> dict:
        """Parameter gradients of ``sum_b loss_b`` given d loss / d pred_scaled."""
        hyper = self.hyper
        H = hyper.hidden_size
        dt = self.dtype
        B, steps = cache["B"], cache["steps"]
        grads = {}
        dhead = np.where(cache["head"] > 0, dpred_scaled, 0.0).astype(dt)
        grads["Wy"] = dhead.T @ cache["h_last"]
        grads["by"] = dhead.sum(axis=0)
        dseq = np.zeros((B, steps, H), dtype=dt)
        dseq[:, -1, :] = dhead @ self.params["Wy"]
        for layer in range(hyper.layers - 1, -1, -1):
            rec = cache["layers"][layer]
            W = self.params[f"W{layer}"]
            U = self.params[f"U{layer}"]
            gates, h_seq, c_seq, tanh_c = (
                rec["gates"], rec["h_seq"], rec["c_seq"], rec["tanh_c"],
            )
            da_all = np.empty((steps, B, 4 * H), dtype=dt)
            dh_next = np.zeros((B, H), dtype=dt)
            dc_next = np.zeros((B, H), dtype=dt)
            for t in range(steps - 1, -1, -1):
                dh = dseq[:, t, :] + dh_next
                i = gates[t, :, 0 * H : 1 * H]
                f = gates[t, :, 1 * H : 2 * H]
                g = gates[t, :, 2 * H : 3 * H]
                o = gates[t, :, 3 * H : 4 * H]
                tc = tanh_c[t]
                dc = dh * o * (1.0 - tc * tc) + dc_next
                da = da_all[t]
                da[:, 0 * H : 1 * H] = dc * g * i * (1.0 - i)
                da[:, 1 * H : 2 * H] = dc * c_seq[t] * f * (1.0 - f)
                da[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
                da[:, 3 * H : 4 * H] = dh * tc * o * (1.0 - o)
                dc_next = dc * f
                dh_next = da @ U
            flat = da_all.transpose(1, 0, 2).reshape(B * steps, 4 * H)
            grads[f"W{layer}"] = flat.T @ rec["inp"].reshape(B * steps, -1)
            grads[f"U{layer}"] = (
                da_all.reshape(steps * B, 4 * H).T
                @ h_seq[:-1].reshape(steps * B, H)
            )
            grads[f"b{layer}"] = flat.sum(axis=0)
            if layer > 0:
                dinp = (flat @ W).reshape(B, steps, -1)
                mask = cache["masks"][layer - 1]
                dseq = dinp * mask if mask is not None else dinp
        return grads

    # ------------------------------------------------------------------
    # public single-window interface

    def forward(self, window: FeatureWindow, training_mode: bool = False) -> np.ndarray:
        """Non-negative 24-hour PV forecast in kWh; records activations."""
        pred_scaled, _ = self.forward_batch(
            window.matrix()[None, :, :], training=training_mode
        )
        return pred_scaled[0] * self.pv_scale

    def backward(self, upstream_grad_kwh: np.ndarray) -> dict:
        """Parameter gradients for the most recent ``forward`` call."""
        if self._cache is None:
            raise InvalidSpec("backward requires a recorded forward pass")
        dpred_scaled = np.asarray(upstream_grad_kwh, float)[None, :] * self.pv_scale
        return self.backward_batch(self._cache, dpred_scaled)

    def predict_batch(self, feature_tensor: np.ndarray) -> np.ndarray:
        """Eval-mode predictions in kWh for a (B, 24, 4) tensor."""
        pred_scaled, _ = self.forward_batch(feature_tensor, training=False)
        return pred_scaled * self.pv_scale

    # ------------------------------------------------------------------
    # checkpointing

    def state_arrays(self) -> dict:
        arrays = {name: value.copy() for name, value in self.params.items()}
        arrays["feat_mean"] = self.feat_mean.copy()
        arrays["feat_std"] = self.feat_std.copy()
        return arrays

    def load_state_arrays(self, arrays: dict):
        for name in self.params:
            self.params[name] = np.array(arrays[name], dtype=float)
        self.feat_mean = np.array(arrays["feat_mean"], dtype=float)
        self.feat_std = np.array(arrays["feat_std"], dtype=float)
        self.check_finite()

    def save(self, path):
        meta = {
            "format_version": CHECKPOINT_VERSION,
            "hyper": self.hyper.__dict__,
            "rng_seed": self.rng_seed,
            "pv_scale": self.pv_scale,
        }
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=json.dumps(meta), **self.state_arrays())

    @classmethod
    def load(cls, path) -> "ForecastModel":
        try:
            with open(path, "rb") as fh:
                data = np.load(io.BytesIO(fh.read()), allow_pickle=False)
        except FileNotFoundError:
            raise MissingCheckpoint(f"no checkpoint at {path}")
        meta = json.loads(str(data["__meta__"]))
        if meta["format_version"] != CHECKPOINT_VERSION:
            raise InvalidSpec(
                f"unsupported checkpoint version {meta['format_version']}"
            )
        model = cls(LstmHyper(**meta["hyper"]), rng_seed=meta["rng_seed"])
        model.pv_scale = float(meta["pv_scale"])
        model.load_state_arrays({k: data[k] for k in data.files if k != "__meta__"})
        return model

    def clone(self) -> "ForecastModel":
        """Deep copy with the same parameters and a fresh RNG at the same seed."""
        twin = ForecastModel(self.hyper, self.rng_seed)
        twin.load_state_arrays(self.state_arrays())
        twin.pv_scale = self.pv_scale
        return twin


def naive_forecast(pv_hist) -> np.ndarray:
    """Tomorrow equals today: the seasonal-naive baseline."""
    return np.array(pv_hist, dtype=float)
