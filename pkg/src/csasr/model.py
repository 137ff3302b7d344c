"""Minimal recurrent acoustic model with manual backpropagation.

h_t = tanh(W_xh x_t + W_hh h_{t-1} + b_h), logits_t = W_hy h_t + b_y,
followed by log-softmax, so forward always yields a normalized posterior
grid. Gradients expected by backward() are with respect to the logits
(the CTC gradient convention used here).
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .ctc import PosteriorGrid
from .vocab import GraphemeVocab

CHECKPOINT_FORMAT = "csasr-checkpoint"
CHECKPOINT_VERSION = 1
PARAM_NAMES = ("w_xh", "w_hh", "b_h", "w_hy", "b_y")


class ShapeMismatch(ValueError):
    """Feature width does not match the model input width."""


@dataclass
class ToyAcousticModel:
    params: dict[str, np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.params["w_xh"].shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.params["w_xh"].shape[0]

    @property
    def vocab_size(self) -> int:
        return self.params["w_hy"].shape[0]

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self) -> "ToyAcousticModel":
        return ToyAcousticModel({k: v.copy() for k, v in self.params.items()})


def init_model(
    input_dim: int, vocab_size: int, hidden_dim: int = 64, seed: int = 0
) -> ToyAcousticModel:
    rng = np.random.default_rng(seed)

    def gauss(rows, cols, fan_in):
        return rng.normal(0.0, 1.0 / np.sqrt(fan_in), (rows, cols))

    return ToyAcousticModel(
        {
            "w_xh": gauss(hidden_dim, input_dim, input_dim),
            "w_hh": gauss(hidden_dim, hidden_dim, hidden_dim),
            "b_h": np.zeros(hidden_dim),
            "w_hy": gauss(vocab_size, hidden_dim, hidden_dim),
            "b_y": np.zeros(vocab_size),
        }
    )


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_states(model: ToyAcousticModel, frames: np.ndarray):
    """Hidden states and normalized log-probabilities, kept for backward."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != model.input_dim:
        raise ShapeMismatch(
            f"frames shape {frames.shape} vs model input width {model.input_dim}"
        )
    p = model.params
    t_len = frames.shape[0]
    hs = np.zeros((t_len, model.hidden_dim))
    h = np.zeros(model.hidden_dim)
    pre = frames @ p["w_xh"].T + p["b_h"]
    for t in range(t_len):
        h = np.tanh(pre[t] + p["w_hh"] @ h)
        hs[t] = h
    logits = hs @ p["w_hy"].T + p["b_y"]
    return hs, _log_softmax(logits)


def forward(model: ToyAcousticModel, frames: np.ndarray) -> PosteriorGrid:
    _, logp = forward_states(model, frames)
    return PosteriorGrid(logp)


def backward(
    model: ToyAcousticModel,
    frames: np.ndarray,
    hs: np.ndarray,
    dlogits: np.ndarray,
) -> dict[str, np.ndarray]:
    """Backpropagation through time; returns gradients per parameter."""
    p = model.params
    frames = np.asarray(frames, dtype=np.float64)
    t_len = frames.shape[0]
    grads = {
        "w_hy": dlogits.T @ hs,
        "b_y": dlogits.sum(axis=0),
        "w_xh": np.zeros_like(p["w_xh"]),
        "w_hh": np.zeros_like(p["w_hh"]),
        "b_h": np.zeros_like(p["b_h"]),
    }
    dh_next = np.zeros(model.hidden_dim)
    for t in range(t_len - 1, -1, -1):
        dh = p["w_hy"].T @ dlogits[t] + dh_next
        da = dh * (1.0 - hs[t] ** 2)
        grads["w_xh"] += np.outer(da, frames[t])
        if t > 0:
            grads["w_hh"] += np.outer(da, hs[t - 1])
        grads["b_h"] += da
        dh_next = p["w_hh"].T @ da
    return grads


def vocab_fingerprint(vocab: GraphemeVocab) -> str:
    return hashlib.sha256("\n".join(vocab.units).encode("utf-8")).hexdigest()


def save_checkpoint(model: ToyAcousticModel, path, vocab: GraphemeVocab) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "vocab_sha256": vocab_fingerprint(vocab),
        "params": {
            name: {
                "shape": list(model.params[name].shape),
                "data": base64.b64encode(
                    np.ascontiguousarray(model.params[name], dtype="<f8").tobytes()
                ).decode("ascii"),
            }
            for name in PARAM_NAMES
        },
    }
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def load_checkpoint(path, vocab: GraphemeVocab | None = None) -> ToyAcousticModel:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported version {payload.get('version')}")
    if vocab is not None and payload["vocab_sha256"] != vocab_fingerprint(vocab):
        raise ValueError(f"{path}: checkpoint was trained with a different vocabulary")
    params = {}
    for name in PARAM_NAMES:
        entry = payload["params"][name]
        arr = np.frombuffer(
            base64.b64decode(entry["data"]), dtype="<f8"
        ).reshape(entry["shape"])
        params[name] = arr.copy()
    return ToyAcousticModel(params)
