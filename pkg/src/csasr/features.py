"""Log-spectrogram features over non-overlapping 20 ms windows at 8 kHz.

Stride equals window width, so a waveform of N samples yields floor(N/160)
frames of 81 magnitude bins. Mean/variance normalization is fit at dataset
level, never per utterance.
"""

from __future__ import annotations

import re
import wave
from dataclasses import dataclass
from typing import Iterable

import numpy as np

SAMPLE_RATE = 8000
WINDOW_SAMPLES = 160  # 20 ms
NUM_BINS = WINDOW_SAMPLES // 2 + 1
LOG_FLOOR = 1e-10
FRAME_MS = 1000 * WINDOW_SAMPLES // SAMPLE_RATE


class TooShort(ValueError):
    """Waveform shorter than one analysis window."""


class MalformedFeatures(ValueError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


def extract_features(waveform) -> np.ndarray:
    """Per-window magnitude spectrum on a log scale; trailing partial window dropped."""
    w = np.asarray(waveform, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError(f"expected mono waveform, got shape {w.shape}")
    if w.shape[0] < WINDOW_SAMPLES:
        raise TooShort(f"{w.shape[0]} samples < one window of {WINDOW_SAMPLES}")
    t = w.shape[0] // WINDOW_SAMPLES
    windows = w[: t * WINDOW_SAMPLES].reshape(t, WINDOW_SAMPLES)
    magnitude = np.abs(np.fft.rfft(windows, axis=1))
    return np.log(magnitude + LOG_FLOOR)


@dataclass(frozen=True)
class FeatureNormalizer:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, frames: np.ndarray) -> np.ndarray:
        return (frames - self.mean) / self.std


def fit_normalizer(frame_arrays: Iterable[np.ndarray]) -> FeatureNormalizer:
    """Per-feature mean and standard deviation over all frames of a dataset."""
    stacked = np.concatenate([np.asarray(a) for a in frame_arrays], axis=0)
    if stacked.shape[0] == 0:
        raise ValueError("no frames to fit on")
    std = stacked.std(axis=0)
    return FeatureNormalizer(stacked.mean(axis=0), np.maximum(std, 1e-8))


def read_wav(path) -> np.ndarray:
    """Mono 16-bit PCM at 8 kHz, scaled to [-1, 1)."""
    with wave.open(str(path), "rb") as f:
        if f.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono, got {f.getnchannels()} channels")
        if f.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit samples")
        if f.getframerate() != SAMPLE_RATE:
            raise ValueError(f"{path}: expected {SAMPLE_RATE} Hz, got {f.getframerate()}")
        raw = f.readframes(f.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def write_wav(waveform: np.ndarray, path) -> None:
    samples = np.clip(np.asarray(waveform) * 32767.0, -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(SAMPLE_RATE)
        f.writeframes(samples.tobytes())


_FEAT_HEADER = re.compile(r"^FEAT v1 T=(\d+) F=(\d+)$")


def write_feat(frames: np.ndarray, path) -> None:
    frames = np.asarray(frames, dtype=np.float64)
    t, f_dim = frames.shape
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"FEAT v1 T={t} F={f_dim}\n")
        for row in frames:
            f.write(" ".join("%.17g" % x for x in row) + "\n")


def read_feat(path) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise MalformedFeatures(1, "empty file")
    m = _FEAT_HEADER.match(lines[0])
    if not m:
        raise MalformedFeatures(1, f"bad header {lines[0]!r}")
    t, f_dim = int(m.group(1)), int(m.group(2))
    if len(lines) - 1 != t:
        raise MalformedFeatures(len(lines), f"expected {t} rows, found {len(lines) - 1}")
    out = np.empty((t, f_dim))
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != f_dim:
            raise MalformedFeatures(i, f"expected {f_dim} values, found {len(parts)}")
        out[i - 2] = [float(p) for p in parts]
    return out
