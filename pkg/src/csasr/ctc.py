"""Exact CTC loss, gradient, and alignment collapse in log domain.

The loss marginalizes over all frame-level paths that collapse to the
target (merge adjacent repeats, then drop blanks). Forward-backward runs
over the blank-interleaved extended label sequence of length 2L+1. The
gradient is taken with respect to the log-probability grid under the
constraint that each row stays log-softmax-normalized, so rows of the
gradient sum to zero and it composes directly with a log-softmax output
layer.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .vocab import BLANK_ID

NEG_INF = float("-inf")

BRUTEFORCE_PATH_LIMIT = 10**7


class InfeasibleTarget(ValueError):
    """Target cannot be aligned: T < |target| + count of adjacent equal pairs."""


class TooLarge(ValueError):
    """Brute-force enumeration would exceed the path-count guard."""


class MalformedGrid(ValueError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


@dataclass(frozen=True)
class PosteriorGrid:
    """T x V grid of per-frame log-probabilities; rows normalized."""

    logp: np.ndarray

    def __post_init__(self):
        lp = np.asarray(self.logp, dtype=np.float64)
        if lp.ndim != 2:
            raise ValueError(f"logp must be 2-D, got shape {lp.shape}")
        T, V = lp.shape
        if T < 1 or V < 2:
            raise ValueError(f"need T >= 1 and V >= 2, got T={T}, V={V}")
        row_mass = np.logaddexp.reduce(lp, axis=1)
        if not np.all(np.abs(row_mass) <= 1e-6):
            worst = int(np.argmax(np.abs(row_mass)))
            raise ValueError(
                f"row {worst} not normalized: logsumexp = {row_mass[worst]:.3e}"
            )
        object.__setattr__(self, "logp", lp)

    @property
    def num_frames(self) -> int:
        return self.logp.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.logp.shape[1]


@dataclass(frozen=True)
class CtcLossResult:
    loss: float
    grad: np.ndarray  # T x V, rows sum to 0


def collapse(path: Sequence[int]) -> list[int]:
    """Apply the CTC collapse map: merge adjacent repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != BLANK_ID:
            out.append(p)
        prev = p
    return out


def _adjacent_equal_pairs(target: Sequence[int]) -> int:
    return sum(1 for a, b in zip(target, target[1:]) if a == b)


def _check_target(target: Sequence[int], V: int, T: int) -> None:
    for y in target:
        if not 0 < y < V:
            raise ValueError(f"target id {y} invalid for vocab size {V}")
    need = len(target) + _adjacent_equal_pairs(target)
    if T < need:
        raise InfeasibleTarget(
            f"T={T} frames cannot align target of length {len(target)} "
            f"needing at least {need}"
        )


def _extended_labels(target: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Blank-interleaved labels and the mask of positions allowing an s-2 skip."""
    S = 2 * len(target) + 1
    ext = np.full(S, BLANK_ID, dtype=np.int64)
    ext[1::2] = np.asarray(target, dtype=np.int64)
    skip = np.zeros(S, dtype=bool)
    if S > 2:
        skip[2:] = (ext[2:] != BLANK_ID) & (ext[2:] != ext[:-2])
    return ext, skip


def ctc_loss(grid: PosteriorGrid, target: Sequence[int]) -> CtcLossResult:
    """Negative log-likelihood of the target plus its exact gradient.

    Raises InfeasibleTarget instead of returning an infinite loss; a silent
    +inf would corrupt training averages.
    """
    lp = grid.logp
    T, V = lp.shape
    target = list(target)
    _check_target(target, V, T)

    ext, skip = _extended_labels(target)
    S = ext.shape[0]
    emit = lp[:, ext]  # T x S

    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        stay = prev
        step = np.concatenate(([NEG_INF], prev))[:S]
        jump = np.concatenate(([NEG_INF, NEG_INF], prev))[:S]
        jump = np.where(skip, jump, NEG_INF)
        alpha[t] = emit[t] + np.logaddexp(stay, np.logaddexp(step, jump))

    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        stay = nxt
        step = np.concatenate((nxt, [NEG_INF]))[1 : S + 1]
        jump = np.concatenate((nxt, [NEG_INF, NEG_INF]))[2 : S + 2]
        skip_ahead = np.concatenate((skip, [False, False]))[2 : S + 2]
        jump = np.where(skip_ahead, jump, NEG_INF)
        beta[t] = emit[t] + np.logaddexp(stay, np.logaddexp(step, jump))

    tail = alpha[T - 1, S - 1]
    if S > 1:
        tail = np.logaddexp(tail, alpha[T - 1, S - 2])
    loglik = min(float(tail), 0.0)
    if loglik == NEG_INF:
        raise InfeasibleTarget("no feasible path despite length check")

    # occupancy of extended state s at frame t; alpha and beta both include
    # the frame-t emission, so divide it out once
    with np.errstate(invalid="ignore"):
        occ = alpha + beta - emit - loglik
    occ[np.isnan(occ)] = NEG_INF

    gamma = np.zeros((T, V))
    np.add.at(gamma.T, ext, np.exp(occ).T)
    grad = np.exp(lp) - gamma
    return CtcLossResult(loss=-loglik, grad=grad)


def ctc_loss_bruteforce(grid: PosteriorGrid, target: Sequence[int]) -> float:
    """Loss by enumerating every V^T path; oracle for ctc_loss."""
    lp = grid.logp
    T, V = lp.shape
    if V**T > BRUTEFORCE_PATH_LIMIT:
        raise TooLarge(f"V^T = {V}**{T} exceeds {BRUTEFORCE_PATH_LIMIT}")
    want = list(target)
    rows = [lp[t] for t in range(T)]
    matched = []
    for path in itertools.product(range(V), repeat=T):
        if collapse(path) != want:
            continue
        matched.append(sum(rows[t][path[t]] for t in range(T)))
    if not matched:
        raise InfeasibleTarget("no path collapses to the target")
    return -float(np.logaddexp.reduce(np.array(matched)))


def write_grid(grid: PosteriorGrid, path) -> None:
    T, V = grid.logp.shape
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"CTCGRID v1 T={T} V={V}\n")
        for row in grid.logp:
            f.write(" ".join("%.17g" % x for x in row) + "\n")


_GRID_HEADER = re.compile(r"^CTCGRID v1 T=(\d+) V=(\d+)$")


def read_grid(path) -> PosteriorGrid:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise MalformedGrid(1, "empty file")
    m = _GRID_HEADER.match(lines[0])
    if not m:
        raise MalformedGrid(1, f"bad header {lines[0]!r}")
    T, V = int(m.group(1)), int(m.group(2))
    if len(lines) - 1 != T:
        raise MalformedGrid(len(lines), f"expected {T} rows, found {len(lines) - 1}")
    rows = np.empty((T, V))
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != V:
            raise MalformedGrid(i, f"expected {V} values, found {len(parts)}")
        try:
            rows[i - 2] = [float(p) for p in parts]
        except ValueError as e:
            raise MalformedGrid(i, str(e)) from None
    try:
        return PosteriorGrid(rows)
    except ValueError as e:
        raise MalformedGrid(1, str(e)) from None
