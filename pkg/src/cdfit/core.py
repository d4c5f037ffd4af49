"""Exponential-family model abstraction over binary configurations.

A model assigns each configuration ``y`` in {0,1}^m the unnormalized
log-weight ``eta . g(y) + o(y)`` where ``g`` is a vector of sufficient
statistics and ``o`` an offset taking values in {0, -inf} (hard constraints).

Models expose batched primitives (``stats``, ``offsets`` and a mutable
``ChainBatch`` for incremental change statistics); the module-level
functions below are the single-configuration conveniences built on them.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateConditionalError, DimensionError

NEG_INF = -np.inf


@dataclass
class State:
    """A configuration in {0,1}^m, one byte per coordinate."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 1 or bits.size == 0:
            raise DimensionError("state must be a non-empty 1-d vector")
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("state entries must be 0 or 1")
        self.bits = bits.astype(np.uint8)

    @property
    def m(self) -> int:
        return self.bits.size

    @classmethod
    def zeros(cls, m: int) -> "State":
        return cls(np.zeros(m, dtype=np.uint8))

    def __getitem__(self, i):
        return int(self.bits[i])

    def __eq__(self, other):
        return isinstance(other, State) and np.array_equal(self.bits, other.bits)

    def copy(self) -> "State":
        return State(self.bits.copy())

    def with_value(self, i: int, v: int) -> "State":
        out = self.bits.copy()
        out[i] = v
        return State(out)


def as_bits(y, m: int | None = None) -> np.ndarray:
    bits = y.bits if isinstance(y, State) else np.asarray(y, dtype=np.uint8)
    if m is not None and bits.shape[-1] != m:
        raise DimensionError(f"state has length {bits.shape[-1]}, model expects {m}")
    return bits


def as_eta(eta, d: int) -> np.ndarray:
    eta = np.asarray(eta, dtype=float).reshape(-1)
    if eta.size != d:
        raise DimensionError(f"parameter vector has length {eta.size}, model expects {d}")
    if not np.all(np.isfinite(eta)):
        raise ValueError("natural parameters must be finite")
    return eta


def prob_one(lin, off0, off1):
    """P(y_i = 1 | rest) from the linear change term and the two offsets.

    ``lin`` is ``eta . change_stats``; offsets are 0 or -inf.  Raises when
    both values are forbidden for any entry.
    """
    lin = np.asarray(lin, dtype=float)
    off0 = np.asarray(off0, dtype=float)
    off1 = np.asarray(off1, dtype=float)
    bad0 = np.isneginf(off0)
    bad1 = np.isneginf(off1)
    if np.any(bad0 & bad1):
        raise DegenerateConditionalError("both values of the updated coordinate are forbidden")
    p = expit(lin)
    p = np.where(bad1, 0.0, p)
    return np.where(bad0, 1.0, p)


class ChainBatch:
    """A stack of C mutable configurations supporting single-coordinate moves.

    The generic implementation evaluates change statistics by two full
    statistic evaluations; models override it with incremental versions.
    """

    def __init__(self, model: "Model", Y):
        self.model = model
        self.Y = np.array(Y, dtype=np.uint8, ndmin=2)

    @property
    def n_chains(self) -> int:
        return self.Y.shape[0]

    def change(self, idx):
        """Return ``(delta, off0, off1)`` for toggling ``idx[c]`` in chain c."""
        rows = np.arange(self.n_chains)
        Y1 = self.Y.copy()
        Y1[rows, idx] = 1
        Y0 = self.Y.copy()
        Y0[rows, idx] = 0
        delta = self.model.stats(Y1) - self.model.stats(Y0)
        return delta, self.model.offsets(Y0), self.model.offsets(Y1)

    def assign(self, idx, values):
        self.Y[np.arange(self.n_chains), idx] = values

    def stats(self) -> np.ndarray:
        return self.model.stats(self.Y)


class Model(abc.ABC):
    """Abstract exponential family over {0,1}^m with d statistics."""

    m: int
    d: int
    names: tuple

    @abc.abstractmethod
    def stats(self, Y) -> np.ndarray:
        """Sufficient statistics for a stack of states, shape (S, d)."""

    def offsets(self, Y) -> np.ndarray:
        """Offsets for a stack of states, values in {0, -inf}."""
        return np.zeros(np.asarray(Y).reshape(-1, self.m).shape[0])

    def batch(self, Y) -> ChainBatch:
        return ChainBatch(self, Y)

    def conditionally_independent(self, i: int, j: int) -> bool:
        """Structural CI of coordinates i and j given the rest, for every eta."""
        return False

    def _check_index(self, i):
        if not 0 <= i < self.m:
            raise IndexError(f"coordinate {i} out of range for m={self.m}")


def suff_stats(model: Model, y) -> np.ndarray:
    bits = as_bits(y, model.m)
    return model.stats(bits[None, :])[0]


def offset(model: Model, y) -> float:
    bits = as_bits(y, model.m)
    return float(model.offsets(bits[None, :])[0])


def change_stats(model: Model, y, i: int) -> np.ndarray:
    """g(y with y_i = 1) - g(y with y_i = 0)."""
    bits = as_bits(y, model.m)
    model._check_index(i)
    delta, _, _ = model.batch(bits[None, :]).change(np.array([i]))
    return delta[0]


def log_unnormalized(model: Model, eta, y) -> float:
    bits = as_bits(y, model.m)
    eta = as_eta(eta, model.d)
    o = offset(model, bits)
    if o == NEG_INF:
        return NEG_INF
    return float(suff_stats(model, bits) @ eta + o)


def conditional_prob(model: Model, eta, y, i: int) -> float:
    """P(Y_i = 1 | y without i)."""
    bits = as_bits(y, model.m)
    eta = as_eta(eta, model.d)
    model._check_index(i)
    delta, off0, off1 = model.batch(bits[None, :]).change(np.array([i]))
    return float(prob_one(delta @ eta, off0, off1)[0])
