"""Log-modular distributions and mixtures of them used as global proposals.

A log-modular distribution includes each element independently, with
probability sigmoid(m_v). The proposal is q(S) ~ sum_i w_i exp(m_i(S)); its
normalizer is sum_i w_i Z_i, and all densities here are kept in log space
because w_i = 1/Z_i spans hundreds of orders of magnitude once n ~ 50.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from .models import ModularFunction, all_masks_bits, as_subset


def log_partition(m: ModularFunction) -> float:
    """log Z_m = c + sum_v log(1 + exp(m_v)), overflow-safe."""
    return m.offset + float(np.logaddexp(0.0, m.weights).sum())


def log_esp_suffix(weights, ell):
    """E[v, j] = log e_j(exp(weights[v:])) for v in 0..n, j in 0..ell.

    ``weights`` may be (n,) or (r, n); the leading axis is kept.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = w.shape[-1]
    if ell > n or ell < 0:
        raise ValueError(f"size {ell} is outside [0, {n}]")
    E = np.full(w.shape[:-1] + (n + 1, ell + 1), -np.inf)
    E[..., n, 0] = 0.0
    for v in range(n - 1, -1, -1):
        E[..., v, 0] = 0.0
        if ell:
            E[..., v, 1:] = np.logaddexp(E[..., v + 1, 1:], w[..., v, None] + E[..., v + 1, :-1])
    return E


def fixed_size_logZ(m: ModularFunction, ell: int) -> float:
    """log e_ell(exp(m_1), ..., exp(m_n)), the normalizer over size-ell sets."""
    return float(log_esp_suffix(m.weights, ell)[0, ell])


def fixed_size_inclusion_table(weights, ell):
    """P[..., v, j]: probability of taking v when j elements are still needed.

    Sequential conditioning: scanning v = 0..n-1, element v enters with
    probability exp(m_v) e_{j-1}(rest) / e_j(v..n-1).
    """
    w = np.asarray(weights, dtype=np.float64)
    E = log_esp_suffix(w, ell)
    n = w.shape[-1]
    P = np.zeros(w.shape[:-1] + (n, ell + 1))
    if ell:
        num = w[..., :, None] + E[..., 1:, :-1]
        den = E[..., :-1, 1:]
        with np.errstate(invalid="ignore"):
            P[..., 1:] = np.where(np.isfinite(den), np.exp(num - den), 0.0)
    return np.minimum(P, 1.0)


@dataclass(frozen=True, eq=False)
class LogModular:
    """pi_m(S) = exp(m(S)) / Z_m for a normalized modular m."""

    m: ModularFunction

    def __post_init__(self):
        if self.m.offset != 0.0:
            object.__setattr__(self, "m", self.m.normalized())

    @property
    def n(self):
        return self.m.n

    @cached_property
    def logZ(self):
        return log_partition(self.m)

    @cached_property
    def inclusion_probs(self):
        return expit(self.m.weights)

    def logpdf(self, S):
        return self.m(S) - self.logZ


def sample_logmodular(d: LogModular, rng) -> np.ndarray:
    return (rng.random(d.n) < d.inclusion_probs).astype(np.uint8)


def sample_logmodular_fixed_size(m: ModularFunction, ell: int, rng) -> np.ndarray:
    """Exact draw from P(S) = exp(m(S)) / e_ell(exp(m)) over sets with |S| = ell."""
    table = fixed_size_inclusion_table(m.weights, ell)
    u = rng.random(m.n)
    return _sequential_draw(table, ell, u)


def _sequential_draw(table, ell, u):
    n = table.shape[0]
    x = np.zeros(n, dtype=np.uint8)
    need = ell
    for v in range(n):
        if need > 0 and u[v] < table[v, need]:
            x[v] = 1
            need -= 1
    return x


class MixtureProposal:
    """q(S) = (1 / Z_q) sum_i w_i exp(m_i(S)) over normalized modular m_i.

    Stored as ``log_w`` (r,) and ``weights`` (r, n).
    """

    def __init__(self, log_w, weights):
        log_w = np.ascontiguousarray(log_w, dtype=np.float64).reshape(-1)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.ndim == 1:
            weights = weights[None, :]
        if weights.ndim != 2 or weights.shape[0] != log_w.shape[0] or log_w.shape[0] < 1:
            raise ValueError("need r >= 1 components with one log-weight each")
        if not (np.all(np.isfinite(log_w)) and np.all(np.isfinite(weights))):
            raise ValueError("mixture weights must be finite (w_i > 0)")
        self.log_w = log_w
        self.weights = weights
        self.logZ_i = np.logaddexp(0.0, weights).sum(axis=1)
        self.logZ_q = float(logsumexp(log_w + self.logZ_i))
        self._fixed = {}

    @classmethod
    def from_components(cls, components):
        """``components``: iterable of (w_i, ModularFunction)."""
        comps = list(components)
        w = np.array([w for w, _ in comps], dtype=np.float64)
        if not np.all(w > 0):
            raise ValueError("mixture weights must be positive")
        return cls(np.log(w), np.stack([m.weights for _, m in comps]))

    @classmethod
    def equal_selection(cls, modulars):
        """w_i = 1/Z_i, so every component is picked with probability 1/r."""
        W = np.stack([m.weights for m in modulars])
        return cls(-np.logaddexp(0.0, W).sum(axis=1), W)

    @classmethod
    def uniform(cls, n):
        return cls(np.zeros(1), np.zeros((1, n)))

    @property
    def r(self):
        return self.weights.shape[0]

    @property
    def n(self):
        return self.weights.shape[1]

    def component(self, i):
        return ModularFunction(self.weights[i])

    @cached_property
    def selection_probs(self):
        return np.exp(self.log_w + self.logZ_i - self.logZ_q)

    @cached_property
    def _cdf(self):
        cdf = np.cumsum(self.selection_probs)
        cdf[-1] = 1.0
        return cdf

    @cached_property
    def _incl(self):
        return expit(self.weights)

    # fixed-size restriction q^(ell)
    def fixed(self, ell):
        if ell not in self._fixed:
            if not 0 <= ell <= self.n:
                raise ValueError(f"size {ell} is outside [0, {self.n}]")
            E = log_esp_suffix(self.weights, ell)
            logZ = E[:, 0, ell]
            logZ_q = float(logsumexp(self.log_w + logZ))
            cdf = np.cumsum(np.exp(self.log_w + logZ - logZ_q))
            cdf[-1] = 1.0
            self._fixed[ell] = (logZ_q, cdf, fixed_size_inclusion_table(self.weights, ell))
        return self._fixed[ell]

    def pack(self, ell=None):
        if ell is None:
            fs_cdf = np.ones(self.r)
            fs_prob = np.zeros((self.r, self.n, 1))
        else:
            _, fs_cdf, fs_prob = self.fixed(ell)
        return (self.log_w, self.weights, self._incl, self._cdf,
                np.ascontiguousarray(fs_cdf), np.ascontiguousarray(fs_prob))

    # densities
    def log_unnormalized(self, S):
        x = as_subset(S, self.n)
        return float(logsumexp(self.log_w + self.weights @ x.astype(np.float64)))

    def logpdf(self, S):
        return self.log_unnormalized(S) - self.logZ_q

    def log_table(self):
        """log q on every subset, indexed by bitmask."""
        bits = all_masks_bits(self.n).astype(np.float64)
        return logsumexp(bits @ self.weights.T + self.log_w, axis=1) - self.logZ_q

    def fixed_size_logpdf(self, S, ell):
        x = as_subset(S, self.n)
        if int(x.sum()) != ell:
            return -np.inf
        return self.log_unnormalized(x) - self.fixed(ell)[0]

    # sampling
    def sample(self, rng):
        i = 0 if self.r == 1 else int(np.searchsorted(self._cdf, rng.random(), side="right"))
        return (rng.random(self.n) < self._incl[i]).astype(np.uint8)

    def sample_fixed_size(self, ell, rng):
        _, cdf, table = self.fixed(ell)
        i = 0 if self.r == 1 else int(np.searchsorted(cdf, rng.random(), side="right"))
        return _sequential_draw(table[i], ell, rng.random(self.n))

    # serialization
    def to_dict(self):
        return {"components": [{"log_w": float(lw), "weights": w.tolist()}
                               for lw, w in zip(self.log_w, self.weights)]}

    @classmethod
    def from_dict(cls, d):
        comps = d["components"]
        return cls([c["log_w"] for c in comps], [c["weights"] for c in comps])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def mixture_logpdf(q: MixtureProposal, S) -> float:
    return q.logpdf(S)


def sample_mixture(q: MixtureProposal, rng) -> np.ndarray:
    return q.sample(rng)
