"""Brute-force oracle: exact distributions, dense transition matrices, spectra.

Everything here enumerates all 2^n subsets (or all size-ell subsets) and is
meant for desk-scale checks. Transition matrices are built from their
closed-form definitions, never by simulation, so they are an independent
reference for the samplers in :mod:`mixchain.chains`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg as la
from scipy.special import expit, logsumexp

from . import _kernels as _k
from .models import ENUMERATION_LIMIT, EnumerationLimitError, SetFunction, all_masks_bits, check_enumerable

SPECTRAL_LIMIT = 13
_ROW_BLOCK = 1024


class ReversibilityError(ValueError):
    pass


@dataclass
class DistributionTable:
    probs: np.ndarray
    logZ: float
    F: np.ndarray

    @property
    def n(self):
        return self.probs.shape[0].bit_length() - 1

    @property
    def pi_min(self):
        return float(self.probs.min())


@dataclass
class TransitionMatrix:
    """Dense P over ``states`` (bitmasks); ``pi`` is the target restricted to them."""

    matrix: np.ndarray
    states: np.ndarray
    pi: np.ndarray


@dataclass
class SpectralReport:
    gap: float
    lambda2: float
    eigenvalues: np.ndarray


def enumerate_distribution(model: SetFunction, limit=ENUMERATION_LIMIT) -> DistributionTable:
    check_enumerable(model.n, limit)
    F = model.table()
    logZ = float(logsumexp(F))
    return DistributionTable(np.exp(F - logZ), logZ, F)


def exact_marginals(table: DistributionTable) -> np.ndarray:
    bits = all_masks_bits(table.n).astype(np.float64)
    return bits.T @ table.probs


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def fixed_size_states(n, ell):
    return np.array(sorted(sum(1 << v for v in c) for c in combinations(range(n), ell)),
                    dtype=np.int64)


def _gibbs_into(P, F, n, alpha):
    N = P.shape[0]
    idx = np.arange(N)
    for v in range(n):
        R = idx ^ (1 << v)
        P[idx, R] += alpha * expit(F[R] - F) / n


def _swap_into(P, F, states, n, ell, alpha):
    pos = {int(s): i for i, s in enumerate(states)}
    pairs = ell * (n - ell)
    if pairs == 0:
        return
    for i, s in enumerate(states):
        s = int(s)
        for v in range(n):
            if not s >> v & 1:
                continue
            for u in range(n):
                if s >> u & 1:
                    continue
                j = pos[s ^ (1 << v) ^ (1 << u)]
                P[i, j] += alpha * expit(F[j] - F[i]) / pairs


def _m3_into(P, F, lq, scale):
    """P[S, R] += scale * q(R) min(1, exp((F(R) - lq(R)) - (F(S) - lq(S)))), R != S."""
    q = np.exp(lq)
    iw = F - lq
    N = P.shape[0]
    for a in range(0, N, _ROW_BLOCK):
        b = min(N, a + _ROW_BLOCK)
        block = np.minimum(0.0, iw[None, :] - iw[a:b, None])
        np.exp(block, out=block)
        block *= q[None, :]
        block[np.arange(b - a), np.arange(a, b)] = 0.0
        if scale != 1.0:
            block *= scale
        P[a:b] += block


def build_transition_matrix(model: SetFunction, sampler, limit=ENUMERATION_LIMIT) -> TransitionMatrix:
    """Closed-form transition matrix of ``sampler`` (a chains.SamplerSpec)."""
    n = model.n
    check_enumerable(n, limit)
    Ffull = model.table()
    code = sampler.code
    if sampler.fixed_size:
        states = fixed_size_states(n, sampler.ell)
    else:
        states = np.arange(1 << n, dtype=np.int64)
    F = Ffull[states]
    N = states.size
    P = np.zeros((N, N))
    alpha = sampler.alpha if code in (_k.COMBINED, _k.COMBINED_FIXED) else 1.0
    if code in (_k.GIBBS, _k.COMBINED):
        _gibbs_into(P, F, n, alpha)
    if code in (_k.GIBBS_SWAP, _k.COMBINED_FIXED):
        _swap_into(P, F, states, n, sampler.ell, alpha)
    if code in (_k.M3, _k.COMBINED, _k.M3_FIXED, _k.COMBINED_FIXED):
        q = sampler.q
        bits = ((states[:, None] >> np.arange(n)) & 1).astype(np.float64)
        lq = logsumexp(bits @ q.weights.T + q.log_w, axis=1)
        lq -= logsumexp(lq)  # normalize over the state space in use
        _m3_into(P, F, lq, 1.0 - alpha if code in (_k.COMBINED, _k.COMBINED_FIXED) else 1.0)
    d = np.arange(N)
    P[d, d] = 0.0
    P[d, d] = np.maximum(1.0 - P.sum(axis=1), 0.0)  # clamp roundoff below zero
    pi = np.exp(F - logsumexp(F))
    return TransitionMatrix(P, states, pi)


def row_stochastic_error(P) -> float:
    return float(max(np.abs(P.sum(axis=1) - 1.0).max(), -min(P.min(), 0.0)))


def detailed_balance_check(P, pi) -> float:
    """max |pi(S) P(S, R) - pi(R) P(R, S)|."""
    P = np.asarray(P)
    pi = np.asarray(pi)
    worst = 0.0
    N = P.shape[0]
    for a in range(0, N, _ROW_BLOCK):
        b = min(N, a + _ROW_BLOCK)
        flow = pi[a:b, None] * P[a:b]
        back = (P[:, a:b] * pi[:, None]).T
        worst = max(worst, float(np.abs(flow - back).max()))
    return worst


def stationarity_error(P, pi) -> float:
    return float(np.abs(pi @ P - pi).max())


def lazify(P):
    P = np.asarray(P, dtype=np.float64)
    L = 0.5 * P
    L[np.diag_indices_from(L)] += 0.5
    return L


def spectral_gap(P, pi, check_tol=1e-9, all_eigenvalues=None,
                 limit=SPECTRAL_LIMIT) -> SpectralReport:
    """gamma = 1 - lambda_2 from the symmetrization D^1/2 P D^-1/2.

    Only the two largest eigenvalues are computed once the chain has more than
    2048 states unless ``all_eigenvalues`` is set.
    """
    P = np.asarray(P, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    N = P.shape[0]
    if N > 1 << limit:
        raise EnumerationLimitError(N.bit_length() - 1, limit)
    if N == 1:
        return SpectralReport(0.0, float("nan"), np.array([1.0]))
    err = detailed_balance_check(P, pi)
    if err > check_tol:
        raise ReversibilityError(f"P is not reversible w.r.t. pi (residual {err:.3g})")
    s = np.sqrt(pi)
    A = P * s[:, None]
    A /= s[None, :]
    A += A.T
    A *= 0.5
    if all_eigenvalues is None:
        all_eigenvalues = N <= 2048
    if all_eigenvalues:
        ev = la.eigh(A, eigvals_only=True, overwrite_a=True)
    else:
        ev = la.eigh(A, eigvals_only=True, overwrite_a=True, subset_by_index=[N - 2, N - 1])
    ev = ev[::-1]
    lam2 = float(ev[1])
    return SpectralReport(1.0 - lam2, lam2, ev)


def mixing_time_bounds(gamma, pi_min, epsilon):
    """(lower, upper) mixing-time bounds for a lazy reversible chain with gap gamma."""
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    if not 0 < pi_min <= 1:
        raise ValueError("pi_min must lie in (0, 1]")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    lower = (1.0 / gamma - 1.0) * math.log(1.0 / (2.0 * epsilon))
    upper = (1.0 / gamma) * math.log(1.0 / (epsilon * pi_min))
    return lower, upper


def project_chain(P, pi, labels):
    """Induced chain on blocks: Pbar(i, j) = sum_{S in i, R in j} pi(S) P(S, R) / pibar(i)."""
    labels = np.asarray(labels)
    B = int(labels.max()) + 1
    onehot = np.zeros((labels.size, B))
    onehot[np.arange(labels.size), labels] = 1.0
    pibar = onehot.T @ pi
    if np.any(onehot.sum(axis=0) == 0):
        raise ValueError("every block must be non-empty")
    Pbar = onehot.T @ (pi[:, None] * (P @ onehot)) / pibar[:, None]
    return Pbar, pibar


def restrict_chain(P, block):
    """Moves leaving ``block`` are turned into holding; ``block`` is an index array or mask."""
    idx = np.flatnonzero(block) if np.asarray(block).dtype == bool else np.asarray(block)
    if idx.size == 0:
        raise ValueError("block must be non-empty")
    Pi = P[np.ix_(idx, idx)]
    d = np.arange(idx.size)
    Pi[d, d] = 0.0
    Pi[d, d] = 1.0 - Pi.sum(axis=1)
    return Pi


def restrict_distribution(pi, block):
    idx = np.flatnonzero(block) if np.asarray(block).dtype == bool else np.asarray(block)
    return pi[idx] / pi[idx].sum()


def bottleneck_ratio(P, pi, A):
    """Phi(A) = sum_{S in A, R not in A} pi(S) P(S, R) / pi(A)."""
    inside = np.zeros(P.shape[0], dtype=bool)
    inside[np.flatnonzero(A) if np.asarray(A).dtype == bool else np.asarray(A)] = True
    if not inside.any():
        raise ValueError("A must be non-empty")
    mass = pi[inside].sum()
    flow = pi[inside] @ P[np.ix_(inside, ~inside)].sum(axis=1)
    return float(flow / mass)


def exact_distance_curve(P, pi, T):
    """d(t) = max_x TV(P^t(x, .), pi) for t = 1..T."""
    Pt = np.eye(P.shape[0])
    out = np.empty(T)
    for t in range(T):
        Pt = Pt @ P
        out[t] = 0.5 * np.abs(Pt - pi[None, :]).sum(axis=1).max()
    return out


def ising_split_labels(states, n):
    """0 for |S| <= n/2 (so |S| = n/2 goes to the low block when n is even), else 1."""
    sizes = np.array([bin(int(s)).count("1") for s in states])
    return (sizes > n / 2).astype(np.int64)


@dataclass
class DecompositionReport:
    gap: float
    gap_projection: float
    gap_restrictions: tuple
    p_max: float
    bound: float


def decomposition(P, pi, labels, gap=None):
    """Projection/restriction gaps and the resulting lower bound on gap(P).

    bound = min(gbar / 3, gbar * gmin / (3 p_max + gbar)), where gbar is the
    projection gap, gmin the smallest restriction gap and p_max the largest
    probability of leaving one's own block in a single step. Pass ``gap`` to
    reuse an already computed gap of P.
    """
    labels = np.asarray(labels)
    Pbar, pibar = project_chain(P, pi, labels)
    gbar = spectral_gap(Pbar, pibar).gap
    gaps = []
    p_max = 0.0
    for b in range(Pbar.shape[0]):
        idx = np.flatnonzero(labels == b)
        out = np.flatnonzero(labels != b)
        if out.size:
            p_max = max(p_max, float(P[np.ix_(idx, out)].sum(axis=1).max()))
        gaps.append(spectral_gap(restrict_chain(P, idx), restrict_distribution(pi, idx)).gap)
    gmin = min(gaps)
    bound = min(gbar / 3.0, gbar * gmin / (3.0 * p_max + gbar))
    if gap is None:
        gap = spectral_gap(P, pi).gap
    return DecompositionReport(gap, gbar, tuple(gaps), p_max, bound)
