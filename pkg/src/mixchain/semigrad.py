"""Modular lower/upper bounds of F and proposal mixtures built from them.

``subgradient`` takes marginal gains along a permutation; ``supergradient``
uses the two-sided construction F(V) - F(V - v) on a random prefix of the
permutation and F({v}) - F(empty) elsewhere. ``build_mixture`` alternates a
permutation choice (greedy on F minus the current mixture, or uniform at
random) with one of the two constructions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .exact import enumerate_distribution
from .logmodular import MixtureProposal
from .models import (ENUMERATION_LIMIT, ModularFunction, SetFunction, all_masks_bits,
                     check_enumerable, subset)


@dataclass(frozen=True)
class ConstructionConfig:
    r: int = 20
    permutation_mode: str = "greedy"  # or "random"
    semigradient_kind: str = "sub"  # or "super"
    seed: int = 0
    k_min: int = 0  # supergradient prefix length drawn from {k_min, ..., n}
    fixed_k: tuple | None = None  # cycle through these prefix lengths instead

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("mixture size r must be >= 1")
        if self.permutation_mode not in ("greedy", "random"):
            raise ValueError(f"unknown permutation mode {self.permutation_mode!r}")
        if self.semigradient_kind not in ("sub", "super"):
            raise ValueError(f"unknown semigradient kind {self.semigradient_kind!r}")


def greedy_permutation(F: SetFunction, mixture_so_far=()) -> np.ndarray:
    """Order V greedily by the gain of F(S) - log sum_j exp(m_j(S)).

    With no components yet the mixture term is dropped. Ties go to the lowest
    index. Costs n(n+1)/2 evaluations of F.
    """
    n = F.n
    comps = [m.weights for m in mixture_so_far]
    W = np.stack(comps) if comps else np.zeros((1, n))
    return _k.greedy_permutation(F.packed, n, np.ascontiguousarray(W), len(comps))


def random_permutation(n, rng) -> np.ndarray:
    return rng.permutation(n)


def _check_perm(sigma, n):
    sigma = np.asarray(sigma, dtype=np.int64)
    if sigma.shape != (n,) or not np.array_equal(np.sort(sigma), np.arange(n)):
        raise ValueError("sigma must be a permutation of 0..n-1")
    return sigma


def subgradient(F: SetFunction, sigma):
    """Marginal gains along ``sigma``; returns (m, prefix sets S_0 ... S_n).

    m(S_k) = F(S_k) - F(empty) on every prefix. For submodular F, m is a
    subgradient at each prefix. n + 1 evaluations.
    """
    n = F.n
    sigma = _check_perm(sigma, n)
    x = np.zeros(n, dtype=np.uint8)
    prev = F.evaluate(x)
    w = np.empty(n)
    prefixes = [x.copy()]
    for v in sigma:
        x[v] = 1
        cur = F.evaluate(x)
        w[v] = cur - prev
        prev = cur
        prefixes.append(x.copy())
    return ModularFunction(w), prefixes


def supergradient(F: SetFunction, sigma, rng=None, k=None, k_min=0):
    """Two-sided gains on a prefix of ``sigma``; returns (m, anchor Y, k).

    k is drawn uniformly from {k_min, ..., n} unless given. Elements in
    Y = {sigma_1..sigma_k} get F(V) - F(V - v), the rest F({v}) - F(empty).
    For submodular F this bounds F from above at Y; for supermodular F it
    bounds F from below there.
    """
    n = F.n
    sigma = _check_perm(sigma, n)
    if k is None:
        k = int(rng.integers(k_min, n + 1))
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    full = np.ones(n, dtype=np.uint8)
    empty = np.zeros(n, dtype=np.uint8)
    f_full = F.evaluate(full)
    f_empty = F.evaluate(empty)
    w = np.empty(n)
    for pos, v in enumerate(sigma):
        if pos < k:
            full[v] = 0
            w[v] = f_full - F.evaluate(full)
            full[v] = 1
        else:
            empty[v] = 1
            w[v] = F.evaluate(empty) - f_empty
            empty[v] = 0
    return ModularFunction(w), subset(n, sigma[:k]), k


def build_mixture(F: SetFunction, config: ConstructionConfig):
    """Build r components and weight them w_i = 1/Z_i (equal selection odds).

    Returns (MixtureProposal, log) where log lists per-component permutation,
    kind, k and anchor for reproducibility.
    """
    rng = np.random.default_rng(config.seed)
    comps = []
    log = []
    for i in range(config.r):
        if config.permutation_mode == "greedy":
            sigma = greedy_permutation(F, comps)
        else:
            sigma = random_permutation(F.n, rng)
        entry = {"index": i, "permutation": [int(v) for v in sigma], "kind": config.semigradient_kind}
        if config.semigradient_kind == "sub":
            m, _ = subgradient(F, sigma)
        else:
            k = None
            if config.fixed_k:
                k = int(config.fixed_k[i % len(config.fixed_k)])
            m, Y, k = supergradient(F, sigma, rng, k=k, k_min=config.k_min)
            entry["k"] = k
            entry["anchor"] = [int(v) for v in np.flatnonzero(Y)]
        comps.append(m)
        log.append(entry)
    return MixtureProposal.equal_selection(comps), log


def handcrafted_ising_mixture(n, beta=None):
    """Two components m_v = -/+ beta*2/n*(n-1) with w_i = 1/Z_i (beta defaults to ln n)."""
    beta = np.log(n) if beta is None else beta
    a = 2.0 * beta / n * (n - 1)
    return MixtureProposal.equal_selection([ModularFunction(np.full(n, -a)),
                                            ModularFunction(np.full(n, a))])


def exhaustive_mixture(model: SetFunction, beta: float, limit=ENUMERATION_LIMIT):
    """One component per subset S_i: m_iv = +beta on S_i, -beta off it.

    Weights w_i = pi(S_i) / Z_i, so sum_i w_i Z_i = 1 and q approaches pi as
    beta grows.
    """
    n = model.n
    check_enumerable(n, limit)
    dist = enumerate_distribution(model, limit)
    bits = all_masks_bits(n).astype(np.float64)
    W = beta * (2.0 * bits - 1.0)
    logZ = np.logaddexp(0.0, W).sum(axis=1)
    with np.errstate(divide="ignore"):
        log_pi = np.log(dist.probs)
    keep = np.isfinite(log_pi)
    return MixtureProposal(log_pi[keep] - logZ[keep], W[keep])


def exhaustive_deviations(model: SetFunction, q: MixtureProposal):
    """d_i = |pi(S_i) - q(S_i)| over all subsets."""
    dist = enumerate_distribution(model)
    return np.abs(dist.probs - np.exp(q.log_table()))


def semigradient_violation(F: SetFunction, m: ModularFunction, anchor, kind, limit=ENUMERATION_LIMIT):
    """Largest violation of the sub (F(R) >= F(A) + m(R) - m(A)) or super inequality."""
    n = F.n
    check_enumerable(n, limit)
    table = F.table()
    bits = all_masks_bits(n).astype(np.float64)
    mvals = bits @ m.weights
    a = int(sum(1 << int(v) for v in np.flatnonzero(anchor)))
    bound = table[a] + mvals - mvals[a]
    if kind == "sub":
        return float(np.max(bound - table))
    if kind == "super":
        return float(np.max(table - bound))
    raise ValueError(f"unknown kind {kind!r}")


def semigradient_check(F, m, anchor, kind, tol=1e-9, limit=ENUMERATION_LIMIT) -> bool:
    return semigradient_violation(F, m, anchor, kind, limit) <= tol


def mixture_tv(model: SetFunction, q: MixtureProposal) -> float:
    """Exact TV(pi, q) by enumeration."""
    dist = enumerate_distribution(model)
    lq = q.log_table()
    return 0.5 * float(np.abs(dist.probs - np.exp(lq)).sum())

