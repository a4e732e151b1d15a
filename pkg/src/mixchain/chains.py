"""Gibbs, mixture-Metropolis and combined samplers over subsets.

Each step draws a fixed number of uniforms from the caller's generator and
hands them to the compiled kernel, so single steps and long runs follow the
same code path. Every step makes exactly one new call to F; the current
F(X_t) (and log q(X_t) for mixture samplers) is cached in the chain state.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .diagnostics import Trace
from .logmodular import MixtureProposal
from .models import MAX_SAMPLING_N, ModelError, SetFunction, as_subset

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True, eq=False)
class SamplerSpec:
    """Which chain to run. Use the constructors below rather than this directly."""

    code: int
    q: MixtureProposal | None = None
    alpha: float = 1.0
    ell: int | None = None
    label: str = ""

    def __post_init__(self):
        needs_q = self.code in (_k.M3, _k.COMBINED, _k.M3_FIXED, _k.COMBINED_FIXED)
        if needs_q and self.q is None:
            raise ValueError("mixture samplers need a proposal q")
        if self.code in (_k.COMBINED, _k.COMBINED_FIXED) and not 0.0 < self.alpha < 1.0:
            raise ValueError("combined samplers need 0 < alpha < 1")
        if self.fixed_size and self.ell is None:
            raise ValueError("fixed-size samplers need ell")

    @property
    def fixed_size(self):
        return self.code in (_k.GIBBS_SWAP, _k.M3_FIXED, _k.COMBINED_FIXED)

    @property
    def name(self):
        return self.label or _NAMES[self.code]

    def validate(self, n):
        if self.q is not None and self.q.n != n:
            raise ValueError(f"proposal has n = {self.q.n}, model has n = {n}")
        if self.fixed_size and not 0 <= self.ell <= n:
            raise ValueError(f"ell = {self.ell} is outside [0, {n}]")


_NAMES = {_k.GIBBS: "gibbs", _k.M3: "m3", _k.COMBINED: "combined", _k.GIBBS_SWAP: "gibbs-swap",
          _k.M3_FIXED: "m3-fixed", _k.COMBINED_FIXED: "combined-fixed"}


def Gibbs(label=""):
    return SamplerSpec(_k.GIBBS, label=label)


def M3(q, label=""):
    return SamplerSpec(_k.M3, q=q, label=label)


def Combined(q, alpha=DEFAULT_ALPHA, label=""):
    return SamplerSpec(_k.COMBINED, q=q, alpha=alpha, label=label)


def GibbsSwap(ell, label=""):
    return SamplerSpec(_k.GIBBS_SWAP, ell=ell, label=label)


def M3FixedSize(q, ell, label=""):
    return SamplerSpec(_k.M3_FIXED, q=q, ell=ell, label=label)


def CombinedFixedSize(q, ell, alpha=DEFAULT_ALPHA, label=""):
    return SamplerSpec(_k.COMBINED_FIXED, q=q, alpha=alpha, ell=ell, label=label)


@dataclass
class ChainState:
    current: np.ndarray
    log_f: float
    log_q: float = float("nan")
    step_count: int = 0
    accepted: int = field(default=0, compare=False)


def init_state(model: SetFunction, S, q: MixtureProposal | None = None) -> ChainState:
    x = as_subset(S, model.n).copy()
    lq = q.log_unnormalized(x) if q is not None else float("nan")
    return ChainState(x, model.evaluate(x), lq)


def _mix_pack(sampler: SamplerSpec, n):
    q = sampler.q if sampler.q is not None else MixtureProposal.uniform(n)
    return q.pack(sampler.ell if sampler.code in (_k.M3_FIXED, _k.COMBINED_FIXED) else None)


def _step_with(model, sampler, state, rng):
    n = model.n
    sampler.validate(n)
    if sampler.fixed_size and int(state.current.sum()) != sampler.ell:
        raise ValueError("state size differs from the sampler's ell")
    x = state.current.copy()
    lq = state.log_q
    if sampler.q is not None and np.isnan(lq):
        lq = sampler.q.log_unnormalized(x)
    u = rng.random(_k.uniforms_per_step(sampler.code, n))
    mp = model.packed
    work = np.empty(_k.work_size(n, mp[3].shape[1]))
    iwork = np.empty(n, dtype=np.int64)
    y = np.zeros(n, dtype=np.uint8)
    ell = -1 if sampler.ell is None else sampler.ell
    try:
        f, lq, acc = _k.step(sampler.code, mp, _mix_pack(sampler, n), sampler.alpha, ell,
                             x, y, state.log_f, lq, u, work, iwork)
    except ValueError as exc:
        raise ModelError(str(exc)) from exc
    return ChainState(x, float(f), float(lq), state.step_count + 1, state.accepted + int(acc))


def step(model, sampler: SamplerSpec, state: ChainState, rng) -> ChainState:
    return _step_with(model, sampler, state, rng)


def gibbs_step(model, state, rng):
    """Pick v uniformly; move to S xor {v} with probability logistic(F(R) - F(S))."""
    return _step_with(model, Gibbs(), state, rng)


def m3_step(model, q, state, rng):
    """Propose R ~ q independently of S; Metropolis accept/reject."""
    return _step_with(model, M3(q), state, rng)


def combined_step(model, q, alpha, state, rng):
    return _step_with(model, Combined(q, alpha), state, rng)


def gibbs_swap_step(model, state, rng, ell):
    """Swap a uniform (v in S, u not in S) pair with heat-bath acceptance."""
    return _step_with(model, GibbsSwap(ell), state, rng)


def m3_fixed_size_step(model, q, state, rng, ell):
    return _step_with(model, M3FixedSize(q, ell), state, rng)


def initial_subset(model, sampler: SamplerSpec, rng):
    """Over-dispersed start: a draw from q if the sampler has one, else uniform."""
    n = model.n
    if sampler.fixed_size:
        if sampler.q is not None:
            return sampler.q.sample_fixed_size(sampler.ell, rng)
        x = np.zeros(n, dtype=np.uint8)
        x[rng.permutation(n)[:sampler.ell]] = 1
        return x
    if sampler.q is not None:
        return sampler.q.sample(rng)
    return (rng.random(n) < 0.5).astype(np.uint8)


def chain_generators(seed, chains):
    """Independent generators, one per chain, from (seed, chain index)."""
    return [np.random.Generator(np.random.PCG64(s))
            for s in np.random.SeedSequence(seed).spawn(chains)]


def _run_one(model, sampler, steps, record_every, rng, chunk_steps):
    n = model.n
    x = initial_subset(model, sampler, rng)
    mp = model.packed
    mx = _mix_pack(sampler, n)
    ell = -1 if sampler.ell is None else sampler.ell
    f = model.evaluate(x)
    lq = sampler.q.log_unnormalized(x) if sampler.q is not None else 0.0
    records = 1 + steps // record_every
    out = np.empty((records, n), dtype=np.uint8)
    clock = np.zeros(records, dtype=np.int64)
    out[0] = x
    budget = _k.uniforms_per_step(sampler.code, n)
    done = 0
    k = 1
    elapsed = 0
    accepted = 0
    while done < steps:
        m = min(chunk_steps, steps - done)
        t0 = time.perf_counter_ns()
        U = rng.random((m, budget))
        f, lq, acc, wrote = _k.run_block(sampler.code, mp, mx, sampler.alpha, ell, x, f, lq,
                                         U, record_every, out[k:])
        dt = time.perf_counter_ns() - t0
        # chunk-resolution timing, spread evenly over the chunk's records
        if wrote:
            clock[k:k + wrote] = elapsed + (dt * np.arange(1, wrote + 1)) // wrote
        elapsed += dt
        accepted += acc
        done += m
        k += wrote
    return out, clock, accepted


def run_chains(model: SetFunction, sampler: SamplerSpec, chains: int, steps: int,
               record_every: int = 1, seed: int = 0, workers: int = 1) -> Trace:
    """Run independent chains and record the state every ``record_every`` steps.

    Record 0 is the initial state. Chains are distributed over ``workers``
    threads (kernels release the GIL); results do not depend on the worker count.
    """
    if chains < 1 or steps < 0 or record_every < 1:
        raise ValueError("need chains >= 1, steps >= 0, record_every >= 1")
    if model.n > MAX_SAMPLING_N:
        raise ValueError(f"sampling supports n <= {MAX_SAMPLING_N}")
    sampler.validate(model.n)
    budget = _k.uniforms_per_step(sampler.code, model.n)
    chunk_steps = max(1, (1 << 20) // budget // record_every) * record_every
    rngs = chain_generators(seed, chains)

    def work(c):
        return _run_one(model, sampler, steps, record_every, rngs[c], chunk_steps)

    try:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(work, range(chains)))
        else:
            results = [work(c) for c in range(chains)]
    except ValueError as exc:
        raise ModelError(str(exc)) from exc
    indicators = np.stack([r[0] for r in results])
    clock = np.stack([r[1] for r in results])
    steps_axis = np.arange(indicators.shape[1], dtype=np.int64) * record_every
    meta = {"sampler": sampler.name, "seed": seed, "record_every": record_every,
            "steps": steps, "alpha": sampler.alpha, "ell": sampler.ell,
            "r": None if sampler.q is None else sampler.q.r}
    return Trace(indicators, clock, steps_axis, meta, np.array([r[2] for r in results]))
