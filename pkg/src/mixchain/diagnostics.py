"""Multi-chain traces and convergence diagnostics on single-element marginals."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trace:
    """Recorded membership indicators of several chains.

    indicators: (chains, records, n) uint8; record 0 is the initial state.
    wallclock_ns: (chains, records) cumulative sampling time per chain.
    steps: (records,) chain step index of every record.
    """

    indicators: np.ndarray
    wallclock_ns: np.ndarray
    steps: np.ndarray
    meta: dict = field(default_factory=dict)
    accepted: np.ndarray | None = None

    def __post_init__(self):
        c, t, _ = self.indicators.shape
        if self.wallclock_ns.shape != (c, t) or self.steps.shape != (t,):
            raise ValueError("trace arrays have inconsistent dimensions")

    @property
    def chains(self):
        return self.indicators.shape[0]

    @property
    def records(self):
        return self.indicators.shape[1]

    @property
    def n(self):
        return self.indicators.shape[2]

    def write_csv(self, path):
        """Columns: chain, step, wallclock_ns, bit_0 ... bit_{n-1}."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["chain", "step", "wallclock_ns"] + [f"bit_{v}" for v in range(self.n)])
            for c in range(self.chains):
                for t in range(self.records):
                    w.writerow([c, int(self.steps[t]), int(self.wallclock_ns[c, t]),
                                *self.indicators[c, t].tolist()])

    @classmethod
    def read_csv(cls, path):
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
        chains = int(data[:, 0].max()) + 1
        records = data.shape[0] // chains
        data = data.reshape(chains, records, -1)
        return cls(data[:, :, 3:].astype(np.uint8), data[:, :, 2], data[0, :, 1])

    def save_npz(self, path):
        np.savez_compressed(path, indicators=self.indicators, wallclock_ns=self.wallclock_ns,
                            steps=self.steps)

    @classmethod
    def load_npz(cls, path):
        with np.load(path) as z:
            return cls(z["indicators"], z["wallclock_ns"], z["steps"])


@dataclass
class PsrfReport:
    per_element: np.ndarray
    aggregate: float
    mean: float
    checkpoints: np.ndarray | None = None
    curve: np.ndarray | None = None


def _as_series(trace):
    x = trace.indicators if isinstance(trace, Trace) else np.asarray(trace)
    if x.ndim == 2:
        x = x[:, :, None]
    return x


def _gelman_rubin(s1, s2, L, m):
    """R-hat from per-chain sums ``s1`` and sums of squares ``s2``, shape (..., m, n)."""
    means = s1 / L
    within = (s2 - L * means**2) / (L - 1)
    W = np.maximum(within, 0.0).mean(axis=-2)
    B = L * means.var(axis=-2, ddof=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt((L - 1) / L + B / (L * W))
    # W = 0: identical constant chains converge trivially, distinct ones never do
    r = np.where(W > 0, r, np.where(B > 0, np.inf, 1.0))
    return r


def _prefix_sums(x, idx):
    """Sums of x and x^2 over time steps [0, p) for every p in sorted ``idx``."""
    m, _, n = x.shape
    binary = x.dtype in (np.bool_, np.uint8) and (x.size == 0 or x.max() <= 1)
    s1 = np.zeros((m, idx.size, n))
    s2 = np.zeros((m, idx.size, n))
    pos = idx > 0
    if pos.any():
        ends = idx[pos]
        starts = np.concatenate([[0], ends[:-1]])
        head = x[:, :ends[-1]]
        s1[:, pos] = np.cumsum(np.add.reduceat(head, starts, axis=1, dtype=np.float64), axis=1)
        if binary:
            s2[:, pos] = s1[:, pos]
        else:
            sq = head.astype(np.float64) ** 2
            s2[:, pos] = np.cumsum(np.add.reduceat(sq, starts, axis=1), axis=1)
    return s1, s2


def psrf_curve(trace, checkpoints, burn_in_fraction=0.0, split=False):
    """PSRF (max over elements) on the prefixes ``[:c]`` for c in ``checkpoints``.

    Returns (aggregate per checkpoint, per-element matrix of shape (len, n)).
    Classic Gelman-Rubin without the degrees-of-freedom correction; with
    ``split=True`` each chain window is cut in half first.
    """
    x = _as_series(trace)
    m, T, n = x.shape
    if m < 2:
        raise ValueError("psrf needs at least 2 chains")
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or cps.size == 0:
        raise ValueError("checkpoints must be a non-empty list")
    if np.any(np.diff(cps) <= 0):
        raise ValueError("checkpoints must be strictly increasing")
    if cps[0] < 1 or cps[-1] > T:
        raise ValueError(f"checkpoints must lie in [1, {T}]")
    windows = []
    for c in cps:
        start = int(np.floor(burn_in_fraction * c))
        L = int(c) - start
        if split:
            half = L // 2
            if half < 2:
                raise ValueError("split psrf needs at least 4 samples per window")
            windows.append((start, start + half, start + 2 * half, half))
        else:
            if L < 4:
                raise ValueError("psrf needs at least 4 post-burn-in samples")
            windows.append((start, None, int(c), L))
    idx = np.unique([p for w in windows for p in w[:3] if p is not None])
    s1, s2 = _prefix_sums(x, idx)
    at = {int(p): k for k, p in enumerate(idx)}
    per = np.empty((cps.size, n))
    for k, (start, mid, end, L) in enumerate(windows):
        a, e = at[start], at[end]
        if split:
            b = at[mid]
            w1 = np.concatenate([s1[:, b] - s1[:, a], s1[:, e] - s1[:, b]])
            w2 = np.concatenate([s2[:, b] - s2[:, a], s2[:, e] - s2[:, b]])
            per[k] = _gelman_rubin(w1, w2, L, 2 * m)
        else:
            per[k] = _gelman_rubin(s1[:, e] - s1[:, a], s2[:, e] - s2[:, a], L, m)
    return per.max(axis=1), per


def psrf(trace, burn_in_fraction=0.0, split=False) -> PsrfReport:
    x = _as_series(trace)
    agg, per = psrf_curve(x, [x.shape[1]], burn_in_fraction, split)
    return PsrfReport(per[0], float(agg[0]), float(per[0].mean()))


def default_checkpoints(records, count=100, start=4):
    """Roughly log-spaced prefix lengths from ``start`` to ``records``."""
    if records < start:
        return np.array([], dtype=np.int64)
    pts = np.unique(np.geomspace(start, records, count).astype(np.int64))
    pts[-1] = records
    return np.unique(pts)


def empirical_marginals(trace, burn_in_fraction=0.0):
    x = _as_series(trace)
    start = int(np.floor(burn_in_fraction * x.shape[1]))
    window = x[:, start:, :] if start < x.shape[1] else x[:, -1:, :]
    return window.mean(axis=(0, 1), dtype=np.float64)


def first_crossing(values, checkpoints, threshold):
    """Smallest checkpoint at which ``values`` is <= threshold and stays there."""
    values = np.asarray(values)
    ok = values <= threshold
    if not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    k = 0 if bad.size == 0 else bad[-1] + 1
    return int(checkpoints[k])


def write_psrf_csv(path, checkpoints, aggregate, per_element, key="checkpoint"):
    """Columns: <key>, psrf_aggregate, psrf_elem_0 ... psrf_elem_{n-1}, psrf_mean."""
    per_element = np.asarray(per_element)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([key, "psrf_aggregate"]
                   + [f"psrf_elem_{v}" for v in range(per_element.shape[1])] + ["psrf_mean"])
        for k, c in enumerate(checkpoints):
            w.writerow([c, repr(float(aggregate[k])), *[repr(float(v)) for v in per_element[k]],
                        repr(float(per_element[k].mean()))])


def wallclock_axis(trace: Trace, checkpoints):
    """Median cumulative chain time (ns) at each checkpoint's last record."""
    idx = np.asarray(checkpoints) - 1
    return np.median(trace.wallclock_ns[:, idx], axis=0)

