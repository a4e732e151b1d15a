"""Set-function models F : 2^V -> R used as log-potentials, pi(S) ~ exp(F(S)).

Subsets are uint8 indicator vectors of length n (``x[v] == 1`` iff v in S).
The exact oracle instead indexes subsets by integer bitmask, bit v <-> element
v; :func:`to_mask` / :func:`from_mask` convert between the two.

Each model exposes two independent evaluation routes: :meth:`SetFunction.evaluate`
goes through the compiled kernel used by the samplers, and
:meth:`SetFunction.table` computes F on all 2^n subsets with vectorized numpy.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as _k

ENUMERATION_LIMIT = 20
MAX_SAMPLING_N = 64


class ModelError(ValueError):
    """Invalid model parameters or a failed evaluation."""


class EnumerationLimitError(ValueError):
    def __init__(self, n, limit):
        super().__init__(f"n = {n} exceeds the enumeration limit of {limit}")
        self.n = n
        self.limit = limit


class MatrixParseError(ValueError):
    pass


class EmptyFileError(MatrixParseError):
    def __init__(self):
        super().__init__("EmptyFile: no numeric rows")


class RaggedRowError(MatrixParseError):
    def __init__(self, row, expected, got):
        super().__init__(f"RaggedRow(row {row}): expected {expected} columns, got {got}")
        self.row = row


class NonNumericCellError(MatrixParseError):
    def __init__(self, row, col, value):
        super().__init__(f"NonNumeric(row {row}, column {col}): {value!r}")
        self.row = row
        self.col = col


@dataclass(frozen=True)
class GroundSet:
    n: int
    enumeration_limit: int = ENUMERATION_LIMIT

    def __post_init__(self):
        if self.n < 1:
            raise ModelError("ground set needs n >= 1")

    def check_enumerable(self):
        if self.n > self.enumeration_limit:
            raise EnumerationLimitError(self.n, self.enumeration_limit)


def check_enumerable(n, limit=ENUMERATION_LIMIT):
    GroundSet(n, limit).check_enumerable()


# --- subset representation -------------------------------------------------

def subset(n, members=()):
    """Indicator vector of ``members`` in a ground set of size n."""
    x = np.zeros(n, dtype=np.uint8)
    for v in members:
        if not 0 <= v < n:
            raise ValueError(f"element {v} outside ground set of size {n}")
        x[v] = 1
    return x


def as_subset(S, n):
    x = np.ascontiguousarray(S, dtype=np.uint8)
    if x.shape != (n,):
        raise ValueError(f"subset must have shape ({n},), got {x.shape}")
    if np.any(x > 1):
        raise ValueError("subset indicator entries must be 0 or 1")
    return x


def to_mask(x):
    return int(sum(1 << int(v) for v in np.flatnonzero(x)))


def from_mask(mask, n):
    return ((mask >> np.arange(n)) & 1).astype(np.uint8)


def all_masks_bits(n):
    """(2^n, n) uint8 matrix; row S holds the indicator of bitmask S."""
    masks = np.arange(1 << n, dtype=np.int64)
    return ((masks[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def popcounts(n):
    return all_masks_bits(n).sum(axis=1)


# --- models ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModularFunction:
    """m(S) = offset + sum_{v in S} weights[v]."""

    weights: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ModelError("modular weights must be a vector")
        if not np.all(np.isfinite(w)) or not math.isfinite(self.offset):
            raise ModelError("modular function entries must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n(self):
        return self.weights.shape[0]

    def __call__(self, S):
        x = as_subset(S, self.n)
        return self.offset + float(self.weights[x.astype(bool)].sum())

    def normalized(self):
        return ModularFunction(self.weights, 0.0)


class SetFunction:
    """Base class; subclasses set ``kind`` and implement ``_pack`` and ``table``."""

    kind: str = ""
    code: int = -1

    @property
    def n(self) -> int:
        raise NotImplementedError

    def _pack(self):
        raise NotImplementedError

    @cached_property
    def packed(self):
        scalar, vec, mat, table = self._pack()
        return (
            self.code,
            float(scalar),
            np.ascontiguousarray(vec, dtype=np.float64),
            np.ascontiguousarray(mat, dtype=np.float64),
            np.ascontiguousarray(table, dtype=np.float64),
        )

    def evaluate(self, S):
        x = as_subset(S, self.n)
        mp = self.packed
        work = np.empty(_k.work_size(self.n, mp[3].shape[1]))
        iwork = np.empty(self.n, dtype=np.int64)
        try:
            return float(_k.evaluate(mp, x, work, iwork))
        except ValueError as exc:
            raise ModelError(str(exc)) from exc

    __call__ = evaluate

    def table(self) -> np.ndarray:
        """F on every subset, indexed by bitmask."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _empty_mat():
    return np.zeros((0, 0))


@dataclass(frozen=True, eq=False)
class IsingComplete(SetFunction):
    """Curie-Weiss model, F(S) = -(2 beta / n) |S| (n - |S|)."""

    size: int
    beta: float

    kind = "ising"
    code = _k.ISING

    def __post_init__(self):
        if self.size < 1 or not math.isfinite(self.beta):
            raise ModelError("ising needs n >= 1 and finite beta")

    @classmethod
    def critical(cls, n):
        """The beta = ln(n) member of the family."""
        return cls(n, math.log(n))

    @property
    def n(self):
        return self.size

    def _pack(self):
        return self.beta, np.zeros(0), _empty_mat(), np.zeros(0)

    def table(self):
        check_enumerable(self.n)
        k = popcounts(self.n).astype(np.int64)
        return -(2.0 * self.beta / self.n) * (k * (self.n - k)).astype(np.float64)

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "beta": self.beta}


@dataclass(frozen=True, eq=False)
class Modular(SetFunction):
    m: ModularFunction

    kind = "modular"
    code = _k.MODULAR

    @property
    def n(self):
        return self.m.n

    def _pack(self):
        return self.m.offset, self.m.weights, _empty_mat(), np.zeros(0)

    def table(self):
        check_enumerable(self.n)
        return self.m.offset + all_masks_bits(self.n) @ self.m.weights

    def to_dict(self):
        return {"kind": self.kind, "offset": self.m.offset, "weights": self.m.weights.tolist()}


def _facility_table(C, n):
    """sum_j max_{i in S} C[i, j] for every bitmask, by DP on the highest bit."""
    N = 1 << n
    total = np.zeros(N)
    L = C.shape[1]
    block = max(1, (1 << 22) // N)
    for j0 in range(0, L, block):
        cols = C[:, j0:j0 + block]
        best = np.full((N, cols.shape[1]), -np.inf)
        for v in range(n):
            lo = 1 << v
            best[lo:2 * lo] = np.maximum(best[:lo], cols[v])
        best[0] = 0.0
        total += best.sum(axis=1)
    return total


def _check_matrix(C, name):
    C = np.ascontiguousarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 1:
        raise ModelError(f"{name} must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(C)):
        raise ModelError(f"{name} has non-finite entries")
    return C


@dataclass(frozen=True, eq=False)
class FacilityLocation(SetFunction):
    """F(S) = sum_j max_{i in S} C[i, j]; the max over the empty set is 0."""

    C: np.ndarray

    kind = "facility_location"
    code = _k.FACILITY

    def __post_init__(self):
        object.__setattr__(self, "C", _check_matrix(self.C, "C"))

    @property
    def n(self):
        return self.C.shape[0]

    def _pack(self):
        return 0.0, np.zeros(self.n), self.C, np.zeros(0)

    def table(self):
        check_enumerable(self.n)
        return _facility_table(self.C, self.n)

    def to_dict(self):
        return {"kind": self.kind, "C": self.C.tolist()}


@dataclass(frozen=True, eq=False)
class FlDiversity(SetFunction):
    """F(S) = sum_{v in S} w_v + sum_j max_{i in S} C[i, j]."""

    w: np.ndarray
    C: np.ndarray

    kind = "fl_diversity"
    code = _k.FL_DIVERSITY

    def __post_init__(self):
        C = _check_matrix(self.C, "C")
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if w.shape != (C.shape[0],) or not np.all(np.isfinite(w)):
            raise ModelError("w must be a finite vector with one entry per row of C")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "w", w)

    @property
    def n(self):
        return self.C.shape[0]

    def _pack(self):
        return 0.0, self.w, self.C, np.zeros(0)

    def table(self):
        check_enumerable(self.n)
        return all_masks_bits(self.n) @ self.w + _facility_table(self.C, self.n)

    def to_dict(self):
        return {"kind": self.kind, "w": self.w.tolist(), "C": self.C.tolist()}


@dataclass(frozen=True, eq=False)
class LogDetDpp(SetFunction):
    """F(S) = log det(K[S, S] + sigma^2 I), with F(empty) = 0."""

    K: np.ndarray
    sigma: float = 1.0

    kind = "logdet_dpp"
    code = _k.LOGDET

    def __post_init__(self):
        Km = _check_matrix(self.K, "K")
        if Km.shape[0] != Km.shape[1]:
            raise ModelError("K must be square")
        if np.max(np.abs(Km - Km.T), initial=0.0) > 1e-9:
            raise ModelError("K must be symmetric to within 1e-9")
        if not self.sigma > 0:
            raise ModelError("sigma must be positive")
        # every principal submatrix of a positive definite matrix is positive definite
        try:
            np.linalg.cholesky(Km + self.sigma**2 * np.eye(Km.shape[0]))
        except np.linalg.LinAlgError as exc:
            raise ModelError("K + sigma^2 I is not positive definite") from exc
        object.__setattr__(self, "K", Km)
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def n(self):
        return self.K.shape[0]

    def _pack(self):
        return self.sigma**2, np.zeros(self.n), self.K, np.zeros(0)

    def table(self):
        check_enumerable(self.n)
        bits = all_masks_bits(self.n).astype(bool)
        sizes = bits.sum(axis=1)
        out = np.zeros(1 << self.n)
        for k in range(1, self.n + 1):
            masks = np.flatnonzero(sizes == k)
            idx = np.nonzero(bits[masks])[1].reshape(len(masks), k)
            sub = self.K[idx[:, :, None], idx[:, None, :]] + self.sigma**2 * np.eye(k)
            try:
                chol = np.linalg.cholesky(sub)
            except np.linalg.LinAlgError as exc:
                raise ModelError("kernel submatrix is not positive definite") from exc
            out[masks] = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        return out

    def to_dict(self):
        return {"kind": self.kind, "K": self.K.tolist(), "sigma": self.sigma}


@dataclass(frozen=True, eq=False)
class ExplicitTable(SetFunction):
    """F given directly as a table of 2^n values indexed by bitmask."""

    values: np.ndarray

    kind = "table"
    code = _k.TABLE

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        N = v.shape[0] if v.ndim == 1 else 0
        if N < 2 or N & (N - 1):
            raise ModelError("table length must be exactly 2^n with n >= 1")
        if not np.all(np.isfinite(v)):
            raise ModelError("table values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0].bit_length() - 1

    def _pack(self):
        return 0.0, np.zeros(self.n), _empty_mat(), self.values

    def table(self):
        return self.values.copy()

    def to_dict(self):
        return {"kind": self.kind, "values": self.values.tolist()}


def evaluate(model: SetFunction, S) -> float:
    """Log-potential F(S)."""
    return model.evaluate(S)


_KINDS = {
    "ising": lambda d: IsingComplete(int(d["n"]), float(d["beta"])),
    "modular": lambda d: Modular(ModularFunction(d["weights"], d.get("offset", 0.0))),
    "facility_location": lambda d: FacilityLocation(np.asarray(d["C"], dtype=float)),
    "fl_diversity": lambda d: FlDiversity(np.asarray(d["w"], dtype=float), np.asarray(d["C"], dtype=float)),
    "logdet_dpp": lambda d: LogDetDpp(np.asarray(d["K"], dtype=float), float(d.get("sigma", 1.0))),
    "table": lambda d: ExplicitTable(np.asarray(d["values"], dtype=float)),
}


def model_from_dict(d: dict) -> SetFunction:
    try:
        build = _KINDS[d["kind"]]
    except KeyError:
        raise ModelError(f"unknown model kind {d.get('kind')!r}") from None
    return build(d)


def save_model(model, path):
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))


# --- data ingestion ----------------------------------------------------------

def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_matrix_csv(text: str) -> np.ndarray:
    rows = [(i, r) for i, r in enumerate(csv.reader(io.StringIO(text)), start=1)
            if any(c.strip() for c in r)]
    if rows and not all(_is_number(c) for c in rows[0][1]):
        rows = rows[1:]  # header
    if not rows:
        raise EmptyFileError()
    width = len(rows[0][1])
    out = np.empty((len(rows), width))
    for k, (lineno, r) in enumerate(rows):
        if len(r) != width:
            raise RaggedRowError(lineno, width, len(r))
        for j, cell in enumerate(r):
            try:
                out[k, j] = float(cell)
            except ValueError:
                raise NonNumericCellError(lineno, j + 1, cell) from None
    return out


def load_matrix_csv(path) -> np.ndarray:
    """Rows are ground-set elements, columns are facilities/benefit dimensions."""
    return parse_matrix_csv(Path(path).read_text(encoding="utf-8"))


def subsample_matrix(C, n, L, seed):
    C = np.asarray(C)
    if n > C.shape[0] or L > C.shape[1] or n < 1 or L < 1:
        raise ValueError(f"cannot subsample {n}x{L} from a {C.shape[0]}x{C.shape[1]} matrix")
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.choice(C.shape[0], size=n, replace=False))
    cols = np.sort(rng.choice(C.shape[1], size=L, replace=False))
    return C[np.ix_(rows, cols)].copy()


@dataclass(frozen=True)
class SynthParams:
    """Knobs for the desk-scale stand-in models. Defaults are arbitrary."""

    density: float = 0.1
    scale: float = 1.0
    sigma: float = 0.5
    jitter: float = 1e-6
    utility_mean: float = -1.0


SYNTH_DEFAULT_L = {"water-like": 500, "sensor-like": 10, "game-like": 10}


def synthesize_model(kind, n, L=None, seed=0, params=SynthParams()):
    """Random stand-ins for the water, sensor and game models.

    water-like: facility location with sparse exponential benefits.
    sensor-like: log-det DPP over K = G G^T / L + jitter I, G standard normal n x L.
    game-like: facility-location diversity with Gaussian utilities.
    """
    if n < 1:
        raise ValueError("n must be positive")
    L = SYNTH_DEFAULT_L.get(kind, 10) if L is None else L
    if L < 1:
        raise ValueError("L must be positive")
    rng = np.random.default_rng(seed)
    if kind == "water-like":
        mask = rng.random((n, L)) < params.density
        C = params.scale * mask * rng.exponential(1.0, (n, L))
        return FacilityLocation(C)
    if kind == "sensor-like":
        G = rng.standard_normal((n, L))
        Km = G @ G.T / L + params.jitter * np.eye(n)
        Km = (Km + Km.T) / 2
        return LogDetDpp(Km, params.sigma)
    if kind == "game-like":
        w = rng.normal(params.utility_mean, 1.0, n)
        C = params.scale * rng.exponential(1.0, (n, L))
        return FlDiversity(w, C)
    raise ValueError(f"unknown synthetic model kind {kind!r}")
