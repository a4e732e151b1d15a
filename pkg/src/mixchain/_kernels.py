"""Hot loops: set-function evaluation and the single-step samplers.

Every kernel takes pre-drawn uniforms instead of an RNG so the compiled and
uncompiled paths consume randomness identically. A model is passed as the
packed tuple ``(kind, scalar, vec, mat, table)`` and a proposal mixture as
``(log_w, weights, incl_prob, comp_cdf, fs_cdf, fs_prob)``; see
``models.SetFunction.pack`` and ``logmodular.MixtureProposal.pack``.
"""
import math

import numpy as np

from ._jit import njit

MODULAR = 0
ISING = 1
FACILITY = 2
FL_DIVERSITY = 3
LOGDET = 4
TABLE = 5

GIBBS = 0
M3 = 1
COMBINED = 2
GIBBS_SWAP = 3
M3_FIXED = 4
COMBINED_FIXED = 5


def uniforms_per_step(code, n):
    """Fixed number of uniforms each step of sampler ``code`` consumes."""
    if code == GIBBS:
        return 2
    if code == GIBBS_SWAP:
        return 3
    if code in (M3, M3_FIXED):
        return n + 2
    return n + 3


@njit
def work_size(n, L):
    return max(n * n, L, 1) + n


@njit
def _facility_term(mat, x, best):
    n = x.shape[0]
    L = mat.shape[1]
    seen = False
    for i in range(n):
        if x[i]:
            if not seen:
                for j in range(L):
                    best[j] = mat[i, j]
                seen = True
            else:
                for j in range(L):
                    if mat[i, j] > best[j]:
                        best[j] = mat[i, j]
    if not seen:
        return 0.0
    total = 0.0
    for j in range(L):
        total += best[j]
    return total


@njit
def _logdet_term(mat, sigma2, x, work, iwork):
    n = x.shape[0]
    m = 0
    for i in range(n):
        if x[i]:
            iwork[m] = i
            m += 1
    if m == 0:
        return 0.0
    # lower-triangular Cholesky of K[S, S] + sigma^2 I, in place in work
    for a in range(m):
        for b in range(a + 1):
            work[a * m + b] = mat[iwork[a], iwork[b]]
        work[a * m + a] += sigma2
    logdet = 0.0
    for j in range(m):
        s = work[j * m + j]
        for k in range(j):
            s -= work[j * m + k] * work[j * m + k]
        if not s > 0.0:
            raise ValueError("kernel submatrix is not positive definite")
        d = math.sqrt(s)
        work[j * m + j] = d
        logdet += math.log(s)
        for i in range(j + 1, m):
            t = work[i * m + j]
            for k in range(j):
                t -= work[i * m + k] * work[j * m + k]
            work[i * m + j] = t / d
    return logdet


@njit
def evaluate(mp, x, work, iwork):
    kind, scalar, vec, mat, table = mp
    n = x.shape[0]
    if kind == ISING:
        k = 0
        for v in range(n):
            if x[v]:
                k += 1
        return -(2.0 * scalar / n) * (k * (n - k))  # integer product keeps F(S) = F(V - S) exact
    if kind == MODULAR:
        total = scalar
        for v in range(n):
            if x[v]:
                total += vec[v]
        return total
    if kind == FACILITY:
        return _facility_term(mat, x, work)
    if kind == FL_DIVERSITY:
        total = 0.0
        for v in range(n):
            if x[v]:
                total += vec[v]
        return total + _facility_term(mat, x, work)
    if kind == LOGDET:
        return _logdet_term(mat, scalar, x, work, iwork)
    mask = 0
    for v in range(n):
        if x[v]:
            mask |= 1 << v
    return table[mask]


@njit
def logistic(d):
    if d >= 0.0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


@njit
def mixture_log_unnorm(mx, x):
    """log sum_i w_i exp(m_i(x)), fixed component and element order."""
    log_w = mx[0]
    W = mx[1]
    r, n = W.shape
    best = -np.inf
    total = 0.0
    for i in range(r):
        s = 0.0
        for v in range(n):
            if x[v]:
                s += W[i, v]
        s += log_w[i]
        # streaming log-sum-exp
        if s > best:
            total = total * math.exp(best - s) + 1.0
            best = s
        else:
            total += math.exp(s - best)
    return best + math.log(total)


@njit
def _pick(cdf, u):
    lo = 0
    hi = cdf.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


@njit
def sample_component(incl, i, u, out):
    n = out.shape[0]
    for v in range(n):
        out[v] = 1 if u[v] < incl[i, v] else 0


@njit
def sample_component_fixed(fs_prob, i, ell, u, out):
    n = out.shape[0]
    need = ell
    for v in range(n):
        if need > 0 and u[v] < fs_prob[i, v, need]:
            out[v] = 1
            need -= 1
        else:
            out[v] = 0


@njit
def propose(mx, fixed, ell, u, out):
    """Draw from the mixture (or its size-``ell`` restriction); uses n+1 uniforms."""
    if fixed:
        i = _pick(mx[4], u[0])
        sample_component_fixed(mx[5], i, ell, u[1:], out)
    else:
        i = _pick(mx[3], u[0])
        sample_component(mx[2], i, u[1:], out)


@njit
def gibbs_step(mp, x, f_cur, u, work, iwork):
    n = x.shape[0]
    v = int(u[0] * n)
    if v >= n:
        v = n - 1
    x[v] ^= 1
    f_new = evaluate(mp, x, work, iwork)
    if u[1] < logistic(f_new - f_cur):
        return f_new, 1
    x[v] ^= 1
    return f_cur, 0


@njit
def swap_step(mp, x, f_cur, u, work, iwork):
    n = x.shape[0]
    ell = 0
    for v in range(n):
        if x[v]:
            ell += 1
    if ell == 0 or ell == n:
        return f_cur, 0
    a = int(u[0] * ell)
    if a >= ell:
        a = ell - 1
    b = int(u[1] * (n - ell))
    if b >= n - ell:
        b = n - ell - 1
    out_v = -1
    in_v = -1
    ca = 0
    cb = 0
    for v in range(n):
        if x[v]:
            if ca == a:
                out_v = v
            ca += 1
        else:
            if cb == b:
                in_v = v
            cb += 1
    x[out_v] = 0
    x[in_v] = 1
    f_new = evaluate(mp, x, work, iwork)
    if u[2] < logistic(f_new - f_cur):
        return f_new, 1
    x[out_v] = 1
    x[in_v] = 0
    return f_cur, 0


@njit
def m3_step(mp, mx, fixed, ell, x, y, f_cur, lq_cur, u, work, iwork):
    n = x.shape[0]
    propose(mx, fixed, ell, u, y)
    f_new = evaluate(mp, y, work, iwork)
    lq_new = mixture_log_unnorm(mx, y)
    log_ratio = (f_new - lq_new) - (f_cur - lq_cur)
    if log_ratio >= 0.0 or u[n + 1] < math.exp(log_ratio):
        for v in range(n):
            x[v] = y[v]
        return f_new, lq_new, 1
    return f_cur, lq_cur, 0


@njit
def step(code, mp, mx, alpha, ell, x, y, f_cur, lq_cur, u, work, iwork):
    """One transition of sampler ``code``; returns (F, log q, accepted)."""
    if code == GIBBS:
        f, acc = gibbs_step(mp, x, f_cur, u, work, iwork)
        return f, lq_cur, acc
    if code == GIBBS_SWAP:
        f, acc = swap_step(mp, x, f_cur, u, work, iwork)
        return f, lq_cur, acc
    if code == M3:
        return m3_step(mp, mx, False, ell, x, y, f_cur, lq_cur, u, work, iwork)
    if code == M3_FIXED:
        return m3_step(mp, mx, True, ell, x, y, f_cur, lq_cur, u, work, iwork)
    # combined variants: u[0] selects the branch
    if u[0] < alpha:
        if code == COMBINED:
            f, acc = gibbs_step(mp, x, f_cur, u[1:], work, iwork)
        else:
            f, acc = swap_step(mp, x, f_cur, u[1:], work, iwork)
        # a Gibbs move changes x, so the cached log q is stale
        if acc:
            lq_cur = mixture_log_unnorm(mx, x)
        return f, lq_cur, acc
    return m3_step(mp, mx, code == COMBINED_FIXED, ell, x, y, f_cur, lq_cur, u[1:], work, iwork)


@njit
def run_block(code, mp, mx, alpha, ell, x, f_cur, lq_cur, U, record_every, out):
    """Advance one chain through ``U.shape[0]`` steps.

    The state is written to ``out[k]`` after every ``record_every``-th step.
    Returns (F, log q, accepted count, records written).
    """
    n = x.shape[0]
    y = np.zeros(n, dtype=np.uint8)
    work = np.empty(work_size(n, mp[3].shape[1]))
    iwork = np.empty(n, dtype=np.int64)
    accepted = 0
    k = 0
    for t in range(U.shape[0]):
        f_cur, lq_cur, acc = step(code, mp, mx, alpha, ell, x, y, f_cur, lq_cur, U[t], work, iwork)
        accepted += acc
        if (t + 1) % record_every == 0:
            for v in range(n):
                out[k, v] = x[v]
            k += 1
    return f_cur, lq_cur, accepted, k


@njit
def greedy_permutation(mp, n, comp_weights, n_comp):
    """Greedy ordering maximizing F(S) - log sum_j exp(m_j(S)).

    Only the first ``n_comp`` rows of ``comp_weights`` are used; with none, the
    mixture term is dropped. Ties go to the lowest index.
    """
    mat = mp[3]
    x = np.zeros(n, dtype=np.uint8)
    work = np.empty(work_size(n, mat.shape[1]))
    iwork = np.empty(n, dtype=np.int64)
    chosen = np.zeros(n, dtype=np.uint8)
    order = np.empty(n, dtype=np.int64)
    base = np.zeros(max(n_comp, 1))
    acc = np.empty(max(n_comp, 1))
    for pos in range(n):
        best_v = -1
        best_val = -np.inf
        for v in range(n):
            if chosen[v]:
                continue
            x[v] = 1
            val = evaluate(mp, x, work, iwork)
            x[v] = 0
            if n_comp > 0:
                top = -np.inf
                for j in range(n_comp):
                    acc[j] = base[j] + comp_weights[j, v]
                    if acc[j] > top:
                        top = acc[j]
                s = 0.0
                for j in range(n_comp):
                    s += math.exp(acc[j] - top)
                val -= top + math.log(s)
            if best_v < 0 or val > best_val:
                best_v = v
                best_val = val
        order[pos] = best_v
        chosen[best_v] = 1
        x[best_v] = 1
        for j in range(n_comp):
            base[j] += comp_weights[j, best_v]
    return order
