"""Hot numeric kernels.

Every kernel exists in two flavours: a numba ``@njit`` version and a plain
numpy version.  The dispatching functions at the bottom of this module pick
one according to ``USE_NUMBA``, which is on by default and switched off by
setting the environment variable ``SHADOWOT_DISABLE_NUMBA=1`` (or when numba
cannot be imported).  Both flavours are importable directly so that the
benchmark and the tests can compare them side by side.

Kernels that are mostly index bookkeeping (the transport simplex and the
bottleneck max-flow) are written once in a numba-compatible subset of numpy
and simply left uncompiled on the fallback path.
"""

import math
import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("SHADOWOT_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def _njit(func):
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True)(func)


# ---------------------------------------------------------------------------
# product-metric distances between atoms of a product space
# ---------------------------------------------------------------------------
#
# ``dists`` is a padded (N, n_max, n_max) stack of factor distance matrices,
# ``idx_a``/``idx_b`` are (M, N) integer arrays of atom indices.  With
# ``root=False`` and finite p the kernels return sum_i d_i^p (the transport
# cost), otherwise the metric d_{X,p} itself.


def product_distances_numpy(dists, idx_a, idx_b, p, root):
    nfac = idx_a.shape[1]
    out = np.zeros((idx_a.shape[0], idx_b.shape[0]))
    for k in range(nfac):
        dk = dists[k][idx_a[:, k][:, None], idx_b[:, k][None, :]]
        if math.isinf(p):
            np.maximum(out, dk, out=out)
        else:
            out += dk**p
    if root and not math.isinf(p):
        out = out ** (1.0 / p)
    return out


def _product_distances_loops(dists, idx_a, idx_b, p, root):
    ma = idx_a.shape[0]
    mb = idx_b.shape[0]
    nfac = idx_a.shape[1]
    out = np.zeros((ma, mb))
    inf_p = math.isinf(p)
    for r in range(ma):
        for s in range(mb):
            acc = 0.0
            for k in range(nfac):
                d = dists[k, idx_a[r, k], idx_b[s, k]]
                if inf_p:
                    if d > acc:
                        acc = d
                elif p == 1.0:
                    acc += d
                elif p == 2.0:
                    acc += d * d
                else:
                    acc += d**p
            if root and not inf_p and p != 1.0:
                acc = math.sqrt(acc) if p == 2.0 else acc ** (1.0 / p)
            out[r, s] = acc
    return out


product_distances_numba = _njit(_product_distances_loops)


# ---------------------------------------------------------------------------
# Lipschitz constant of a function on a product support w.r.t. d_{X,p}
# ---------------------------------------------------------------------------


def lipschitz_numpy(values, dists, idx, p, chunk=256):
    best = 0.0
    m = idx.shape[0]
    for start in range(0, m, chunk):
        stop = min(start + chunk, m)
        d = product_distances_numpy(dists, idx[start:stop], idx, p, True)
        diff = np.abs(values[start:stop, None] - values[None, :])
        mask = d > 0
        if np.any(mask):
            best = max(best, float(np.max(diff[mask] / d[mask])))
    return best


def _lipschitz_loops(values, dists, idx, p):
    m = idx.shape[0]
    nfac = idx.shape[1]
    inf_p = math.isinf(p)
    best = 0.0
    for r in range(m):
        for s in range(r + 1, m):
            acc = 0.0
            for k in range(nfac):
                d = dists[k, idx[r, k], idx[s, k]]
                if inf_p:
                    if d > acc:
                        acc = d
                elif p == 1.0:
                    acc += d
                elif p == 2.0:
                    acc += d * d
                else:
                    acc += d**p
            if not inf_p and p != 1.0:
                acc = math.sqrt(acc) if p == 2.0 else acc ** (1.0 / p)
            if acc > 0.0:
                ratio = abs(values[r] - values[s]) / acc
                if ratio > best:
                    best = ratio
    return best


lipschitz_numba = _njit(_lipschitz_loops)


# ---------------------------------------------------------------------------
# exact transport: transportation simplex on a dense (m, n) problem
# ---------------------------------------------------------------------------


def _transport_simplex(a, b, C, tol, max_iter):
    """Primal transportation simplex (MODI).

    Northwest-corner start, Dantzig pricing with first-index tie-breaking,
    switching to Bland's rule during long runs of degenerate pivots.
    Returns ``(plan, n_iter, status)`` with status 0 = optimal,
    1 = iteration cap reached.
    """
    m, n = C.shape
    flow = np.zeros((m, n))
    basic = np.zeros((m, n), dtype=np.bool_)
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    while True:
        if i == m - 1 and j == n - 1:
            flow[i, j] = max(ra[i], 0.0)
            basic[i, j] = True
            break
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            q = ra[i]
            flow[i, j] = q
            basic[i, j] = True
            rb[j] = max(rb[j] - q, 0.0)
            ra[i] = 0.0
            i += 1
        else:
            q = rb[j]
            flow[i, j] = q
            basic[i, j] = True
            ra[i] = max(ra[i] - q, 0.0)
            rb[j] = 0.0
            j += 1

    scale = 1.0 + np.max(np.abs(C))
    thresh = tol * scale
    u = np.zeros(m)
    v = np.zeros(n)
    seen = np.zeros(m + n, dtype=np.bool_)
    parent = np.zeros(m + n, dtype=np.int64)
    queue = np.zeros(m + n, dtype=np.int64)
    streak = 0
    it = 0
    status = 1
    while it < max_iter:
        # potentials u_i + v_j = C_ij on the basis tree
        seen[:] = False
        queue[0] = 0
        seen[0] = True
        u[0] = 0.0
        head = 0
        tail = 1
        while head < tail:
            node = queue[head]
            head += 1
            if node < m:
                for jj in np.nonzero(basic[node])[0]:
                    if not seen[m + jj]:
                        seen[m + jj] = True
                        v[jj] = C[node, jj] - u[node]
                        queue[tail] = m + jj
                        tail += 1
            else:
                col = node - m
                for ii in np.nonzero(basic[:, col])[0]:
                    if not seen[ii]:
                        seen[ii] = True
                        u[ii] = C[ii, col] - v[col]
                        queue[tail] = ii
                        tail += 1

        red = C - u.reshape(m, 1) - v.reshape(1, n)
        red_flat = red.ravel()
        basic_flat = basic.ravel()
        enter = -1
        if streak > m + n:
            for k in range(m * n):
                if (not basic_flat[k]) and red_flat[k] < -thresh:
                    enter = k
                    break
        else:
            best = -thresh
            for k in np.nonzero(~basic_flat)[0]:
                if red_flat[k] < best:
                    best = red_flat[k]
                    enter = k
        if enter < 0:
            status = 0
            break
        ie = enter // n
        je = enter % n

        # cycle: tree path from row ie to column je
        seen[:] = False
        parent[:] = -1
        queue[0] = ie
        seen[ie] = True
        head = 0
        tail = 1
        target = m + je
        while head < tail and not seen[target]:
            node = queue[head]
            head += 1
            if node < m:
                for jj in np.nonzero(basic[node])[0]:
                    if not seen[m + jj]:
                        seen[m + jj] = True
                        parent[m + jj] = node
                        queue[tail] = m + jj
                        tail += 1
            else:
                col = node - m
                for ii in np.nonzero(basic[:, col])[0]:
                    if not seen[ii]:
                        seen[ii] = True
                        parent[ii] = node
                        queue[tail] = ii
                        tail += 1

        # walk back from column je to row ie collecting alternating cells
        cyc_r = np.zeros(m + n, dtype=np.int64)
        cyc_c = np.zeros(m + n, dtype=np.int64)
        ncyc = 0
        node = target
        while node != ie:
            par = parent[node]
            if node >= m:
                cyc_r[ncyc] = par
                cyc_c[ncyc] = node - m
            else:
                cyc_r[ncyc] = node
                cyc_c[ncyc] = par - m
            ncyc += 1
            node = par
        # cells at even positions of the walk are the "minus" cells
        theta = np.inf
        leave = -1
        for k in range(0, ncyc, 2):
            r = cyc_r[k]
            c = cyc_c[k]
            f = flow[r, c]
            lin = r * n + c
            if f < theta or (f == theta and lin < leave):
                theta = f
                leave = lin
        for k in range(ncyc):
            r = cyc_r[k]
            c = cyc_c[k]
            if k % 2 == 0:
                flow[r, c] = max(flow[r, c] - theta, 0.0)
            else:
                flow[r, c] = flow[r, c] + theta
        flow[ie, je] = theta
        lr = leave // n
        lc = leave % n
        flow[lr, lc] = 0.0
        basic[lr, lc] = False
        basic[ie, je] = True
        if theta > 0.0:
            streak = 0
        else:
            streak += 1
        it += 1
    return flow, it, status


transport_simplex_numpy = _transport_simplex
transport_simplex_numba = _njit(_transport_simplex)


# ---------------------------------------------------------------------------
# bottleneck feasibility: max-flow on the bipartite graph of allowed pairs
# ---------------------------------------------------------------------------


def _bipartite_maxflow(a, b, allowed, eps):
    """Edmonds-Karp on source -> rows (cap a) -> cols (uncapacitated where
    allowed) -> sink (cap b).  Returns the total flow and the flow matrix."""
    m, n = allowed.shape
    F = np.zeros((m, n))
    ra = a.copy()
    rb = b.copy()
    total = 0.0
    parent = np.zeros(m + n, dtype=np.int64)
    queue = np.zeros(m + n, dtype=np.int64)
    while True:
        parent[:] = -2
        head = 0
        tail = 0
        for i in range(m):
            if ra[i] > eps:
                parent[i] = -1
                queue[tail] = i
                tail += 1
        found = -1
        while head < tail and found < 0:
            node = queue[head]
            head += 1
            if node < m:
                for jj in np.nonzero(allowed[node])[0]:
                    col = m + jj
                    if parent[col] == -2:
                        parent[col] = node
                        if rb[jj] > eps:
                            found = col
                            break
                        queue[tail] = col
                        tail += 1
            else:
                col = node - m
                for ii in np.nonzero(F[:, col] > eps)[0]:
                    if parent[ii] == -2:
                        parent[ii] = node
                        queue[tail] = ii
                        tail += 1
        if found < 0:
            break
        delta = rb[found - m]
        node = found
        while True:
            par = parent[node]
            if node >= m:
                node = par
            else:
                if par == -1:
                    delta = min(delta, ra[node])
                    break
                delta = min(delta, F[node, par - m])
                node = par
        rb[found - m] -= delta
        node = found
        while True:
            par = parent[node]
            if node >= m:
                F[par, node - m] += delta
                node = par
            else:
                if par == -1:
                    ra[node] -= delta
                    break
                F[node, par - m] -= delta
                node = par
        total += delta
    return total, F


bipartite_maxflow_numpy = _bipartite_maxflow
bipartite_maxflow_numba = _njit(_bipartite_maxflow)


# ---------------------------------------------------------------------------
# two-marginal Sinkhorn in the log domain
# ---------------------------------------------------------------------------
#
# The iterate is log pi = log_a (+) log_b + neg_c + phi1 (+) phi2.  Step n
# fits marginal 1 for odd n and marginal 2 for even n.  The loop stops as soon
# as both marginal TV errors are below ``tol`` or ``n == max_iter``.


def _lse_rows_numpy(M):
    mx = np.max(M, axis=1)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    return mx + np.log(np.sum(np.exp(M - mx[:, None]), axis=1))


def _marginal_errors_numpy(log_pi, a, b):
    pi = np.exp(log_pi)
    e1 = 0.5 * np.sum(np.abs(pi.sum(axis=1) - a))
    e2 = 0.5 * np.sum(np.abs(pi.sum(axis=0) - b))
    return e1, e2


def sinkhorn_log_numpy(neg_c, a, b, phi1, phi2, n_start, tol, max_iter):
    log_a = np.log(a)
    log_b = np.log(b)
    phi1 = phi1.copy()
    phi2 = phi2.copy()
    n = n_start
    e1, e2 = _marginal_errors_numpy(log_a[:, None] + log_b[None, :] + neg_c + phi1[:, None] + phi2[None, :], a, b)
    while n < max_iter and max(e1, e2) >= tol:
        n += 1
        if n % 2 == 1:
            phi1 = -_lse_rows_numpy(neg_c + (log_b + phi2)[None, :])
        else:
            phi2 = -_lse_rows_numpy(neg_c.T + (log_a + phi1)[None, :])
        log_pi = log_a[:, None] + log_b[None, :] + neg_c + phi1[:, None] + phi2[None, :]
        e1, e2 = _marginal_errors_numpy(log_pi, a, b)
    return phi1, phi2, n, e1, e2


def _sinkhorn_log_loops(neg_c, a, b, phi1, phi2, n_start, tol, max_iter):
    m, k = neg_c.shape
    log_a = np.log(a)
    log_b = np.log(b)
    phi1 = phi1.copy()
    phi2 = phi2.copy()
    n = n_start
    row = np.zeros(m)
    col = np.zeros(k)

    def errors():
        row[:] = 0.0
        col[:] = 0.0
        for i in range(m):
            for j in range(k):
                w = math.exp(log_a[i] + log_b[j] + neg_c[i, j] + phi1[i] + phi2[j])
                row[i] += w
                col[j] += w
        e1 = 0.0
        for i in range(m):
            e1 += abs(row[i] - a[i])
        e2 = 0.0
        for j in range(k):
            e2 += abs(col[j] - b[j])
        return 0.5 * e1, 0.5 * e2

    e1, e2 = errors()
    while n < max_iter and max(e1, e2) >= tol:
        n += 1
        if n % 2 == 1:
            for i in range(m):
                mx = -np.inf
                for j in range(k):
                    t = neg_c[i, j] + log_b[j] + phi2[j]
                    if t > mx:
                        mx = t
                s = 0.0
                for j in range(k):
                    s += math.exp(neg_c[i, j] + log_b[j] + phi2[j] - mx)
                phi1[i] = -(mx + math.log(s))
        else:
            for j in range(k):
                mx = -np.inf
                for i in range(m):
                    t = neg_c[i, j] + log_a[i] + phi1[i]
                    if t > mx:
                        mx = t
                s = 0.0
                for i in range(m):
                    s += math.exp(neg_c[i, j] + log_a[i] + phi1[i] - mx)
                phi2[j] = -(mx + math.log(s))
        e1, e2 = errors()
    return phi1, phi2, n, e1, e2


sinkhorn_log_numba = _njit(_sinkhorn_log_loops)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _as_f64(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def product_distances(dists, idx_a, idx_b, p, root=True):
    args = (_as_f64(dists), np.ascontiguousarray(idx_a, dtype=np.int64), np.ascontiguousarray(idx_b, dtype=np.int64), float(p), bool(root))
    if USE_NUMBA:
        return product_distances_numba(*args)
    return product_distances_numpy(*args)


def lipschitz(values, dists, idx, p):
    args = (_as_f64(values), _as_f64(dists), np.ascontiguousarray(idx, dtype=np.int64), float(p))
    if USE_NUMBA:
        return float(lipschitz_numba(*args))
    return float(lipschitz_numpy(*args))


def transport_simplex(a, b, C, tol=1e-12, max_iter=1_000_000):
    args = (_as_f64(a), _as_f64(b), _as_f64(C), float(tol), int(max_iter))
    if USE_NUMBA:
        return transport_simplex_numba(*args)
    return transport_simplex_numpy(*args)


def bipartite_maxflow(a, b, allowed, eps=1e-15):
    args = (_as_f64(a), _as_f64(b), np.ascontiguousarray(allowed, dtype=np.bool_), float(eps))
    if USE_NUMBA:
        return bipartite_maxflow_numba(*args)
    return bipartite_maxflow_numpy(*args)


def sinkhorn_log(neg_c, a, b, phi1, phi2, n_start, tol, max_iter):
    args = (_as_f64(neg_c), _as_f64(a), _as_f64(b), _as_f64(phi1), _as_f64(phi2), int(n_start), float(tol), int(max_iter))
    if USE_NUMBA:
        return sinkhorn_log_numba(*args)
    return sinkhorn_log_numpy(*args)
