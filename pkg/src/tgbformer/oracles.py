"""Naive scalar-loop reference implementations.

Each function recomputes one kernel element by element with Python floats
and explicit loops, sharing no code with the vectorized tensor path. They
are slow by design and meant for instances with a few dozen tokens.
"""

from __future__ import annotations

import math

import numpy as np

from .stgm import NORM_FLOOR, PER_LOCATION, STD_FLOOR


def _a(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def dot(u, v) -> float:
    total = 0.0
    for i in range(len(u)):
        total += float(u[i]) * float(v[i])
    return total


def matvec(mat, v) -> list[float]:
    return [dot(row, v) for row in mat]


def matmul(a, b) -> np.ndarray:
    a, b = _a(a), _a(b)
    m, k = a.shape
    n = b.shape[1]
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            total = 0.0
            for p in range(k):
                total += a[i, p] * b[p, j]
            out[i, j] = total
    return out


def softmax(values) -> list[float]:
    top = max(values)
    exps = [math.exp(v - top) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def relu(x: float) -> float:
    return x if x > 0 else 0.0


# transformer branch


def attention(queries, keys, params) -> np.ndarray:
    """sum_t W_t [sum_k O_tqk W'_t x_k] for every query row."""
    z, x = _a(queries), _a(keys)
    w_out, w_val, w_q, w_k = (_a(t) for t in (params.out_proj, params.value, params.query, params.key))
    heads, dv, d = w_val.shape
    out = np.zeros((len(z), d))
    for t in range(heads):
        key_proj = [matvec(w_k[t], x[k]) for k in range(len(x))]
        val_proj = [matvec(w_val[t], x[k]) for k in range(len(x))]
        for q in range(len(z)):
            qp = matvec(w_q[t], z[q])
            weights = softmax([dot(qp, key_proj[k]) / math.sqrt(dv) for k in range(len(x))])
            mixed = [0.0] * dv
            for k in range(len(x)):
                for j in range(dv):
                    mixed[j] += weights[k] * val_proj[k][j]
            head_out = matvec(w_out[t], mixed)
            for i in range(d):
                out[q, i] += head_out[i]
    return out


def attention_weight_sums(queries, keys, params) -> np.ndarray:
    """sum_k O_tqk for every (t, q), computed from unnormalized exponentials."""
    z, x = _a(queries), _a(keys)
    w_q, w_k = _a(params.query), _a(params.key)
    heads, dv, _ = w_q.shape
    sums = np.zeros((heads, len(z)))
    for t in range(heads):
        for q in range(len(z)):
            weights = softmax([dot(matvec(w_q[t], z[q]), matvec(w_k[t], x[k])) / math.sqrt(dv)
                               for k in range(len(x))])
            sums[t, q] = math.fsum(weights)
    return sums


def spat_mhsa(z, params) -> np.ndarray:
    return attention(z, z, params)


def temp_mhsa(z, frames, params) -> np.ndarray:
    keys = np.concatenate([_a(f) for f in frames], axis=0)
    return attention(z, keys, params)


def layer_norm_row(row, gamma, beta, eps: float = 1e-5) -> list[float]:
    n = len(row)
    mu = sum(float(v) for v in row) / n
    var = sum((float(v) - mu) ** 2 for v in row) / n
    if var < eps:
        return [float(beta[i]) for i in range(n)]
    sd = math.sqrt(var)
    return [(float(row[i]) - mu) / sd * float(gamma[i]) + float(beta[i]) for i in range(n)]


def ffn_row(row, ffn) -> list[float]:
    w1, b1, w2, b2 = (_a(t) for t in (ffn.w1, ffn.b1, ffn.w2, ffn.b2))
    hidden = [relu(dot(row, w1[:, j]) + b1[j]) for j in range(w1.shape[1])]
    return [dot(hidden, w2[:, i]) + b2[i] for i in range(w2.shape[1])]


def transformer_sublayer(x, sub_out, ffn) -> np.ndarray:
    x, s = _a(x), _a(sub_out)
    g1, bt1, g2, bt2 = (_a(t) for t in (ffn.ln1_gamma, ffn.ln1_beta, ffn.ln2_gamma, ffn.ln2_beta))
    out = np.zeros_like(x)
    for r in range(len(x)):
        y = layer_norm_row([x[r, i] + s[r, i] for i in range(x.shape[1])], g1, bt1)
        f = ffn_row(y, ffn)
        out[r] = layer_norm_row([y[i] + f[i] for i in range(len(y))], g2, bt2)
    return out


def sttm_forward(embedded, params) -> np.ndarray:
    """``embedded`` is a list of N token+position matrices (M x D)."""
    frames = [_a(e) for e in embedded]
    for layer in params.layers:
        frames = [transformer_sublayer(f, spat_mhsa(f, layer.spatial_attn), layer.spatial_ffn) for f in frames]
        frames = [transformer_sublayer(f, temp_mhsa(f, frames, layer.temporal_attn), layer.temporal_ffn)
                  for f in frames]
    return np.concatenate(frames, axis=0)


# graph branch


def similarity(r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r = _a(r)
    m, d = r.shape
    var = []
    for k in range(d):
        mu = sum(r[i, k] for i in range(m)) / m
        var.append(sum((r[i, k] - mu) ** 2 for i in range(m)) / m + STD_FLOOR)
    euc, cos, sec = np.zeros((m, m)), np.zeros((m, m)), np.zeros((m, m))
    norms = [math.sqrt(dot(r[i], r[i])) for i in range(m)]
    for i in range(m):
        for j in range(m):
            euc[i, j] = math.sqrt(sum((r[i, k] - r[j, k]) ** 2 / var[k] for k in range(d)))
            sec[i, j] = dot(r[i], r[j])
            if norms[i] >= NORM_FLOOR and norms[j] >= NORM_FLOOR:
                cos[i, j] = sec[i, j] / (norms[i] * norms[j])
    return euc, cos, sec


def edge_scores(r, mlp) -> np.ndarray:
    w1, b1, w2, b2 = (_a(t) for t in (mlp.w1, mlp.b1, mlp.w2, mlp.b2))
    euc, cos, sec = similarity(r)
    m = euc.shape[0]
    e = np.zeros((m, m))
    for i in range(m):
        for j in range(m):
            feats = (euc[i, j], cos[i, j], sec[i, j])
            hidden = [relu(dot(feats, w1[:, h]) + b1[h]) for h in range(w1.shape[1])]
            e[i, j] = dot(hidden, w2[:, 0]) + b2[0]
    return e


def adjacency(e) -> np.ndarray:
    e = _a(e)
    return np.array([softmax(list(row)) for row in e])


def adjacency_tensor(a, thresholds, lam: float) -> tuple[np.ndarray, np.ndarray]:
    a = _a(a)
    m = a.shape[0]
    s_count = len(thresholds)
    out = np.zeros((s_count, m, m))
    prob = np.zeros((m, m))
    for i in range(m):
        d_i = sum(a[i, j] + (1.0 if i == j else 0.0) for j in range(m))
        for j in range(m):
            prob[i, j] = lam * a[i, j] / d_i
    for i in range(m):
        out[0, i, i] = 1.0
        for j in range(m):
            if i == j:
                continue
            for s in range(1, s_count):
                if thresholds[s - 1] <= prob[i, j] < thresholds[s]:
                    out[s, i, j] = a[i, j]
    return out, prob


def soft_select(at, phi1, phi2) -> tuple[np.ndarray, np.ndarray]:
    at = _a(at)
    result = []
    for phi in (phi1, phi2):
        w = softmax(list(_a(phi)))
        q = np.zeros(at.shape[1:])
        for i in range(at.shape[1]):
            for j in range(at.shape[2]):
                q[i, j] = sum(w[s] * at[s, i, j] for s in range(len(w)))
        result.append(q)
    return result[0], result[1]


def laplacian_normalize(y) -> np.ndarray:
    y = _a(y)
    m = y.shape[0]
    deg = [sum(y[i, j] for j in range(m)) for i in range(m)]
    out = np.zeros_like(y)
    for i in range(m):
        for j in range(m):
            out[i, j] = y[i, j] / math.sqrt(deg[i]) / math.sqrt(deg[j])
    return out


def pruned_adjacency(r, mlp, cfg) -> np.ndarray:
    a = adjacency(edge_scores(r, mlp))
    at, _ = adjacency_tensor(a, cfg.thresholds, cfg.lam)
    q1, q2 = soft_select(at, cfg.phi1, cfg.phi2)
    y = matmul(q1, q2) + np.eye(a.shape[0])
    return laplacian_normalize(y)


def dgcl(h, weight, mlp, cfg) -> np.ndarray:
    h, w = _a(h), _a(weight)
    abar = pruned_adjacency(h.T, mlp, cfg)
    wh = matmul(w, h)
    out = matmul(wh, abar)
    return np.vectorize(relu)(out) if out.size else out


def dgcb(h, block) -> np.ndarray:
    h = _a(h)
    out = h
    for w in block.weights:
        out = dgcl(out, w, block.mlp, block.prune)
    residual = h * block.prune.rho
    return residual if not block.weights else out + residual


def stgm_forward(embedded, params) -> np.ndarray:
    frames = [_a(e) for e in embedded]
    n = len(frames)
    m, d = frames[0].shape
    inter = [dgcb(f.T, params.spatial) for f in frames]        # each D x M
    out = np.zeros((n, m, d))
    if params.temporal_graph == PER_LOCATION:
        for loc in range(m):
            h = np.array([[inter[f][k, loc] for f in range(n)] for k in range(d)])  # D x N
            res = dgcb(h, params.temporal)
            for f in range(n):
                out[f, loc] = res[:, f]
    else:
        h = np.concatenate(inter, axis=1)
        res = dgcb(h, params.temporal)
        for f in range(n):
            out[f] = res[:, f * m:(f + 1) * m].T
    return out.reshape(n * m, d)


# blender


def blend(g, l, w_alpha) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(alpha_gf, alpha_lf, B) with B = alpha_gf*G + alpha_lf*L element by element."""
    g, l, w = _a(g), _a(l), _a(w_alpha)
    d, cols = g.shape
    ag, al, b = np.zeros_like(g), np.zeros_like(g), np.zeros_like(g)
    for c in range(cols):
        stacked = [g[i, c] for i in range(d)] + [l[i, c] for i in range(d)]
        for i in range(d):
            pair = softmax([dot(w[i], stacked), dot(w[d + i], stacked)])
            ag[i, c], al[i, c] = pair
            b[i, c] = pair[0] * g[i, c] + pair[1] * l[i, c]
    return ag, al, b
