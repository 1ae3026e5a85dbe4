"""Brute-force reference implementations used as independent test oracles.

Nothing here imports the package; each routine is a direct transcription of
the defining formula with explicit loops, in float64.
"""

import math

import numpy as np


def conv3d_loops(x, w, b, stride=(1, 1, 1), pad=(0, 0, 0)):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    B, C, T, H, W = x.shape
    O, _, kt, kh, kw = w.shape
    pt, ph, pw = pad
    st, sh, sw = stride
    xp = np.zeros((B, C, T + 2 * pt, H + 2 * ph, W + 2 * pw))
    xp[:, :, pt:pt + T, ph:ph + H, pw:pw + W] = x
    To = (T + 2 * pt - kt) // st + 1
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    out = np.zeros((B, O, To, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for t in range(To):
                for i in range(Ho):
                    for j in range(Wo):
                        acc = 0.0 if b is None else float(b[o])
                        for c in range(C):
                            for a in range(kt):
                                for p in range(kh):
                                    for q in range(kw):
                                        acc += xp[n, c, t * st + a, i * sh + p, j * sw + q] * w[o, c, a, p, q]
                        out[n, o, t, i, j] = acc
    return out


def matmul_loops(x, w, b):
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n, d_in = x.shape
    d_out = w.shape[0]
    out = np.zeros((n, d_out))
    for r in range(n):
        for o in range(d_out):
            acc = 0.0 if b is None else float(b[o])
            for k in range(d_in):
                acc += x[r, k] * w[o, k]
            out[r, o] = acc
    return out


def softmax_direct(v):
    e = [math.exp(float(x)) for x in v]
    s = sum(e)
    return np.array([x / s for x in e])


def cross_entropy_direct(logits, labels):
    total = 0.0
    for row, y in zip(np.asarray(logits, dtype=np.float64), labels):
        p = softmax_direct(row)
        total += -math.log(p[int(y)])
    return total / len(labels)


def attention_direct(tokens, wq, wk, wv, wo, bo):
    """Single-head self-attention over each sample's token rows, mean-pooled, projected."""
    tokens = np.asarray(tokens, dtype=np.float64)
    out = []
    for x in tokens:
        q = x @ np.asarray(wq, np.float64).T
        k = x @ np.asarray(wk, np.float64).T
        v = x @ np.asarray(wv, np.float64).T
        d_k = q.shape[-1]
        n = x.shape[0]
        att = np.zeros_like(v)
        weights = np.zeros((n, n))
        for i in range(n):
            scores = [float(q[i] @ k[j]) / math.sqrt(d_k) for j in range(n)]
            weights[i] = softmax_direct(scores)
            for j in range(n):
                att[i] += weights[i, j] * v[j]
        pooled = att.mean(axis=0)
        out.append(np.asarray(wo, np.float64) @ pooled + np.asarray(bo, np.float64))
    return np.array(out)


def argmax_scan(row):
    best, best_i = -math.inf, 0
    for i, v in enumerate(row):
        if v > best:
            best, best_i = v, i
    return best_i


def adamw_two_steps(p, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, wd=0.01):
    """Scalar AdamW unrolled by hand for len(grads) steps."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p = p - lr * (m_hat / (math.sqrt(v_hat) + eps) + wd * p)
    return p, m, v


def lstm_cell_hand(x, h, c, w, b):
    """One LSTM step; w is [4H, D+H] with gate blocks ordered input, forget, cell, output."""
    z = w @ np.concatenate([x, h]) + b
    H = h.shape[0]
    sig = lambda a: 1.0 / (1.0 + np.exp(-a))
    i = sig(z[:H])
    f = sig(z[H:2 * H])
    g = np.tanh(z[2 * H:3 * H])
    o = sig(z[3 * H:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def bilinear_pixel(img, out_h, out_w, r, c):
    """Half-pixel-centre bilinear sample for output pixel (r, c)."""
    in_h, in_w = img.shape
    y = (r + 0.5) * in_h / out_h - 0.5
    x = (c + 0.5) * in_w / out_w - 0.5
    y = min(max(y, 0.0), in_h - 1)
    x = min(max(x, 0.0), in_w - 1)
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, in_h - 1), min(x0 + 1, in_w - 1)
    dy, dx = y - y0, x - x0
    return ((1 - dy) * (1 - dx) * img[y0, x0] + (1 - dy) * dx * img[y0, x1]
            + dy * (1 - dx) * img[y1, x0] + dy * dx * img[y1, x1])
