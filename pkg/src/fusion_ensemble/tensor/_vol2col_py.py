"""Pure-numpy vol2col / col2vol, used when the compiled extension is absent."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def vol2col(x, kt, kh, kw, st, sh, sw):
    """Unfold an already padded [B,C,T,H,W] volume into [B, C*kt*kh*kw, T'*H'*W']."""
    b, c = x.shape[:2]
    win = sliding_window_view(x, (kt, kh, kw), axis=(2, 3, 4))[:, :, ::st, ::sh, ::sw]
    to, ho, wo = win.shape[2:5]
    cols = win.transpose(0, 1, 5, 6, 7, 2, 3, 4)
    return np.ascontiguousarray(cols).reshape(b, c * kt * kh * kw, to * ho * wo)


def col2vol(cols, shape, kt, kh, kw, st, sh, sw):
    """Adjoint of :func:`vol2col`: scatter-add columns back into a padded volume."""
    b, c, t, h, w = shape
    to = (t - kt) // st + 1
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    cols6 = cols.reshape(b, c, kt, kh, kw, to, ho, wo)
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kt):
        for j in range(kh):
            for k in range(kw):
                out[:, :, i:i + st * to:st, j:j + sh * ho:sh, k:k + sw * wo:sw] += cols6[:, :, i, j, k]
    return out
