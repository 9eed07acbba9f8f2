"""Pure NumPy implementations of the hot per-query kernels.

These mirror the Cython versions in ``_kernels_cy.pyx`` operation-for-
operation (same arithmetic, same association order), so the two backends
produce bit-identical results and either can back the public API.
"""

from __future__ import annotations

import numpy as np

DEPTH_TIE = 1e-6


def zbuffer_resolve(pixel_ids, depths, keys, n_pixels):
    """Pick one winning sample per pixel from flattened (pixel, depth, key) triples.

    The winner at a pixel is the sample with the smallest tie-break ``key``
    among all samples within DEPTH_TIE of that pixel's minimum depth.
    Returns an int64 array of length ``n_pixels`` holding the winning sample
    index, or -1 where no sample landed.
    """
    pixel_ids = np.asarray(pixel_ids, dtype=np.int64)
    depths = np.asarray(depths, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.int64)
    winner = np.full(n_pixels, -1, dtype=np.int64)
    if pixel_ids.size == 0:
        return winner

    min_depth = np.full(n_pixels, np.inf, dtype=np.float64)
    np.minimum.at(min_depth, pixel_ids, depths)

    tied = depths <= min_depth[pixel_ids] + DEPTH_TIE
    t_pix = pixel_ids[tied]
    t_keys = keys[tied]
    t_idx = np.nonzero(tied)[0]

    best_key = np.full(n_pixels, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(best_key, t_pix, t_keys)
    is_best = t_keys == best_key[t_pix]
    winner[t_pix[is_best]] = t_idx[is_best]
    return winner


def pull_reduce(colors, weights):
    """One pull step: 2x2 block sums of premultiplied colors and weights.

    Inputs must have even dimensions; callers pad with zero weight.
    """
    c2 = (
        colors[0::2, 0::2]
        + colors[0::2, 1::2]
        + colors[1::2, 0::2]
        + colors[1::2, 1::2]
    )
    w2 = (
        weights[0::2, 0::2]
        + weights[0::2, 1::2]
        + weights[1::2, 0::2]
        + weights[1::2, 1::2]
    )
    return c2, w2


def push_expand(values, valid, out_h, out_w):
    """One push step: validity-weighted bilinear upsample to (out_h, out_w).

    ``values`` is (h, w, 3) with entries meaningful only where ``valid``;
    returns (out values, out validity).  Fine pixel centers sit at coarse
    coordinate (r + 0.5) / 2, giving 0.75/0.25 neighbor weights.
    """
    h, w = valid.shape
    r = np.arange(out_h, dtype=np.int64)
    c = np.arange(out_w, dtype=np.int64)

    r0 = np.clip(np.where(r % 2 == 0, r // 2 - 1, r // 2), 0, h - 1)
    r1 = np.clip(np.where(r % 2 == 0, r // 2, r // 2 + 1), 0, h - 1)
    wr0 = np.where(r % 2 == 0, 0.25, 0.75)
    c0 = np.clip(np.where(c % 2 == 0, c // 2 - 1, c // 2), 0, w - 1)
    c1 = np.clip(np.where(c % 2 == 0, c // 2, c // 2 + 1), 0, w - 1)
    wc0 = np.where(c % 2 == 0, 0.25, 0.75)

    vf = valid.astype(np.float64)
    num = np.zeros((out_h, out_w, 3), dtype=np.float64)
    den = np.zeros((out_h, out_w), dtype=np.float64)
    for ri, wrow in ((r0, wr0), (r1, 1.0 - wr0)):
        for ci, wcol in ((c0, wc0), (c1, 1.0 - wc0)):
            wgt = wrow[:, None] * wcol[None, :]
            sub_valid = vf[ri[:, None], ci[None, :]]
            num += (wgt * sub_valid)[..., None] * values[ri[:, None], ci[None, :]]
            den += wgt * sub_valid
    out_valid = den > 0.0
    out = np.zeros_like(num)
    np.divide(num, den[..., None], out=out, where=out_valid[..., None])
    return out, out_valid
