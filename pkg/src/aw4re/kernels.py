"""Kernel backend selection and the shared pull-push orchestration.

The compiled extension (``aw4re._kernels_cy``) is preferred when it was
built; otherwise the NumPy fallback is used.  Set ``AW4RE_FORCE_FALLBACK=1``
to force the fallback (useful for the parity tests and the benchmark).
Both backends are bit-identical by construction.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

if os.environ.get("AW4RE_FORCE_FALLBACK", "0") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "numpy"
else:
    try:
        from . import _kernels_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "native"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "numpy"

DEPTH_TIE = _kernels_py.DEPTH_TIE


def backend_name() -> str:
    return BACKEND


def zbuffer_resolve(pixel_ids, depths, keys, n_pixels, impl=None):
    """Winning sample index per pixel (-1 where empty); see _kernels_py."""
    mod = impl if impl is not None else _impl
    return mod.zbuffer_resolve(
        np.ascontiguousarray(pixel_ids, dtype=np.int64),
        np.ascontiguousarray(depths, dtype=np.float64),
        np.ascontiguousarray(keys, dtype=np.int64),
        int(n_pixels),
    )


def pull_push(colors, weights, levels, impl=None):
    """Fill holes in ``colors`` from supported pixels via a pull-push pyramid.

    ``weights`` is a binary (H, W) support map.  Runs ``levels`` pull steps
    (stopping early at 1x1), then pushes back down, filling each hole with a
    validity-weighted bilinear interpolation of the coarser level.  Returns
    (filled float64 (H, W, 3), reachable bool (H, W)); pixels outside the
    pyramid's reach keep value 0 and reachable=False.
    """
    mod = impl if impl is not None else _impl
    colors = np.ascontiguousarray(colors, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if colors.shape[:2] != weights.shape:
        raise ValueError(f"shape mismatch: {colors.shape} vs {weights.shape}")

    prem = [np.ascontiguousarray(colors * weights[..., None])]
    wts = [weights]
    for _ in range(max(0, int(levels))):
        c, wgt = prem[-1], wts[-1]
        hh, ww = wgt.shape
        if hh <= 1 and ww <= 1:
            break
        ph, pw = hh + (hh & 1), ww + (ww & 1)
        if (ph, pw) != (hh, ww):
            cp = np.zeros((ph, pw, 3), dtype=np.float64)
            cp[:hh, :ww] = c
            wp = np.zeros((ph, pw), dtype=np.float64)
            wp[:hh, :ww] = wgt
        else:
            cp, wp = c, wgt
        c2, w2 = mod.pull_reduce(np.ascontiguousarray(cp), np.ascontiguousarray(wp))
        prem.append(np.ascontiguousarray(c2))
        wts.append(np.ascontiguousarray(w2))

    top_w = wts[-1]
    has = top_w > 0.0
    values = np.zeros_like(prem[-1])
    np.divide(prem[-1], top_w[..., None], out=values, where=has[..., None])
    valid = has
    for lvl in range(len(wts) - 2, -1, -1):
        c, wgt = prem[lvl], wts[lvl]
        hh, ww = wgt.shape
        up, up_valid = mod.push_expand(
            np.ascontiguousarray(values),
            np.ascontiguousarray(valid.astype(np.uint8)),
            hh + (hh & 1),
            ww + (ww & 1),
        )
        up = up[:hh, :ww]
        up_valid = up_valid[:hh, :ww]
        has = wgt > 0.0
        own = np.zeros_like(c)
        np.divide(c, wgt[..., None], out=own, where=has[..., None])
        values = np.where(has[..., None], own, up)
        valid = has | up_valid
    return values, valid


def full_pyramid_levels(height: int, width: int) -> int:
    """Pull steps needed to reach 1x1 from an (height, width) image."""
    n = max(int(height), int(width), 1)
    return max(1, int(np.ceil(np.log2(n))) if n > 1 else 1)
