"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` function for function and are used whenever the
compiled extension is unavailable (or ``PCAGLUE_PURE=1`` is set).
"""

import numpy as np


def data_table(fixed_col, moving, j, state_a, state_t, half):
    """Windowed mean squared difference for every sample and state.

    ``D[i, s]`` compares ``fixed_col[i-half : i+half+1]`` with line
    ``j + state_t[s]`` of ``moving`` shifted by ``state_a[s]`` samples. Sample
    indices beyond the frame are mirrored about the edge sample; line indices
    are clamped.
    """
    m, l = moving.shape
    state_a = np.asarray(state_a, dtype=np.int64)
    state_t = np.asarray(state_t, dtype=np.int64)
    offs = np.arange(-half, half + 1)
    rows = np.arange(m)[:, None] + offs[None, :]
    f = fixed_col[_mirror(rows, m - 1)]
    inv = 1.0 / (2 * half + 1)
    out = np.empty((m, len(state_a)))
    for s in range(len(state_a)):
        col = moving[:, min(max(j + state_t[s], 0), l - 1)]
        g = col[_mirror(rows + state_a[s], m - 1)]
        d = f - g
        acc = d[:, 0] * d[:, 0]
        for k in range(1, d.shape[1]):
            acc = acc + d[:, k] * d[:, k]
        out[:, s] = acc * inv
    return out


def _mirror(idx, hi):
    idx = np.where(idx < 0, -idx, idx)
    return np.where(idx > hi, 2 * hi - idx, idx)


def dp_solve(D, trans):
    """Minimise ``sum_i D[i, s_i] + trans[s_{i-1}, s_i]`` over state sequences.

    States are assumed to be listed in tie-breaking priority order: among
    equal costs the lowest state index wins. Returns ``(states, cost)``.
    """
    m, S = D.shape
    back = np.empty((m, S), dtype=np.int64)
    cols = np.arange(S)
    cum = D[0].copy()
    for i in range(1, m):
        cand = cum[:, None] + trans
        arg = np.argmin(cand, axis=0)
        back[i] = arg
        cum = cand[arg, cols] + D[i]
    s = int(np.argmin(cum))
    cost = float(cum[s])
    path = np.empty(m, dtype=np.int64)
    path[m - 1] = s
    for i in range(m - 1, 0, -1):
        s = int(back[i, s])
        path[i - 1] = s
    return path, cost


def render(z, x, amp, m, l, freq, sigma_a, sigma_l, half_a, half_l, chunk=200_000):
    """Sum Gaussian-modulated-cosine point responses onto an ``(m, l)`` grid."""
    out = np.zeros(m * l)
    ka = int(np.ceil(half_a))
    kl = int(np.ceil(half_l))
    da = np.arange(-ka, ka + 2)
    dl = np.arange(-kl, kl + 2)
    for start in range(0, len(z), chunk):
        zs = z[start:start + chunk]
        xs = x[start:start + chunk]
        am = amp[start:start + chunk]
        ii = np.floor(zs).astype(np.int64)[:, None] + da[None, :]
        jj = np.floor(xs).astype(np.int64)[:, None] + dl[None, :]
        dz = ii - zs[:, None]
        dx = jj - xs[:, None]
        wa = np.exp(-dz * dz / (2 * sigma_a * sigma_a)) * np.cos(2 * np.pi * freq * dz)
        wl = np.exp(-dx * dx / (2 * sigma_l * sigma_l))
        wa[(np.abs(dz) > half_a) | (ii < 0) | (ii >= m)] = 0.0
        wl[(np.abs(dx) > half_l) | (jj < 0) | (jj >= l)] = 0.0
        np.clip(ii, 0, m - 1, out=ii)
        np.clip(jj, 0, l - 1, out=jj)
        w = (am[:, None] * wa)[:, :, None] * wl[:, None, :]
        idx = jj[:, None, :] * m + ii[:, :, None]
        out += np.bincount(idx.ravel(), weights=w.ravel(), minlength=m * l)
    return out.reshape((m, l), order="F")
