"""Pure-Python (numpy) grid kernels; used when the compiled module is unavailable.

Arithmetic is written in the same order as the scalar model functions so that
both backends return bit-identical tables.
"""

from __future__ import annotations

import numpy as np


def grid_tables(qhat, fhat, ahat, w_q, w_f, w_a, bitrates, comp_ve_f, comp_dt_f,
                ff_net, cf_net, base_net_dt, k_comp, k_net):
    qhat = np.asarray(qhat, dtype=np.float64)
    fhat = np.asarray(fhat, dtype=np.float64)
    ahat = np.asarray(ahat, dtype=np.float64)
    raw = (w_q * qhat)[:, None, None] + (w_f * fhat)[None, :, None]
    raw = raw + (w_a * ahat)[None, None, :]
    imm = np.minimum(1.0, np.maximum(0.0, raw))

    bitrates = np.asarray(bitrates, dtype=np.float64)
    ff_net = np.asarray(ff_net, dtype=np.float64)
    comp = k_comp * (np.asarray(comp_ve_f, dtype=np.float64) + np.asarray(comp_dt_f, dtype=np.float64))
    net_ve = (bitrates[:, None] * ff_net[None, :]) * cf_net
    net_dt = (np.asarray(base_net_dt, dtype=np.float64)[:, None] * ff_net[None, :]) * cf_net
    net = net_ve[:, :, None] + net_dt.T[None, :, :]
    cost = comp[None, :, None] + k_net * net
    return imm, cost


def grid_select(qhat, fhat, ahat, w_q, w_f, w_a, bitrates, comp_ve_f, comp_dt_f,
                ff_net, cf_net, base_net_dt, k_comp, k_net, threshold):
    """Cheapest grid point with immersion >= threshold.

    Ties resolve to the lexicographically smallest (B, f, beta) index. When no
    point qualifies the most immersive point wins (ties: cheapest, then
    lexicographic). Returns ``(i, j, k, meets)``.
    """
    imm, cost = grid_tables(qhat, fhat, ahat, w_q, w_f, w_a, bitrates, comp_ve_f,
                            comp_dt_f, ff_net, cf_net, base_net_dt, k_comp, k_net)
    shape = imm.shape
    imm = imm.ravel()
    cost = cost.ravel()
    ok = imm >= threshold
    if ok.any():
        masked = np.where(ok, cost, np.inf)
        flat = int(np.argmin(masked))
        meets = True
    else:
        top = imm == imm.max()
        masked = np.where(top, cost, np.inf)
        flat = int(np.argmin(masked))
        meets = False
    i, j, k = np.unravel_index(flat, shape)
    return int(i), int(j), int(k), meets
