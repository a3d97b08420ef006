# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid kernels. Mirrors _kernels_py operation for operation."""

import numpy as np


def grid_tables(double[::1] qhat, double[::1] fhat, double[::1] ahat,
                double w_q, double w_f, double w_a,
                double[::1] bitrates, double[::1] comp_ve_f, double[::1] comp_dt_f,
                double[::1] ff_net, double cf_net, double[::1] base_net_dt,
                double k_comp, double k_net):
    cdef Py_ssize_t nb = qhat.shape[0], nf = fhat.shape[0], na = ahat.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double raw, comp, nve, ndt
    imm_arr = np.empty((nb, nf, na), dtype=np.float64)
    cost_arr = np.empty((nb, nf, na), dtype=np.float64)
    cdef double[:, :, ::1] imm = imm_arr
    cdef double[:, :, ::1] cost = cost_arr
    for i in range(nb):
        for j in range(nf):
            comp = k_comp * (comp_ve_f[j] + comp_dt_f[j])
            nve = (bitrates[i] * ff_net[j]) * cf_net
            for k in range(na):
                raw = w_q * qhat[i] + w_f * fhat[j]
                raw = raw + w_a * ahat[k]
                if raw < 0.0:
                    raw = 0.0
                if raw > 1.0:
                    raw = 1.0
                imm[i, j, k] = raw
                ndt = (base_net_dt[k] * ff_net[j]) * cf_net
                cost[i, j, k] = comp + k_net * (nve + ndt)
    return imm_arr, cost_arr


def grid_select(double[::1] qhat, double[::1] fhat, double[::1] ahat,
                double w_q, double w_f, double w_a,
                double[::1] bitrates, double[::1] comp_ve_f, double[::1] comp_dt_f,
                double[::1] ff_net, double cf_net, double[::1] base_net_dt,
                double k_comp, double k_net, double threshold):
    cdef Py_ssize_t nb = qhat.shape[0], nf = fhat.shape[0], na = ahat.shape[0]
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t bi = -1, bj = -1, bk = -1, ti = 0, tj = 0, tk = 0
    cdef double raw, comp, nve, ndt, c
    cdef double best_cost = 0.0, top_imm = -1.0, top_cost = 0.0
    for i in range(nb):
        for j in range(nf):
            comp = k_comp * (comp_ve_f[j] + comp_dt_f[j])
            nve = (bitrates[i] * ff_net[j]) * cf_net
            for k in range(na):
                raw = w_q * qhat[i] + w_f * fhat[j]
                raw = raw + w_a * ahat[k]
                if raw < 0.0:
                    raw = 0.0
                if raw > 1.0:
                    raw = 1.0
                ndt = (base_net_dt[k] * ff_net[j]) * cf_net
                c = comp + k_net * (nve + ndt)
                if raw >= threshold:
                    if bi < 0 or c < best_cost:
                        bi = i; bj = j; bk = k; best_cost = c
                elif bi < 0:
                    if raw > top_imm or (raw == top_imm and c < top_cost):
                        ti = i; tj = j; tk = k; top_imm = raw; top_cost = c
    if bi >= 0:
        return int(bi), int(bj), int(bk), True
    return int(ti), int(tj), int(tk), False
