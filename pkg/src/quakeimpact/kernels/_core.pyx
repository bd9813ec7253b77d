# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled damage-probability kernel.

Fuses the latent-damage arithmetic and normal-CDF evaluation into one pass,
avoiding the temporaries the numpy fallback allocates.  Operation order and
the CDF implementation (Cephes ndtr) match the fallback, so outputs are
bit-identical between backends.
"""

import numpy as np

cimport numpy as cnp
from scipy.special.cython_special cimport ndtr

cnp.import_array()


def damage_probabilities(double[::1] intensity,
                         double[::1] cell_vuln,
                         double[:, ::1] gnic_term,
                         double[::1] gnic_bdam_term,
                         double[:, :, ::1] eps,
                         double[:, ::1] xi,
                         double[::1] mu,
                         double[::1] kappa):
    """See quakeimpact.kernels._numpy.damage_probabilities."""
    cdef Py_ssize_t m = eps.shape[0]
    cdef Py_ssize_t n_cells = intensity.shape[0]
    cdef Py_ssize_t n_q = gnic_term.shape[1]

    p_mort_arr = np.empty((m, n_cells, n_q), dtype=np.float64)
    p_disp_arr = np.empty((m, n_cells, n_q), dtype=np.float64)
    p_bdam_arr = np.empty((m, n_cells), dtype=np.float64)
    cdef double[:, :, ::1] p_mort = p_mort_arr
    cdef double[:, :, ::1] p_disp = p_disp_arr
    cdef double[:, ::1] p_bdam = p_bdam_arr

    cdef double mu_m = mu[0], mu_d = mu[1], mu_b = mu[2]
    cdef double k_m = kappa[0], k_d = kappa[1], k_b = kappa[2]
    cdef Py_ssize_t i, j, q
    cdef double base, person, pm, pd, d

    for i in range(m):
        for j in range(n_cells):
            base = intensity[j] + cell_vuln[j]
            for q in range(n_q):
                person = base + gnic_term[j, q]
                d = (person + eps[i, j, 0]) + xi[i, 0]
                pm = ndtr((d - mu_m) / k_m)
                p_mort[i, j, q] = pm
                d = (person + eps[i, j, 1]) + xi[i, 1]
                pd = ndtr((d - mu_d) / k_d) - pm
                p_disp[i, j, q] = pd if pd > 0.0 else 0.0
            d = ((base + gnic_bdam_term[j]) + eps[i, j, 2]) + xi[i, 2]
            p_bdam[i, j] = ndtr((d - mu_b) / k_b)

    return p_mort_arr, p_disp_arr, p_bdam_arr
