"""Pure-numpy damage-probability kernel (fallback backend).

Operation order mirrors the compiled kernel exactly, and both call the same
Cephes normal CDF, so the two backends return bit-identical float64 arrays.
"""

import numpy as np
from scipy.special import ndtr


def damage_probabilities(intensity, cell_vuln, gnic_term, gnic_bdam_term, eps, xi, mu, kappa):
    """Impact probabilities for one hazard over cells already above threshold.

    Parameters
    ----------
    intensity : (J,) float64
        Shaking intensity per active cell.
    cell_vuln : (J,) float64
        Quantile-independent vulnerability (covariate terms plus flag terms).
    gnic_term : (J, Q) float64
        Income-quantile vulnerability contribution (coefficient already applied).
    gnic_bdam_term : (J,) float64
        Median-quantile income contribution used for building damage.
    eps : (m, J, 3) float64
        Local error draws ordered (mort, disp, builddam).
    xi : (m, 3) float64
        Event-wide error draws ordered (mort, disp, builddam).
    mu, kappa : (3,) float64
        Curve centres and widths ordered (mort, disp, builddam).

    Returns
    -------
    p_mort, p_disp : (m, J, Q) float64
    p_bdam : (m, J) float64
    """
    base = intensity + cell_vuln                          # (J,)
    person = base[:, None] + gnic_term                    # (J, Q)

    d_mort = (person[None, :, :] + eps[:, :, None, 0]) + xi[:, None, None, 0]
    p_mort = ndtr((d_mort - mu[0]) / kappa[0])

    d_disp = (person[None, :, :] + eps[:, :, None, 1]) + xi[:, None, None, 1]
    p_disp = np.maximum(ndtr((d_disp - mu[1]) / kappa[1]) - p_mort, 0.0)

    d_bdam = ((base + gnic_bdam_term)[None, :] + eps[:, :, 2]) + xi[:, None, 2]
    p_bdam = ndtr((d_bdam - mu[2]) / kappa[2])

    return p_mort, p_disp, p_bdam
