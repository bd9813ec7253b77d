"""Stochastic forward model mapping (event, parameters, randomness) to impacts.

For each hazard in an event, every exposed cell gets a latent damage value
``(I + V + eps + xi) * 1[I >= I0]`` per impact type, transformed through
normal CDFs into probabilities of mortality, displacement, and building
damage.  Counts are drawn multinomially (persons) and binomially (buildings),
with later shocks acting on the population and buildings that survived
earlier ones.  Cells below the intensity threshold are skipped outright and
contribute exactly zero impact for that hazard.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from . import kernels
from .errors import InvalidInputError, InvalidParameterError


I0_DEFAULT = 4.3  # MMI below which a hazard causes no modelled damage

_BETA_COV_IDX = np.array([0, 1, 2, 4])  # vs30, popdens, shdi, eqfreq


def split_gnic(gnic_cell, income_shares, quantile):
    """Income per capita in one of the eight population quantiles.

    The eight equal quantiles of (0, 100) are mapped onto the compacted
    decile shares covering percentiles 10-90, so quantile ``q`` consumes the
    share of percentiles (10q+10, 10q+20) scaled by the 10x width ratio.

    Parameters
    ----------
    gnic_cell : float or ndarray
        Subnational income per capita at the cell(s).
    income_shares : (8,) array
        National pretax income shares of the eight inner deciles.
    quantile : int
        Quantile index in 0..7.

    Returns
    -------
    float or ndarray
    """
    shares = np.asarray(income_shares, dtype=float)
    if not 0 <= quantile < 8:
        raise InvalidInputError(f"quantile index {quantile} outside 0..7")
    if shares.shape != (8,) or not np.isfinite(shares[quantile]):
        lo, hi = 10 * quantile + 10, 10 * quantile + 20
        raise InvalidInputError(f"income share for decile ({lo}, {hi}) missing")
    return np.asarray(gnic_cell, dtype=float) * shares[quantile] * 10.0


def compute_vulnerability(covariates, hazard_flags, beta, quantile=None):
    """Linear vulnerability term for one cell.

    Parameters
    ----------
    covariates : sequence of 5
        Standardized (vs30, popdens, shdi, gnic, eqfreq); gnic may be a
        length-8 per-quantile array selected by `quantile`.
    hazard_flags : (first_haz, night)
        Binary flags entering raw (not standardized).
    beta : (8,) array
        Coefficients ordered (vs30, popdens, shdi, gnic, eqfreq, firsthaz,
        night, firsthaz*night).
    """
    vs30, popdens, shdi, gnic, eqfreq = covariates
    gnic = np.asarray(gnic, dtype=float)
    if gnic.ndim == 1:
        if quantile is None:
            raise InvalidInputError("per-quantile gnic supplied without a quantile index")
        gnic = gnic[quantile]
    values = np.array([vs30, popdens, shdi, float(gnic), eqfreq], dtype=float)
    if not np.all(np.isfinite(values)):
        raise InvalidInputError(f"non-finite covariate values: {values}")
    first_haz, night = hazard_flags
    beta = np.asarray(beta, dtype=float)
    return float(
        values @ beta[:5]
        + beta[5] * first_haz
        + beta[6] * night
        + beta[7] * (first_haz * night)
    )


def latent_damage(intensity, vulnerability, eps, xi, i0=I0_DEFAULT):
    """Latent damage (I + V + eps + xi) * 1[I >= i0]."""
    vals = (intensity, vulnerability, eps, xi)
    if not all(math.isfinite(v) for v in vals):
        raise InvalidInputError(f"non-finite latent-damage inputs: {vals}")
    if intensity < i0:
        return 0.0
    return intensity + vulnerability + eps + xi


def impact_probabilities(d_mort, d_disp, d_builddam, params):
    """Impact probabilities from latent damage values.

    Displacement is clamped so that p_mort + p_disp <= 1.
    """
    kappa = params.kappa
    if np.any(kappa <= 0.0):
        raise InvalidParameterError(f"curve widths must be > 0, got {kappa}")
    p_mort = ndtr((np.asarray(d_mort, dtype=float) - params.mu_mort) / params.kappa_mort)
    p_disp = np.maximum(
        ndtr((np.asarray(d_disp, dtype=float) - params.mu_disp) / params.kappa_disp) - p_mort, 0.0
    )
    p_bdam = ndtr((np.asarray(d_builddam, dtype=float) - params.mu_builddam) / params.kappa_builddam)
    if np.isscalar(d_mort):
        return float(p_mort), float(p_disp), float(p_bdam)
    return p_mort, p_disp, p_bdam


def build_error_covariances(params):
    """Event-wide and local 3x3 error covariances (Eq. of the xi vector).

    The local covariance is the event-wide one scaled by
    tau = (sigma_local_mort / sigma_mort)**2.
    """
    params.validate()
    sig = params.sigma
    cov = params.rho * np.outer(sig, sig)
    np.fill_diagonal(cov, sig**2)
    if np.linalg.eigvalsh(cov).min() < -1e-12:
        raise InvalidParameterError(f"event covariance not PSD for rho={params.rho}")
    local = params.tau * cov
    return cov, local


def chol_psd(cov):
    """Cholesky-like factor A with A @ A.T == cov, tolerant of PSD rank loss."""
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        return v * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class _HazardSlice:
    """Per-hazard arrays restricted to cells at or above the threshold."""

    first_haz: int
    night: int
    active: np.ndarray            # cell indices with I >= i0
    intensity: np.ndarray         # (n_active,)
    cov_cell: np.ndarray          # (n_active, 4) standardized vs30/popdens/shdi/eqfreq
    gnic_q: np.ndarray            # (n_active, 8)
    gnic_bdam: np.ndarray         # (n_active,)


class SimContext:
    """Precomputed arrays for fast repeated simulation of one event."""

    def __init__(self, event, i0=I0_DEFAULT):
        self.event = event
        self.event_id = event.event_id
        self.i0 = float(i0)
        self.n_cells = event.n_cells
        self.pop0 = event.exposure.pop
        self.build0 = event.exposure.build
        cov = event.covariates
        cov_cell = np.stack(
            [cov.vs30_std, cov.popdens_std, cov.shdi_std, cov.eqfreq_std], axis=1
        )
        gnic_q = cov.gnic_q_std
        # building damage uses the median income quantile: mean of quantiles 4 and 5
        gnic_bdam = 0.5 * (gnic_q[:, 3] + gnic_q[:, 4])
        self.hazards = []
        for h in sorted(event.hazards, key=lambda h: h.ordering_index):
            active = np.flatnonzero(h.intensity >= self.i0)
            self.hazards.append(
                _HazardSlice(
                    first_haz=h.first_haz,
                    night=h.night,
                    active=active,
                    intensity=np.ascontiguousarray(h.intensity[active]),
                    cov_cell=np.ascontiguousarray(cov_cell[active]),
                    gnic_q=np.ascontiguousarray(gnic_q[active]),
                    gnic_bdam=np.ascontiguousarray(gnic_bdam[active]),
                )
            )
        self.observations = list(event.observations)
        self._obs_cells = [event.regions.cells(o.region) for o in self.observations]
        self._obs_impact = [("mort", "disp", "builddam").index(o.impact) for o in self.observations]

    @property
    def n_observations(self):
        return len(self.observations)

    def observed_values(self):
        return np.array([o.value for o in self.observations], dtype=float)

    def observed_impacts(self):
        return [o.impact for o in self.observations]

    def aggregate_batch_to_obs(self, batch):
        """(m, n_obs) matrix of simulated counts at the observed coordinates."""
        grids = (batch.mort_cells, batch.disp_cells, batch.bdam_cells)
        cols = [grids[imp][:, cells].sum(axis=1)
                for imp, cells in zip(self._obs_impact, self._obs_cells)]
        return np.stack(cols, axis=1).astype(float)


@dataclass
class BatchImpact:
    """Vectorized simulation output for m independent replicates."""

    mort_cells: np.ndarray        # (m, J) totals over hazards and quantiles
    disp_cells: np.ndarray        # (m, J)
    bdam_cells: np.ndarray        # (m, J), zeros when no building layer
    pop_rem: np.ndarray           # (m, J, 8) population remaining after all hazards
    build_rem: np.ndarray | None  # (m, J)
    xi: np.ndarray                # (m, 3)
    mort_hq: np.ndarray | None = None    # (m, H, J, 8) when detail requested
    disp_hq: np.ndarray | None = None
    bdam_h: np.ndarray | None = None     # (m, H, J)
    eps: np.ndarray | None = None        # (m, H, J, 3)


def simulate_impact_batch(ctx, params, rng, m, xi_normals=None, detail=False):
    """Draw m independent impact realizations of one event.

    Parameters
    ----------
    ctx : SimContext
    params : ModelParams
    rng : numpy Generator
        Consumed in a fixed order (xi normals unless supplied, then per
        hazard: local-error normals, mortality counts, displacement counts,
        building counts), so identical state yields identical output.
    xi_normals : (m, 3) array, optional
        Standard normals for the event-wide error; supplied by samplers that
        correlate these draws between target evaluations.
    detail : bool
        Keep per-hazard counts and error fields (memory scales with m*H*J).
    """
    if not ctx.hazards:
        raise InvalidInputError(f"{ctx.event_id}: event has no hazards")
    params.validate()
    event_cov, local_cov = build_error_covariances(params)
    a_event = chol_psd(event_cov)
    a_local = chol_psd(local_cov)

    if xi_normals is None:
        z_xi = rng.standard_normal((m, 3))
    else:
        z_xi = np.asarray(xi_normals, dtype=float)
        if z_xi.shape != (m, 3):
            raise InvalidInputError(f"xi_normals must have shape ({m}, 3), got {z_xi.shape}")
    xi = z_xi @ a_event.T

    n_cells = ctx.n_cells
    n_haz = len(ctx.hazards)
    pop = np.repeat(ctx.pop0[None, :, :], m, axis=0)
    build = None if ctx.build0 is None else np.repeat(ctx.build0[None, :], m, axis=0)
    mort_cells = np.zeros((m, n_cells), dtype=np.int64)
    disp_cells = np.zeros((m, n_cells), dtype=np.int64)
    bdam_cells = np.zeros((m, n_cells), dtype=np.int64)
    if detail:
        mort_hq = np.zeros((m, n_haz, n_cells, 8), dtype=np.int64)
        disp_hq = np.zeros((m, n_haz, n_cells, 8), dtype=np.int64)
        bdam_h = np.zeros((m, n_haz, n_cells), dtype=np.int64)
        eps_full = np.zeros((m, n_haz, n_cells, 3))

    beta = params.beta
    mu = params.mu
    kappa = params.kappa
    for h_idx, hz in enumerate(ctx.hazards):
        act = hz.active
        if act.size == 0:
            continue
        eps = rng.standard_normal((m, act.size, 3)) @ a_local.T
        flag_term = beta[5] * hz.first_haz + beta[6] * hz.night + beta[7] * (hz.first_haz * hz.night)
        cell_vuln = np.ascontiguousarray(hz.cov_cell @ beta[_BETA_COV_IDX] + flag_term)
        gnic_term = np.ascontiguousarray(beta[3] * hz.gnic_q)
        gnic_bdam_term = np.ascontiguousarray(beta[3] * hz.gnic_bdam)
        p_mort, p_disp, p_bdam = kernels.damage_probabilities(
            hz.intensity, cell_vuln, gnic_term, gnic_bdam_term,
            np.ascontiguousarray(eps), np.ascontiguousarray(xi), mu, kappa,
        )

        pop_act = pop[:, act, :]
        mort = rng.binomial(pop_act, p_mort)
        rem = pop_act - mort
        denom = 1.0 - p_mort
        with np.errstate(divide="ignore", invalid="ignore"):
            p_cond = np.where(denom > 0.0, p_disp / denom, 0.0)
        disp = rng.binomial(rem, np.clip(p_cond, 0.0, 1.0))
        pop[:, act, :] = rem - disp
        mort_cells[:, act] += mort.sum(axis=2)
        disp_cells[:, act] += disp.sum(axis=2)
        if build is not None:
            bdam = rng.binomial(build[:, act], p_bdam)
            build[:, act] -= bdam
            bdam_cells[:, act] += bdam
        if detail:
            mort_hq[:, h_idx, act, :] = mort
            disp_hq[:, h_idx, act, :] = disp
            eps_full[:, h_idx, act, :] = eps
            if build is not None:
                bdam_h[:, h_idx, act] = bdam

    return BatchImpact(
        mort_cells=mort_cells,
        disp_cells=disp_cells,
        bdam_cells=bdam_cells,
        pop_rem=pop,
        build_rem=build,
        xi=xi,
        mort_hq=mort_hq if detail else None,
        disp_hq=disp_hq if detail else None,
        bdam_h=bdam_h if detail else None,
        eps=eps_full if detail else None,
    )


def realized_builddam_probability(ctx, params, rng, m):
    """Per-cell building damage probability under m realized error draws.

    Combines hazards as 1 - prod(1 - p_h); cells below the threshold for
    every hazard keep probability zero.  Returns an (m, J) array.
    """
    if ctx.build0 is None:
        raise InvalidInputError(f"{ctx.event_id}: event has no building layer")
    params.validate()
    event_cov, local_cov = build_error_covariances(params)
    a_event = chol_psd(event_cov)
    a_local = chol_psd(local_cov)
    xi = rng.standard_normal((m, 3)) @ a_event.T
    beta = params.beta
    survive = np.ones((m, ctx.n_cells))
    for hz in ctx.hazards:
        act = hz.active
        if act.size == 0:
            continue
        eps = rng.standard_normal((m, act.size, 3)) @ a_local.T
        flag_term = beta[5] * hz.first_haz + beta[6] * hz.night + beta[7] * (hz.first_haz * hz.night)
        cell_vuln = np.ascontiguousarray(hz.cov_cell @ beta[_BETA_COV_IDX] + flag_term)
        gnic_term = np.ascontiguousarray(beta[3] * hz.gnic_q)
        gnic_bdam_term = np.ascontiguousarray(beta[3] * hz.gnic_bdam)
        _, _, p_bdam = kernels.damage_probabilities(
            hz.intensity, cell_vuln, gnic_term, gnic_bdam_term,
            np.ascontiguousarray(eps), np.ascontiguousarray(xi), params.mu, params.kappa,
        )
        survive[:, act] *= 1.0 - p_bdam
    return 1.0 - survive


@dataclass
class ImpactSample:
    """One forward-model draw with full per-hazard detail."""

    mort_hq: np.ndarray           # (H, J, 8)
    disp_hq: np.ndarray           # (H, J, 8)
    bdam_h: np.ndarray            # (H, J)
    rem: np.ndarray               # (J, 8) population remaining after all hazards
    build_rem: np.ndarray | None  # (J,)
    xi: np.ndarray                # (3,)
    eps: np.ndarray               # (H, J, 3)

    @property
    def mort_q(self):
        return self.mort_hq.sum(axis=0)

    @property
    def disp_q(self):
        return self.disp_hq.sum(axis=0)

    @property
    def mort_cells(self):
        return self.mort_hq.sum(axis=(0, 2))

    @property
    def disp_cells(self):
        return self.disp_hq.sum(axis=(0, 2))

    @property
    def bdam_cells(self):
        return self.bdam_h.sum(axis=0)


def sample_event_impact(event, params, rng_seed, i0=I0_DEFAULT):
    """One seeded forward-model draw for an event.

    `event` may be an EventBundle or a prepared SimContext; the seed fixes
    every random draw (event-wide and local errors, all count draws).
    """
    ctx = event if isinstance(event, SimContext) else SimContext(event, i0=i0)
    rng = np.random.default_rng(rng_seed)
    batch = simulate_impact_batch(ctx, params, rng, m=1, detail=True)
    return ImpactSample(
        mort_hq=batch.mort_hq[0],
        disp_hq=batch.disp_hq[0],
        bdam_h=batch.bdam_h[0],
        rem=batch.pop_rem[0],
        build_rem=None if batch.build_rem is None else batch.build_rem[0],
        xi=batch.xi[0],
        eps=batch.eps[0],
    )


def aggregate_impacts(sample, regions):
    """Total (mort, disp, builddam) per region from one impact sample."""
    mort = sample.mort_cells
    disp = sample.disp_cells
    bdam = sample.bdam_cells
    out = {}
    for rid in regions.regions:
        cells = regions.cells(rid)
        out[rid] = (
            int(mort[cells].sum()),
            int(disp[cells].sum()),
            int(bdam[cells].sum()),
        )
    return out
