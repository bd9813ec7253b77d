"""Prior distribution: box bounds, Laplace coefficients, feasibility screen.

The prior has two stages.  Stage one gives every non-coefficient parameter a
uniform box and every vulnerability coefficient an untruncated Laplace(0,
0.2).  Stage two (the "higher-level" screen) zeroes the prior wherever the
implied impact probabilities at reference intensities are implausible,
evaluated with all error terms and standardized covariates at zero - or, in
extremes mode, with the vulnerability pushed to the most extreme values
attainable from the 1st/99th covariate percentiles, against relaxed bounds.
Screen failures are detected before any forward simulation.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InvalidInputError
from .model import impact_probabilities
from .params import BOX_NAMES, ModelParams

BOX_BOUNDS = {
    "mu_mort": (9.0, 13.5),
    "kappa_mort": (0.25, 3.0),
    "mu_disp": (6.5, 10.5),
    "kappa_disp": (0.25, 3.0),
    "mu_builddam": (6.5, 10.0),
    "kappa_builddam": (0.25, 3.0),
    "sigma_mort": (0.0, 1.5),
    "sigma_disp": (0.0, 1.5),
    "sigma_builddam": (0.0, 1.5),
    "sigma_local_mort": (0.0, 2.0),
    "rho": (0.0, 1.0),
}

# screen bounds keyed by intensity; open intervals (lower, upper)
REAL_DATA_SCREEN = {
    4.6: {"p_mort": (0.0, 1e-6), "p_mort_plus_disp": (0.0, 0.01), "p_builddam": (0.0, 0.05)},
    7.0: {"p_mort": (0.0, 0.01), "p_mort_plus_disp": (0.0, 0.2), "p_builddam": (1e-6, 0.4)},
    8.0: {"p_disp_gt_mort": True},
    9.5: {"p_mort": (1e-6, 1.0), "p_mort_plus_disp": (0.2, 1.0), "p_builddam": (0.3, 1.0)},
}

# relaxed bounds used when vulnerability extremes enter the screen
EXTREMES_SCREEN = {
    4.6: {"p_mort": (0.0, 0.03), "p_mort_plus_disp": (0.0, 0.1), "p_builddam": (0.0, 0.15)},
    7.0: {"p_mort": (0.0, 0.15), "p_mort_plus_disp": (0.0, 0.6), "p_builddam": (1e-6, 0.75)},
    8.0: {"p_disp_gt_mort": True},
    9.5: {"p_mort": (1e-6, 1.0), "p_mort_plus_disp": (0.2, 1.0), "p_builddam": (0.3, 1.0)},
}

_QUANTITY_ORDER = ("p_mort", "p_mort_plus_disp", "p_builddam", "p_disp_gt_mort")
LAPLACE_SCALE = 0.2

# consecutive screen rejections before the bounds are declared inconsistent
# (equivalent to an acceptance rate below 1e-4)
_MAX_CONSECUTIVE_REJECTS = 20_000


@dataclass
class PriorSpec:
    """Prior configuration: boxes, coefficient scale, and screen mode."""

    bounds: dict = field(default_factory=lambda: dict(BOX_BOUNDS))
    laplace_scale: float = LAPLACE_SCALE
    hl_mode: str = "real"         # 'real' | 'extremes' | 'off'
    hl_bounds: dict | None = None
    covariate_percentiles: dict | None = None  # name -> (p1, p99), extremes mode
    n_dummy: int = 0

    def __post_init__(self):
        if self.hl_mode not in ("real", "extremes", "off"):
            raise ConfigError(f"higher-level prior mode {self.hl_mode!r} unknown")
        for name, (lo, hi) in self.bounds.items():
            if name not in BOX_NAMES:
                raise ConfigError(f"unknown box parameter {name!r}")
            if not lo < hi:
                raise ConfigError(f"box bounds for {name!r} must satisfy lower < upper")
        missing = [n for n in BOX_NAMES if n not in self.bounds]
        if missing:
            raise ConfigError(f"box bounds missing for {missing}")
        if self.hl_bounds is None and self.hl_mode != "off":
            self.hl_bounds = EXTREMES_SCREEN if self.hl_mode == "extremes" else REAL_DATA_SCREEN
        if self.hl_mode != "off":
            required = {4.6, 7.0, 8.0, 9.5}
            missing = required - {float(i) for i in self.hl_bounds}
            if missing:
                raise ConfigError(f"screen bounds must cover intensities {sorted(required)}; "
                                  f"missing {sorted(missing)}")
        if self.hl_mode == "extremes" and self.covariate_percentiles is None:
            raise ConfigError("extremes mode requires covariate percentiles")
        if self.laplace_scale <= 0:
            raise ConfigError("laplace_scale must be > 0")
        if self.n_dummy < 0:
            raise ConfigError("n_dummy must be >= 0")


@dataclass(frozen=True)
class ScreenViolation:
    """First higher-level bound violated by a parameter vector."""

    intensity: float
    quantity: str
    bound: tuple
    value: float
    vulnerability: float

    def __str__(self):
        return (
            f"{self.quantity}={self.value:.3g} outside {self.bound} at intensity "
            f"{self.intensity} (vulnerability {self.vulnerability:+.3g})"
        )


def vulnerability_extremes(beta, covariate_percentiles):
    """Extreme attainable vulnerability from per-covariate percentile pairs.

    Continuous covariate terms are maximised/minimised independently over
    their 1st/99th percentiles; the flag and interaction terms are evaluated
    jointly over the four flag combinations.
    """
    beta = np.asarray(beta, dtype=float)
    names = ("vs30", "popdens", "shdi", "gnic", "eqfreq")
    lo = hi = 0.0
    for k, name in enumerate(names):
        if name not in covariate_percentiles:
            raise InvalidInputError(f"covariate percentiles missing for {name!r}")
        p1, p99 = covariate_percentiles[name]
        terms = (beta[k] * p1, beta[k] * p99)
        lo += min(terms)
        hi += max(terms)
    flag_terms = [
        beta[5] * f1 + beta[6] * f2 + beta[7] * (f1 * f2)
        for f1 in (0, 1)
        for f2 in (0, 1)
    ]
    return lo + min(flag_terms), hi + max(flag_terms)


def higher_level_check(params, spec):
    """Evaluate the feasibility screen; returns the first ScreenViolation or None."""
    if spec.hl_mode == "off":
        raise ConfigError("higher_level_check called with the screen disabled")
    if spec.hl_mode == "extremes":
        vulns = vulnerability_extremes(params.beta, spec.covariate_percentiles)
    else:
        vulns = (0.0,)
    for vuln in vulns:
        for intensity in sorted(spec.hl_bounds):
            d = intensity + vuln
            p_mort, p_disp, _pb = impact_probabilities(d, d, d, params)
            values = {
                "p_mort": p_mort,
                "p_mort_plus_disp": p_mort + p_disp,
                "p_builddam": _pb,
            }
            row = spec.hl_bounds[intensity]
            for quantity in _QUANTITY_ORDER:
                if quantity not in row:
                    continue
                if quantity == "p_disp_gt_mort":
                    if not p_disp > p_mort:
                        return ScreenViolation(intensity, "p_disp", (p_mort, 1.0), p_disp, vuln)
                    continue
                lo, hi = row[quantity]
                value = values[quantity]
                if not lo < value < hi:
                    return ScreenViolation(intensity, quantity, (lo, hi), value, vuln)
    return None


def _laplace_logpdf(x, scale):
    return -np.abs(x) / scale - math.log(2.0 * scale)


def log_prior_density(params, spec):
    """Log prior density, -inf outside the support.

    Uniform box factors contribute zero; the Laplace coefficient densities
    (including any dummies) are summed.
    """
    for name in BOX_NAMES:
        lo, hi = spec.bounds[name]
        value = getattr(params, name)
        if name == "rho":
            if not lo <= value < hi:
                return -np.inf
        elif not lo <= value <= hi:
            return -np.inf
    if params.sigma_mort == 0.0 and params.sigma_local_mort > 0.0:
        return -np.inf  # tau undefined; unreachable from the sampler
    if spec.hl_mode != "off" and higher_level_check(params, spec) is not None:
        return -np.inf
    coef = np.concatenate([params.beta, params.dummy])
    return float(_laplace_logpdf(coef, spec.laplace_scale).sum())


def sample_prior(rng, spec, stats=None):
    """Draw one parameter vector by rejection against the screen.

    `stats`, when given, is a dict accumulating 'attempts' and 'accepts'
    counts so callers can report the screen acceptance rate.
    """
    consecutive = 0
    while True:
        beta = rng.laplace(0.0, spec.laplace_scale, size=8)
        box = {name: rng.uniform(*spec.bounds[name]) for name in BOX_NAMES}
        dummy = rng.laplace(0.0, spec.laplace_scale, size=spec.n_dummy)
        params = ModelParams(beta=beta, dummy=dummy, **box)
        if stats is not None:
            stats["attempts"] = stats.get("attempts", 0) + 1
        if spec.hl_mode == "off" or higher_level_check(params, spec) is None:
            if stats is not None:
                stats["accepts"] = stats.get("accepts", 0) + 1
            return params
        consecutive += 1
        if consecutive >= _MAX_CONSECUTIVE_REJECTS:
            raise ConfigError(
                "prior screen acceptance rate below 1e-4; box and screen bounds are inconsistent"
            )


def sample_prior_matrix(rng, spec, n, stats=None):
    """n prior draws stacked as an (n, 19 + n_dummy) matrix."""
    draws = [sample_prior(rng, spec, stats=stats).to_vector() for _ in range(n)]
    return np.array(draws)
