"""Model parameter vector: names, packing, and basic domain checks.

The model has 19 named parameters: eight regression coefficients for the
vulnerability covariates, the centre and width of the three impact curves,
the three event-wide error scales, the local mortality error scale, and the
cross-impact correlation.  Inference runs may append dummy coefficients that
the forward model ignores; they are used to verify that the fitted posterior
leaves unidentified directions at their prior.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

BETA_NAMES = (
    "beta_vs30",
    "beta_popdens",
    "beta_shdi",
    "beta_gnic",
    "beta_eqfreq",
    "beta_firsthaz",
    "beta_night",
    "beta_firsthaz_night",
)

BOX_NAMES = (
    "mu_mort",
    "kappa_mort",
    "mu_disp",
    "kappa_disp",
    "mu_builddam",
    "kappa_builddam",
    "sigma_mort",
    "sigma_disp",
    "sigma_builddam",
    "sigma_local_mort",
    "rho",
)

PARAM_NAMES = BETA_NAMES + BOX_NAMES
N_PARAMS = len(PARAM_NAMES)  # 19

IMPACTS = ("mort", "disp", "builddam")


def param_names(n_dummy=0):
    """Full ordered name tuple, including any dummy coefficients."""
    return PARAM_NAMES + tuple(f"dummy_{i + 1}" for i in range(n_dummy))


@dataclass
class ModelParams:
    """One parameter vector theta.

    Attributes
    ----------
    beta : ndarray, shape (8,)
        Coefficients for (vs30, popdens, shdi, gnic, eqfreq, firsthaz,
        night, firsthaz*night), applied to standardized covariates and
        raw binary flags.
    mu_*, kappa_* : float
        Centre (MMI) and width (MMI, > 0) of the normal-CDF curve for each
        impact type.
    sigma_* : float
        Event-wide error standard deviations (>= 0).
    sigma_local_mort : float
        Local (grid-cell) mortality error standard deviation; fixes the
        scale factor tau = (sigma_local_mort / sigma_mort)**2 applied to
        the event-wide covariance.
    rho : float
        Cross-impact correlation in [0, 1).
    dummy : ndarray
        Coefficients ignored by the forward model.
    """

    beta: np.ndarray
    mu_mort: float
    kappa_mort: float
    mu_disp: float
    kappa_disp: float
    mu_builddam: float
    kappa_builddam: float
    sigma_mort: float
    sigma_disp: float
    sigma_builddam: float
    sigma_local_mort: float
    rho: float
    dummy: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        self.dummy = np.asarray(self.dummy, dtype=float)
        if self.beta.shape != (8,):
            raise InvalidParameterError(f"beta must have shape (8,), got {self.beta.shape}")

    @property
    def n_dummy(self):
        return self.dummy.size

    @property
    def mu(self):
        """Curve centres ordered (mort, disp, builddam)."""
        return np.array([self.mu_mort, self.mu_disp, self.mu_builddam])

    @property
    def kappa(self):
        """Curve widths ordered (mort, disp, builddam)."""
        return np.array([self.kappa_mort, self.kappa_disp, self.kappa_builddam])

    @property
    def sigma(self):
        """Event-wide error scales ordered (mort, disp, builddam)."""
        return np.array([self.sigma_mort, self.sigma_disp, self.sigma_builddam])

    @property
    def tau(self):
        """Local-to-event covariance scale (sigma_local_mort / sigma_mort)**2."""
        if self.sigma_mort == 0.0:
            if self.sigma_local_mort > 0.0:
                raise InvalidParameterError(
                    "sigma_local_mort > 0 requires sigma_mort > 0 (tau undefined)"
                )
            return 0.0
        return (self.sigma_local_mort / self.sigma_mort) ** 2

    def to_vector(self):
        vec = np.empty(N_PARAMS + self.n_dummy)
        vec[:8] = self.beta
        vec[8:19] = [getattr(self, name) for name in BOX_NAMES]
        vec[19:] = self.dummy
        return vec

    @classmethod
    def from_vector(cls, vec, n_dummy=0):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (N_PARAMS + n_dummy,):
            raise InvalidParameterError(
                f"parameter vector must have length {N_PARAMS + n_dummy}, got {vec.shape}"
            )
        box = dict(zip(BOX_NAMES, vec[8:19]))
        return cls(beta=vec[:8].copy(), dummy=vec[19:].copy(), **box)

    @classmethod
    def from_dict(cls, values, n_dummy=0):
        """Build from a {name: value} mapping using the canonical name order."""
        missing = [n for n in param_names(n_dummy) if n not in values]
        if missing:
            raise InvalidParameterError(f"missing parameters: {missing}")
        vec = np.array([values[n] for n in param_names(n_dummy)], dtype=float)
        return cls.from_vector(vec, n_dummy=n_dummy)

    def to_dict(self):
        return dict(zip(param_names(self.n_dummy), self.to_vector()))

    def validate(self):
        """Raise InvalidParameterError if theta is outside the model domain."""
        vec = self.to_vector()
        if not np.all(np.isfinite(vec)):
            raise InvalidParameterError("parameters must be finite")
        for name in ("kappa_mort", "kappa_disp", "kappa_builddam"):
            if getattr(self, name) <= 0.0:
                raise InvalidParameterError(f"{name} must be > 0")
        for name in ("sigma_mort", "sigma_disp", "sigma_builddam", "sigma_local_mort"):
            if getattr(self, name) < 0.0:
                raise InvalidParameterError(f"{name} must be >= 0")
        if not (0.0 <= self.rho < 1.0):
            raise InvalidParameterError("rho must lie in [0, 1)")
        self.tau  # raises when sigma_local_mort > 0 with sigma_mort == 0
        return self
