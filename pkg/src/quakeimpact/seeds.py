"""Counter-based random-stream derivation.

Every stochastic routine in the package derives its generator from a path of
non-negative integers under the run's master seed, e.g.
``rng(seed, SIM, step, particle, event)``.  Streams therefore do not depend
on worker count or evaluation order, which is what makes runs reproducible,
parallelisable, and resumable from a checkpoint without storing mutable
generator state: the (seed, path) pair *is* the state.
"""

import numpy as np

# Domain tags keep streams from different subsystems disjoint.
PRIOR = 1        # prior rejection sampling
SIM = 2          # forward-model draws inside loss evaluations
MOVE = 3         # SMC MH proposals and accept/reject uniforms
RESAMPLE = 4     # SMC multinomial resampling
CHAIN = 5        # MCMC chain-level stream (proposals, accept draws, refreshes)
PREDICT = 6      # posterior-predictive draws
GENERATE = 7     # synthetic event generation
EXPERIMENT = 8   # desk experiments (score-bias tables etc.)
CHAIN_SIM = 9    # MCMC per-(chain, iteration, event) simulation noise


def sequence(master_seed, *path):
    """SeedSequence for a (master seed, integer path) address."""
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    return np.random.SeedSequence((int(master_seed),) + tuple(int(p) for p in path))


def rng(master_seed, *path):
    """Fresh Generator for a (master seed, integer path) address."""
    return np.random.default_rng(sequence(master_seed, *path))
