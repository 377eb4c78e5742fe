"""Seeding helpers.

All randomness in the package flows through Philox, a counter-based
generator, so that runs are bit-reproducible for a fixed seed across
platforms and across process boundaries.  Derived streams are keyed by
small integer tags so that independent components (CV folds, restarts,
replicates) never share a stream.
"""

import numpy as np

# stream tags; keep distinct so derived generators never collide
TAG_CV_FOLDS = 1
TAG_SUBMODEL = 2
TAG_INIT_FINAL = 3
TAG_GAMMA_CV = 4
TAG_MIV = 5
TAG_VNS = 6
TAG_SHUFFLE = 7
TAG_SCENARIO = 8


def spawn_rng(seed, *key):
    """Return a Philox generator for stream (seed, *key)."""
    entropy = (int(seed),) + tuple(int(k) for k in key)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
