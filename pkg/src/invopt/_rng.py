"""Seeded random streams with one substream per purpose.

Every source of randomness in the package draws from a counter-based
generator (Philox) keyed by ``(seed, purpose, index)``.  Purposes are fixed
integers, so adding a new consumer never perturbs the draws of an existing
one, and the same seed reproduces the same data on any platform.

Stream layout:

====================  ====
purpose               code
====================  ====
true cost vector      0
constraint matrix A   1
rhs vector b / c      2
constraint matrix B   3
response noise        4
dataset sampling      5
test split            6
trial spawning        7
====================  ====
"""

import numpy as np

THETA_TRUE = 0
MATRIX_A = 1
RHS = 2
MATRIX_B = 3
NOISE = 4
SAMPLING = 5
TEST_SPLIT = 6
TRIALS = 7


def substream(seed, purpose, index=0):
    """Return a Generator for one (seed, purpose, index) substream."""
    ss = np.random.SeedSequence(entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.Philox(ss))
