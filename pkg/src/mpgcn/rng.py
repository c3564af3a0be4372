"""Seeded PCG64 sub-streams.

Every consumer of randomness draws from its own stream, obtained by jumping
the run's base PCG64 generator a fixed number of times per label. New labels
get new jump counts, so existing streams never shift.
"""

import numpy as np

STREAMS = {
    "init": 1,
    "dropout": 2,
    "split": 3,
    "data": 4,
    "gradcheck": 5,
}


def stream(seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed).jumped(STREAMS[label]))
