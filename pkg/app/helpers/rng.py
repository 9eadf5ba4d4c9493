"""Seeded random streams.

Every stochastic operation takes an explicit ``numpy.random.Generator``. Study
harnesses derive one independent stream per (seed, study, key...) so results
do not depend on worker scheduling.
"""

from numpy.random import SFC64, Generator, SeedSequence


STUDY_CODES = {
    "reconstruct": 1,
    "gauge-test": 2,
    "converge-connection": 3,
    "converge-frames": 4,
    "abelian": 5,
    "correct": 6,
    "noise": 7,
    "summary": 8,
}


def stream(seed, study, *key):
    code = STUDY_CODES[study] if isinstance(study, str) else int(study)
    sequence = SeedSequence(int(seed), spawn_key=(code, *(int(k) for k in key)))
    return Generator(SFC64(sequence))
