import numpy as np
from typing import Optional, Union, List

_MASK64 = (1 << 64) - 1

LEARNER_CODES = {"S": 1, "SW": 2, "T": 3, "X": 4, "DR": 5, "R": 6}
PROCEDURE_CODES = {"full": 1, "split": 2, "crossfit": 3}

# validation / augmentation streams use negative replication indices
VALIDATION_REPLICATION = -1
AUGMENTATION_REPLICATION = -2

Stream = Union[int, np.random.SeedSequence]


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer (bijective 64-bit avalanche)"""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _field_code(value, table) -> int:
    if value is None:
        return 0
    if isinstance(value, str):
        if value not in table:
            raise ValueError(f"Unknown identifier: {value}")
        return table[value]
    return int(value) & _MASK64


def derive_seed(master_seed: int,
                design_id: int,
                learner_id: Optional[str] = None,
                procedure_id: Optional[str] = None,
                replication_index: int = 0) -> int:
    """
    Stateless seed tree.

    The data-generation seed of a replication is ``derive_seed(master, design, None, None, r)``,
    so every learner / procedure of that replication sees the same draw. Fitting seeds add the
    learner and procedure fields.

    Args:
        master_seed: experiment master seed
        design_id: simulation design (0 for the semi-synthetic data)
        learner_id: one of S, SW, T, X, DR, R or None
        procedure_id: one of full, split, crossfit or None
        replication_index: replication number (negative values are reserved streams)

    Returns:
        64-bit unsigned seed
    """
    h = splitmix64(int(master_seed) & _MASK64)
    for field in (int(design_id) & _MASK64,
                  _field_code(learner_id, LEARNER_CODES),
                  _field_code(procedure_id, PROCEDURE_CODES),
                  int(replication_index) & _MASK64):
        h = splitmix64(h ^ field)
    return h


def as_stream(stream: Stream) -> np.random.SeedSequence:
    if isinstance(stream, np.random.SeedSequence):
        return stream
    return np.random.SeedSequence(int(stream))


def substreams(stream: Stream, n: int) -> List[np.random.SeedSequence]:
    """
    Derive ``n`` independent child streams.

    SeedSequence.spawn() advances an internal counter, so spawning is done on a fresh copy:
    the same parent always yields the same children.
    """
    parent = as_stream(stream)
    fresh = np.random.SeedSequence(parent.entropy, spawn_key=parent.spawn_key,
                                   pool_size=parent.pool_size)
    return fresh.spawn(n)


def generator(stream: Stream) -> np.random.Generator:
    return np.random.default_rng(as_stream(stream))
