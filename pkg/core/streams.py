"""
Deterministic random-stream derivation shared by every planning stage
"""
import hashlib
import logging
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

PathComponent = Union[str, Tuple[str, int]]

MAX_SEED = 2 ** 64 - 1


def label_code(label: str) -> int:
    """Stable 32-bit code for a path label (independent of PYTHONHASHSEED)"""
    digest = hashlib.blake2b(label.encode('utf-8'), digest_size=4).digest()
    return int.from_bytes(digest, 'big')


def spawn_key(path: Iterable[PathComponent]) -> Tuple[int, ...]:
    """
    Flatten a labeled path into the integer key fed to SeedSequence.

    Each component is either a bare label or a ``(label, index)`` pair; a bare
    label behaves like index 0.
    """
    key = []
    for component in path:
        if isinstance(component, str):
            label, index = component, 0
        else:
            label, index = component
        index = int(index)
        if index < 0:
            raise ValueError(f"Stream path index must be nonnegative, got {index} for '{label}'")
        key.extend((label_code(label), index))
    return tuple(key)


def derive_stream(master_seed: int, path: Sequence[PathComponent]) -> np.random.Generator:
    """
    Return an independent, reproducible random stream for ``path``.

    The stream is a Philox counter-based generator keyed by the master seed
    and the labeled path, so identical (seed, path) pairs always replay the
    same draws and no state is shared between paths or workers.

    Args:
        master_seed: Run-wide 64-bit unsigned seed
        path: Labeled indices, e.g. ``[('scenario', 1), ('instance', 3), ('future', 7)]``

    Returns:
        numpy Generator owned exclusively by the caller
    """
    if not 0 <= int(master_seed) <= MAX_SEED:
        raise ValueError(f"Master seed must be a 64-bit unsigned integer, got {master_seed}")

    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=spawn_key(path))
    return np.random.Generator(np.random.Philox(sequence))
