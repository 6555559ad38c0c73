import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, index: int = 0) -> np.random.Generator:
    """Philox stream keyed by seed XOR index; trial t of a run always sees the same numbers."""
    key = (int(seed) ^ int(index)) & _MASK64
    return np.random.Generator(np.random.Philox(key=key))
