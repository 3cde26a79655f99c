"""Counter-based random numbers.

Every draw is a pure function of ``(seed, stream, slot, index)``, so the order in
which the engine asks for numbers (slot by slot, or a whole epoch at once) never
changes the values.  Nodes and the adversary use disjoint streams, which keeps an
adaptive adversary from perturbing node randomness.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0**-53

# stream tags
CHANNEL = 0
ACTION = 1
EVE = 2
SPLIT = 3
COUPLING = 4


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; a bijection on uint64
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def _u64(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype != np.uint64:
        arr = arr.astype(np.int64).astype(np.uint64)
    return arr


def hash_grid(seed: int, stream: int, rows, cols) -> np.ndarray:
    """64-bit hashes for every (row, col) pair; shape ``(len(rows), len(cols))``."""
    with np.errstate(over="ignore"):
        key = _mix(_u64([seed & 0xFFFFFFFFFFFFFFFF]) + _GOLDEN * np.uint64(stream + 1))
        row_keys = _mix(key + _GOLDEN * (_u64(rows) + np.uint64(1)))
        return _mix(row_keys[:, None] + _GOLDEN * (_u64(cols) + np.uint64(1))[None, :])


def uniform_grid(seed: int, stream: int, rows, cols) -> np.ndarray:
    """Uniform doubles in [0, 1) for every (row, col) pair."""
    h = hash_grid(seed, stream, np.atleast_1d(rows), np.atleast_1d(cols))
    return (h >> np.uint64(11)).astype(np.float64) * _TO_UNIT


_MASK = 0xFFFFFFFFFFFFFFFF
_G, _C1, _C2 = int(_GOLDEN), int(_M1), int(_M2)


def _mix_int(x: int) -> int:
    x ^= x >> 30
    x = (x * _C1) & _MASK
    x ^= x >> 27
    x = (x * _C2) & _MASK
    return x ^ (x >> 31)


def uniform(seed: int, stream: int, row: int, col: int) -> float:
    """Scalar twin of ``uniform_grid`` in plain integers (same values, less overhead)."""
    key = _mix_int(((seed & _MASK) + _G * (stream + 1)) & _MASK)
    row_key = _mix_int((key + _G * ((row & _MASK) + 1)) & _MASK)
    h = _mix_int((row_key + _G * ((col & _MASK) + 1)) & _MASK)
    return (h >> 11) * _TO_UNIT


def derive_seed(base_seed: int, *path: int) -> int:
    """Split a base seed into a child seed; stable across serial and parallel runs."""
    value = base_seed
    for part in path:
        h = hash_grid(value, SPLIT, [part], [0])[0, 0]
        value = int(h >> np.uint64(1))
    return value


class SlotStream:
    """The random stream one node consumes in one slot."""

    __slots__ = ("seed", "slot", "node")

    def __init__(self, seed: int, slot: int, node: int):
        self.seed = seed
        self.slot = slot
        self.node = node

    def uniform(self, stream: int) -> float:
        return uniform(self.seed, stream, self.slot, self.node)

    def __repr__(self) -> str:
        return f"SlotStream(seed={self.seed}, slot={self.slot}, node={self.node})"
