"""(7,4) Hamming coding of hierarchical beam-training layers.

The angle range [-1, 1] of one axis is split into 16 uniform regions.  Region
``s`` (1-based) carries the 4-bit information word ``F[:, s-1]`` (its binary
index, MSB first).  Encoding appends three parity bits so the user's feedback
over seven training layers can be corrected for a single bit error.
"""
from __future__ import annotations

import numpy as np

GENERATOR = np.array(
    [
        [1, 0, 0, 0, 1, 1, 1],
        [0, 1, 0, 0, 1, 1, 0],
        [0, 0, 1, 0, 1, 0, 1],
        [0, 0, 0, 1, 0, 1, 1],
    ],
    dtype=np.uint8,
)

PARITY_CHECK = np.array(
    [
        [1, 1, 1, 0, 1, 0, 0],
        [1, 1, 0, 1, 0, 1, 0],
        [1, 0, 1, 1, 0, 0, 1],
    ],
    dtype=np.uint8,
)

# columns 1..7: syndromes of a flip at that position; column 8: no error
ERROR_PATTERNS = np.hstack([PARITY_CHECK, np.zeros((3, 1), dtype=np.uint8)])

NUM_REGIONS = 16

# info_table[:, s] is the information word of region s + 1
INFO_TABLE = np.array(
    [[(s >> (3 - i)) & 1 for s in range(NUM_REGIONS)] for i in range(4)], dtype=np.uint8
)

# check rows of mod(E^T F, 2), i.e. the parity bits of every region
CHECK_TABLE = ((GENERATOR.T.astype(int) @ INFO_TABLE) % 2)[4:].astype(np.uint8)

# all seven layer patterns, one row per training layer
LAYER_TABLE = np.vstack([INFO_TABLE, CHECK_TABLE])


def _bits(word, n):
    b = np.asarray(word, dtype=np.uint8).ravel()
    if b.shape != (n,) or np.any(b > 1):
        raise ValueError(f"expected {n} binary values, got {word!r}")
    return b


def encode(info) -> np.ndarray:
    """Systematic codeword ``mod(info @ E, 2)``."""
    return (_bits(info, 4).astype(int) @ GENERATOR % 2).astype(np.uint8)


def syndrome(word) -> np.ndarray:
    return (PARITY_CHECK.astype(int) @ _bits(word, 7) % 2).astype(np.uint8)


def decode(word) -> tuple[np.ndarray, int | None]:
    """Single-error correction by nearest error pattern.

    Returns the corrected codeword and the 1-based position of the flipped
    bit, or ``None`` when the syndrome is zero.  Distance ties go to the
    lowest column index.
    """
    w = _bits(word, 7).copy()
    c = syndrome(w)
    dist = np.sum(ERROR_PATTERNS != c[:, None], axis=0)
    col = int(np.argmin(dist))  # first minimum
    if col == 7:
        return w, None
    w[col] ^= 1
    return w, col + 1


def region_index(info) -> int:
    """1-based region of a 4-bit information word (MSB first)."""
    b = _bits(info, 4)
    return int(sum(int(bit) << (3 - i) for i, bit in enumerate(b))) + 1


def region_bits(region: int) -> np.ndarray:
    """Information word of a 1-based region."""
    if not 1 <= region <= NUM_REGIONS:
        raise ValueError(f"region {region} outside [1, {NUM_REGIONS}]")
    return INFO_TABLE[:, region - 1].copy()


def region_of_angle(x, regions: int = NUM_REGIONS):
    """1-based region containing the angle ``x`` in [-1, 1]."""
    idx = np.floor((np.asarray(x) + 1) / 2 * regions).astype(int) + 1
    return np.clip(idx, 1, regions)


def region_center(region, regions: int = NUM_REGIONS):
    return -1 + (2 * np.asarray(region) - 1) / regions


def tables_text() -> str:
    """Human-readable dump of all code tables."""
    def fmt(name, m):
        rows = "\n".join("  " + " ".join(str(int(x)) for x in r) for r in m)
        return f"{name} ({m.shape[0]}x{m.shape[1]}):\n{rows}"

    return "\n\n".join(
        [
            fmt("generator E", GENERATOR),
            fmt("parity check H", PARITY_CHECK),
            fmt("error patterns E_d", ERROR_PATTERNS),
            fmt("information layers F", INFO_TABLE),
            fmt("check layers J", CHECK_TABLE),
        ]
    )
