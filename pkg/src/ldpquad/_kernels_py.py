"""Pure-numpy versions of the channel kernels.

Standard Laplace noise is a unit exponential with a random sign. Rows are
processed in blocks of ``max(1, BLOCK_SLOTS // 2**J)`` individuals; for each
block the sign bits are drawn first as raw 64-bit words (bit t of the block's
stream signs slot t in row-major order), then one exponential per slot. The
compiled kernels follow the same protocol, so both backends see identical
noise.
"""

import numpy as np

BLOCK_SLOTS = 1 << 16


def rows_per_block(P: int) -> int:
    return max(1, BLOCK_SLOTS // P)


def _block_laplace(rng, m: int, P: int) -> np.ndarray:
    total = m * P
    words = rng.bit_generator.random_raw((total + 63) // 64).astype("<u8")
    bits = np.unpackbits(words.view(np.uint8), bitorder="little")[:total]
    E = rng.standard_exponential(total)
    E[bits.astype(bool)] *= -1.0
    return E.reshape(m, P)


def _add_signal(Z: np.ndarray, cells: np.ndarray, J: int) -> None:
    rows = np.arange(cells.size)
    Z[:, 0] += 1.0
    for j in range(J):
        k = cells >> (J - j)
        half = (cells >> (J - j - 1)) & 1
        Z[rows, (1 << j) + k] += 2.0 ** (j / 2) * (1 - 2 * half)


def _check(cells, J, scales):
    cells = np.ascontiguousarray(cells, dtype=np.int64)
    scales = np.ascontiguousarray(scales, dtype=float)
    if scales.shape != (1 << J,):
        raise ValueError("scales must have 2**J entries")
    return cells, scales


def _blocks(cells, J, scales, rng):
    P = 1 << J
    step = rows_per_block(P)
    for lo in range(0, cells.size, step):
        c = cells[lo : lo + step]
        Z = _block_laplace(rng, c.size, P)
        Z *= scales
        _add_signal(Z, c, J)
        yield Z


def ni_accumulate(cells, J, scales, rng):
    cells, scales = _check(cells, J, scales)
    S = np.zeros(1 << J)
    sumsq = 0.0
    for Z in _blocks(cells, J, scales, rng):
        S += Z.sum(axis=0)
        sumsq += float(np.einsum("ij,ij->", Z, Z))
    return S, sumsq


def ni_sanitize(cells, J, scales, rng):
    cells, scales = _check(cells, J, scales)
    parts = list(_blocks(cells, J, scales, rng))
    return np.concatenate(parts) if parts else np.empty((0, 1 << J))
