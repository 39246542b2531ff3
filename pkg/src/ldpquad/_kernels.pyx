# cython: language_level=3
"""Compiled inner loops for the Laplace-on-Haar channel.

Noise follows the block protocol of the numpy fallback: for each block of
``max(1, BLOCK_SLOTS // 2**J)`` individuals, raw 64-bit sign words are drawn
first, then one ziggurat exponential per slot in row-major order. Both
backends therefore produce identical sanitized arrays from the same generator.
"""

import numpy as np
cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_IsValid, PyCapsule_GetPointer
from libc.stdint cimport uint64_t
from numpy.random cimport bitgen_t

cnp.import_array()

DEF BLOCK_SLOTS = 65536


cdef extern from "numpy/random/distributions.h":
    double random_standard_exponential(bitgen_t *bitgen_state) nogil


cdef bitgen_t *_bitgen(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline double _signed_exp(bitgen_t *bg, uint64_t *words, Py_ssize_t t) noexcept nogil:
    cdef double e = random_standard_exponential(bg)
    if (words[t >> 6] >> (t & 63)) & 1:
        return -e
    return e


cdef inline void _fill_words(bitgen_t *bg, uint64_t *words, Py_ssize_t count) noexcept nogil:
    cdef Py_ssize_t w
    for w in range((count + 63) >> 6):
        words[w] = bg.next_uint64(bg.state)


cdef Py_ssize_t _rows_per_block(Py_ssize_t P) noexcept nogil:
    return BLOCK_SLOTS // P if P < BLOCK_SLOTS else 1


cdef void _run(const cnp.int64_t[::1] cells, int J, const double[::1] scales, bitgen_t *bg,
               uint64_t *words, const double *amp, double *S, double *sumsq, double[:, ::1] out, bint store) noexcept nogil:
    cdef Py_ssize_t n = cells.shape[0]
    cdef Py_ssize_t P = (<Py_ssize_t> 1) << J
    cdef Py_ssize_t step = _rows_per_block(P)
    cdef Py_ssize_t lo, m, i, j, k, width, kact, t
    cdef long long c
    cdef double z, psi, acc = 0.0
    lo = 0
    while lo < n:
        m = n - lo
        if m > step:
            m = step
        _fill_words(bg, words, m * P)
        t = 0
        for i in range(lo, lo + m):
            c = cells[i]
            z = scales[0] * _signed_exp(bg, words, t) + 1.0
            t += 1
            if store:
                out[i, 0] = z
            else:
                S[0] += z
                acc += z * z
            for j in range(J):
                width = (<Py_ssize_t> 1) << j
                kact = c >> (J - j)
                psi = amp[j]
                if (c >> (J - j - 1)) & 1:
                    psi = -psi
                for k in range(width):
                    z = scales[width + k] * _signed_exp(bg, words, t)
                    t += 1
                    if k == kact:
                        z = z + psi
                    if store:
                        out[i, width + k] = z
                    else:
                        S[width + k] += z
                        acc += z * z
        lo += m
    sumsq[0] = acc


def _word_buffer(Py_ssize_t n_scales, int J):
    cdef Py_ssize_t P = (<Py_ssize_t> 1) << J
    if n_scales != P:
        raise ValueError("scales must have 2**J entries")
    return np.empty((_rows_per_block(P) * P + 63) // 64, dtype=np.uint64)


def _amplitudes(int J):
    return np.array([2.0 ** (j / 2.0) for j in range(J)] + [0.0])


def ni_accumulate(const cnp.int64_t[::1] cells, int J, const double[::1] scales, rng):
    """Sum of sanitized arrays and total sum of squares, without materializing them."""
    cdef uint64_t[::1] words = _word_buffer(scales.shape[0], J)
    cdef double[::1] amp = _amplitudes(J)
    S_arr = np.zeros((<Py_ssize_t> 1) << J)
    cdef double[::1] S = S_arr
    cdef double sumsq = 0.0
    cdef double[:, ::1] dummy = np.empty((0, 0))
    bit_generator = rng.bit_generator
    cdef bitgen_t *bg = _bitgen(bit_generator)
    with bit_generator.lock, nogil:
        _run(cells, J, scales, bg, &words[0], &amp[0], &S[0], &sumsq, dummy, False)
    return S_arr, sumsq


def ni_sanitize(const cnp.int64_t[::1] cells, int J, const double[::1] scales, rng):
    """Materialized sanitized arrays, shape (n, 2**J)."""
    cdef uint64_t[::1] words = _word_buffer(scales.shape[0], J)
    cdef double[::1] amp = _amplitudes(J)
    out_arr = np.empty((cells.shape[0], (<Py_ssize_t> 1) << J))
    cdef double[:, ::1] out = out_arr
    cdef double s0 = 0.0
    bit_generator = rng.bit_generator
    cdef bitgen_t *bg = _bitgen(bit_generator)
    with bit_generator.lock, nogil:
        _run(cells, J, scales, bg, &words[0], &amp[0], &s0, &s0, out, True)
    return out_arr
