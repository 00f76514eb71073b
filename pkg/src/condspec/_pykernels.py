"""Pure numpy implementation of the hot kernels.

Same contract as the compiled ``_ckernels`` module. Raw Philox output is
bit-identical between the two; transcendental functions may differ in the
last ulp depending on the libm / SIMD paths numpy takes.
"""
import numpy as np

_M32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_PHILOX_W0 = 0x9E3779B97F4A7C15
_PHILOX_W1 = 0xBB67AE8584CAA73B
_MASK64 = (1 << 64) - 1
_TWO_PI = 2.0 * np.pi


def _mulhilo(a, b):
    # 64x64 -> 128 bit product, split into 32-bit limbs so nothing overflows
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _S32) + (hi_lo & _M32) + lo_hi
    hi = hi_hi + (hi_lo >> _S32) + (cross >> _S32)
    lo = (cross << _S32) | (lo_lo & _M32)
    return hi, lo


def philox_blocks(key0, key1, start, nblocks):
    """Philox4x64-10 output for counters ``start .. start+nblocks-1``.

    Returns a flat uint64 array of length ``4 * nblocks``.
    """
    with np.errstate(over="ignore"):
        x0 = np.arange(nblocks, dtype=np.uint64) + np.uint64(start)
        x1 = np.zeros(nblocks, dtype=np.uint64)
        x2 = np.zeros(nblocks, dtype=np.uint64)
        x3 = np.zeros(nblocks, dtype=np.uint64)
        k0 = int(key0) & _MASK64
        k1 = int(key1) & _MASK64
        for _ in range(10):
            hi0, lo0 = _mulhilo(_PHILOX_M0, x0)
            hi1, lo1 = _mulhilo(_PHILOX_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ np.uint64(k0), lo1, hi0 ^ x3 ^ np.uint64(k1), lo0
            k0 = (k0 + _PHILOX_W0) & _MASK64
            k1 = (k1 + _PHILOX_W1) & _MASK64
    out = np.empty(4 * nblocks, dtype=np.uint64)
    out[0::4] = x0
    out[1::4] = x1
    out[2::4] = x2
    out[3::4] = x3
    return out


def raw_words(key0, key1, start, count):
    """Words ``start .. start+count-1`` of the stream keyed by (key0, key1)."""
    if count == 0:
        return np.empty(0, dtype=np.uint64)
    first = start // 4
    last = (start + count - 1) // 4
    words = philox_blocks(key0, key1, first, last - first + 1)
    offset = start - 4 * first
    return words[offset:offset + count]


def _to_unit(words):
    # 53 random bits, centred in their cell: strictly inside (0, 1)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def uniforms(key0, key1, start, count):
    return _to_unit(raw_words(key0, key1, start, count))


def normals(key0, key1, start, count):
    """Standard normals ``start .. start+count-1`` via Box-Muller.

    Normal ``2m`` and ``2m+1`` are built from raw words ``2m`` and ``2m+1``,
    so any index range can be produced independently.
    """
    if count == 0:
        return np.empty(0, dtype=np.float64)
    first_pair = start // 2
    last_pair = (start + count - 1) // 2
    npairs = last_pair - first_pair + 1
    u = _to_unit(raw_words(key0, key1, 2 * first_pair, 2 * npairs))
    r = np.sqrt(-2.0 * np.log(u[0::2]))
    angle = _TWO_PI * u[1::2]
    z = np.empty(2 * npairs, dtype=np.float64)
    z[0::2] = r * np.cos(angle)
    z[1::2] = r * np.sin(angle)
    offset = start - 2 * first_pair
    return z[offset:offset + count]


def weighted_sup_abs(values, weights):
    """Row-wise ``max_k w_k |v_k|``."""
    values = np.asarray(values, dtype=np.float64)
    return np.max(np.abs(values) * weights, axis=1)


def weighted_sum_sq(values, weights):
    """Row-wise ``sum_k w_k v_k^2``."""
    values = np.asarray(values, dtype=np.float64)
    return (values * values) @ np.asarray(weights, dtype=np.float64)


def quad_form_rows(values, matrix):
    """Row-wise ``v' A v`` for a symmetric matrix ``A``."""
    values = np.asarray(values, dtype=np.float64)
    return np.einsum("ij,ij->i", values @ matrix, values)


def psd_cholesky(a, tol, nonsingular):
    """Pivot-tolerant Cholesky of a symmetric matrix.

    Returns ``(L, status, index)``; status 0 is success, 1 a negative pivot,
    2 a zero pivot whose column does not vanish, 3 a zero pivot when
    ``nonsingular`` is requested. ``index`` is the offending column.
    """
    a = np.asarray(a, dtype=np.float64)
    dim = a.shape[0]
    L = np.zeros_like(a)
    diag = np.diag(a)
    for j in range(dim):
        row = L[j, :j]
        pivot = a[j, j] - row @ row
        if pivot < -tol or (tol == 0.0 and pivot < 0.0):
            return L, 1, j
        resid = a[j + 1:, j] - L[j + 1:, :j] @ row
        if pivot <= tol:
            if nonsingular:
                return L, 3, j
            # a PSD Schur complement has |s_ij| <= sqrt(s_jj s_ii)
            rest = np.maximum(diag[j + 1:] - np.einsum("ij,ij->i", L[j + 1:, :j], L[j + 1:, :j]), tol)
            if np.any(np.abs(resid) > 1e3 * np.sqrt(max(tol, 1e-300) * rest)):
                return L, 2, j
            continue
        d = np.sqrt(pivot)
        L[j, j] = d
        L[j + 1:, j] = resid / d
    return L, 0, -1


def psd_cholesky_pivoted(a, tol):
    """Cholesky with diagonal pivoting, for rank-deficient PSD matrices.

    Returns ``(L, perm, status, index, rank)`` with
    ``L @ L.T == a[perm][:, perm]`` on success (status 0). Factorization
    stops once the largest remaining pivot is within ``tol``; status 1 flags
    a remaining pivot below ``-tol`` and status 2 a remaining off-diagonal
    entry larger than ``10 * tol``.
    """
    s = np.array(a, dtype=np.float64, copy=True)
    dim = s.shape[0]
    L = np.zeros_like(s)
    perm = np.arange(dim, dtype=np.intp)
    for j in range(dim):
        best = j + int(np.argmax(np.diag(s)[j:]))
        if best != j:
            s[[j, best]] = s[[best, j]]
            s[:, [j, best]] = s[:, [best, j]]
            L[[j, best], :j] = L[[best, j], :j]
            perm[[j, best]] = perm[[best, j]]
        if s[j, j] <= tol:
            rest = s[j:, j:]
            low = np.diag(rest)
            if np.any(low < -tol):
                return L, perm, 1, int(perm[j + int(np.argmax(low < -tol))]), j
            off = np.abs(np.tril(rest, -1))
            if np.any(off > 10.0 * tol + 1e-300):
                return L, perm, 2, int(perm[j + int(np.argmax(off.max(axis=1) > 10.0 * tol + 1e-300))]), j
            return L, perm, 0, -1, j
        d = np.sqrt(s[j, j])
        L[j, j] = d
        col = s[j + 1:, j] / d
        L[j + 1:, j] = col
        s[j + 1:, j + 1:] -= np.outer(col, col)
    return L, perm, 0, -1, dim
