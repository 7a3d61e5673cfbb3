# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled backend for the per-permutation statistic kernel.

Same contract as ``permcca._stepwise_py.stats_for_perms``, but the whole
permutation loop runs on preallocated workspaces with direct LAPACK calls
and no Python object traffic, and releases the GIL so callers can overlap
chunks with threads.

Algorithm per permutation: QR-factorize the row-gathered sides once, build
the cross product of the orthonormal factors, and for each position k > 1
re-orthonormalize only the sliced triangular factor (the column space of
``u[p][:, k:]`` equals ``q @ qr(r[:, k:]).Q``), so every step costs only
small dense work independent of the row count.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log
from scipy.linalg.cython_blas cimport dgemm
from scipy.linalg.cython_lapack cimport dgeqrf, dgesdd, dorgqr

cnp.import_array()

cdef double LOG_FLOOR = 1e-15


cdef inline void _gather(const double* src, int cols, const cnp.intp_t* idx,
                         int n, double* dst) noexcept nogil:
    # src is C-contiguous (rows, cols); dst is column-major (n, cols).
    cdef int i, j
    for j in range(cols):
        for i in range(n):
            dst[i + j * n] = src[idx[i] * cols + j]


cdef inline void _copy_cmajor(const double* src, int rows, int cols,
                              double* dst) noexcept nogil:
    cdef int i
    for i in range(rows * cols):
        dst[i] = src[i]


cdef inline int _qr_q_and_r(double* a, int m, int n, double* r_out,
                            double* tau, double* work, int lwork) noexcept nogil:
    # Factorizes column-major a (m x n, m >= n) in place: writes the n x n
    # triangular factor (lower part zeroed) to r_out when it is not NULL,
    # then overwrites a with the explicit orthonormal factor.
    cdef int info = 0
    cdef int i, j
    dgeqrf(&m, &n, a, &m, tau, work, &lwork, &info)
    if info != 0:
        return info
    if r_out != NULL:
        for j in range(n):
            for i in range(n):
                r_out[i + j * n] = a[i + j * m] if i <= j else 0.0
    dorgqr(&m, &n, &n, a, &m, tau, work, &lwork, &info)
    return info


cdef inline int _svals(double* a, int m, int n, double* s, double* work,
                       int lwork, int* iwork) noexcept nogil:
    # Singular values of column-major a (destroyed).
    cdef int info = 0
    cdef char jobz = b'N'
    cdef int one = 1
    cdef double dummy
    dgesdd(&jobz, &m, &n, a, &m, s, &dummy, &one, &dummy, &one,
           work, &lwork, iwork, &info)
    return info


cdef inline double _stat(const double* s, int nsv, bint use_roy) noexcept nogil:
    cdef double acc = 0.0
    cdef double rsq, term
    cdef int i
    if use_roy:
        rsq = s[0] * s[0]
        return 1.0 if rsq > 1.0 else rsq
    for i in range(nsv):
        rsq = s[i] * s[i]
        if rsq > 1.0:
            rsq = 1.0
        term = 1.0 - rsq
        if term < LOG_FLOOR:
            term = LOG_FLOOR
        acc -= log(term)
    return acc


def stats_for_perms(u, v, cross, perm_y, perm_x, n_components, use_roy, stepwise):
    """Per-permutation statistics; see the pure-Python backend for the contract."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] u_c = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] v_c = np.ascontiguousarray(v, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=2, mode="c"] py = np.ascontiguousarray(perm_y, dtype=np.intp)

    cdef bint has_px = perm_x is not None
    cdef cnp.ndarray[cnp.intp_t, ndim=2, mode="c"] px
    if has_px:
        px = np.ascontiguousarray(perm_x, dtype=np.intp)
    else:
        px = np.empty((0, 0), dtype=np.intp)

    cdef bint has_cross = cross is not None
    cdef cnp.ndarray[double, ndim=2, mode="fortran"] cr
    if has_cross:
        cr = np.asfortranarray(cross, dtype=np.float64)
    else:
        cr = np.empty((0, 0), dtype=np.float64, order="F")

    cdef int m = py.shape[0]
    cdef int ny = u_c.shape[0]
    cdef int p = u_c.shape[1]
    cdef int nx = v_c.shape[0]
    cdef int q = v_c.shape[1]
    cdef int kc = int(n_components)
    cdef int minpq = min(p, q)
    cdef bint roy = bool(use_roy)
    cdef bint step = bool(stepwise)

    if py.shape[1] != ny:
        raise ValueError("perm_y width does not match the left side")
    if has_px and (px.shape[0] != m or px.shape[1] != nx):
        raise ValueError("perm_x shape does not match")
    if has_cross and (cr.shape[0] != ny or cr.shape[1] != nx):
        raise ValueError("cross-basis shape does not match")
    if not has_cross and ny != nx:
        raise ValueError("sides of different row spaces need a cross basis")
    if kc < 1 or kc > minpq:
        raise ValueError("n_components outside 1..min(P, Q)")

    cdef cnp.ndarray[double, ndim=2, mode="c"] stats = np.empty((m, kc), dtype=np.float64)
    if m == 0:
        return stats

    cdef int lwork = max(64 * max(p, q) + 16,
                         3 * minpq + max(max(p, q), 7 * minpq), 1)

    # Workspaces (column-major layouts, leading dimension = row count).
    cdef cnp.ndarray[double, ndim=1] a1 = np.empty(ny * p)
    cdef cnp.ndarray[double, ndim=1] a2 = np.empty(nx * q)
    cdef cnp.ndarray[double, ndim=1] r1 = np.empty(p * p)
    cdef cnp.ndarray[double, ndim=1] r2 = np.empty(q * q)
    cdef cnp.ndarray[double, ndim=1] b1 = np.empty(p * p)
    cdef cnp.ndarray[double, ndim=1] b2 = np.empty(q * q)
    cdef cnp.ndarray[double, ndim=1] g = np.empty(p * q)
    cdef cnp.ndarray[double, ndim=1] t1 = np.empty(ny * q if has_cross else 1)
    cdef cnp.ndarray[double, ndim=1] t2 = np.empty(p * q)
    cdef cnp.ndarray[double, ndim=1] gk = np.empty(p * q)
    cdef cnp.ndarray[double, ndim=1] sv = np.empty(minpq)
    cdef cnp.ndarray[double, ndim=1] tau = np.empty(max(p, q))
    cdef cnp.ndarray[double, ndim=1] work = np.empty(lwork)
    cdef cnp.ndarray[int, ndim=1] iwork = np.empty(8 * minpq, dtype=np.intc)
    # Right-side slice bases, precomputed when the right side never moves.
    cdef cnp.ndarray[double, ndim=1] qs2 = np.empty(kc * q * q if (step and not has_px) else 1)

    cdef double* pu = &u_c[0, 0]
    cdef double* pv = &v_c[0, 0]
    cdef double* pa1 = &a1[0]
    cdef double* pa2 = &a2[0]
    cdef double* pr1 = &r1[0]
    cdef double* pr2 = &r2[0]
    cdef double* pb1 = &b1[0]
    cdef double* pb2 = &b2[0]
    cdef double* pg = &g[0]
    cdef double* pt1 = &t1[0]
    cdef double* pt2 = &t2[0]
    cdef double* pgk = &gk[0]
    cdef double* psv = &sv[0]
    cdef double* ptau = &tau[0]
    cdef double* pwork = &work[0]
    cdef int* piwork = &iwork[0]
    cdef double* pqs2 = &qs2[0]
    cdef double* pcr = &cr[0, 0] if has_cross else NULL
    cdef double* pstats = &stats[0, 0]
    cdef cnp.intp_t* ppy = &py[0, 0]
    cdef cnp.intp_t* ppx = &px[0, 0] if has_px else NULL

    cdef double one = 1.0
    cdef double zero = 0.0
    cdef char tr = b'T'
    cdef char no = b'N'
    cdef int info = 0
    cdef int j, kk, i, pk, qk, nsv
    cdef cnp.intp_t row

    with nogil:
        if not has_px:
            # Fixed right side: factorize once.
            for i in range(nx * q):
                # v is C-contiguous (nx, q); transpose into column-major.
                pa2[(i % q) * nx + i // q] = pv[i]
            info = _qr_q_and_r(pa2, nx, q, pr2, ptau, pwork, lwork)
            if info == 0 and has_cross:
                # t1 = cross @ q2, also fixed.
                dgemm(&no, &no, &ny, &q, &nx, &one, pcr, &ny, pa2, &nx, &zero, pt1, &ny)
            if info == 0 and step:
                for kk in range(1, kc):
                    qk = q - kk
                    for i in range(q * qk):
                        pb2[i] = pr2[i + kk * q]
                    info = _qr_q_and_r(pb2, q, qk, NULL, ptau, pwork, lwork)
                    if info != 0:
                        break
                    _copy_cmajor(pb2, q, qk, pqs2 + kk * q * q)

        if info == 0:
            for j in range(m):
                _gather(pu, p, ppy + j * ny, ny, pa1)
                info = _qr_q_and_r(pa1, ny, p, pr1, ptau, pwork, lwork)
                if info != 0:
                    break
                if has_px:
                    _gather(pv, q, ppx + j * nx, nx, pa2)
                    info = _qr_q_and_r(pa2, nx, q, pr2, ptau, pwork, lwork)
                    if info != 0:
                        break
                # g = q1' @ (cross @ q2)  /  q1' @ q2
                if has_cross:
                    if has_px:
                        dgemm(&no, &no, &ny, &q, &nx, &one, pcr, &ny, pa2, &nx,
                              &zero, pt1, &ny)
                    dgemm(&tr, &no, &p, &q, &ny, &one, pa1, &ny, pt1, &ny,
                          &zero, pg, &p)
                else:
                    dgemm(&tr, &no, &p, &q, &ny, &one, pa1, &ny, pa2, &nx,
                          &zero, pg, &p)

                if not step:
                    _copy_cmajor(pg, p, q, pgk)
                    info = _svals(pgk, p, q, psv, pwork, lwork, piwork)
                    if info != 0:
                        break
                    if roy:
                        for kk in range(kc):
                            pstats[j * kc + kk] = _stat(psv + kk, 1, 1)
                    else:
                        # Suffix sums of the per-correlation log terms.
                        pstats[j * kc + kc - 1] = _stat(psv + kc - 1, minpq - kc + 1, 0)
                        for kk in range(kc - 2, -1, -1):
                            pstats[j * kc + kk] = pstats[j * kc + kk + 1] + _stat(psv + kk, 1, 0)
                    continue

                _copy_cmajor(pg, p, q, pgk)
                info = _svals(pgk, p, q, psv, pwork, lwork, piwork)
                if info != 0:
                    break
                pstats[j * kc] = _stat(psv, minpq, roy)
                for kk in range(1, kc):
                    pk = p - kk
                    qk = q - kk
                    for i in range(p * pk):
                        pb1[i] = pr1[i + kk * p]
                    info = _qr_q_and_r(pb1, p, pk, NULL, ptau, pwork, lwork)
                    if info != 0:
                        break
                    if has_px:
                        for i in range(q * qk):
                            pb2[i] = pr2[i + kk * q]
                        info = _qr_q_and_r(pb2, q, qk, NULL, ptau, pwork, lwork)
                        if info != 0:
                            break
                        dgemm(&tr, &no, &pk, &q, &p, &one, pb1, &p, pg, &p,
                              &zero, pt2, &pk)
                        dgemm(&no, &no, &pk, &qk, &q, &one, pt2, &pk, pb2, &q,
                              &zero, pgk, &pk)
                    else:
                        dgemm(&tr, &no, &pk, &q, &p, &one, pb1, &p, pg, &p,
                              &zero, pt2, &pk)
                        dgemm(&no, &no, &pk, &qk, &q, &one, pt2, &pk,
                              pqs2 + kk * q * q, &q, &zero, pgk, &pk)
                    info = _svals(pgk, pk, qk, psv, pwork, lwork, piwork)
                    if info != 0:
                        break
                    nsv = qk if qk < pk else pk
                    pstats[j * kc + kk] = _stat(psv, nsv, roy)
                if info != 0:
                    break

    if info != 0:
        from .errors import NoConvergence
        raise NoConvergence(f"LAPACK routine failed with info={info}")
    return stats
