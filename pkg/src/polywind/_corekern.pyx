# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled propagation backend (FFTW).

Same contract as _solver_py.propagate: one-unit splitting scheme with the
identical operation order and rescale schedule.  Plans use FFTW_ESTIMATE
only; measured plans pick timing-dependent algorithms and would make results
vary between processes, which the reproducibility contract forbids.
"""

from libc.math cimport fabs, log, isfinite
from libc.string cimport memcpy

import numpy as np

from ._solver_py import NumericalInstability, RESCALE_EVERY, RESCALE_HI, RESCALE_LO


cdef extern from "fftw3.h" nogil:
    ctypedef double fftw_complex[2]
    ctypedef struct fftw_plan_s:
        pass
    ctypedef fftw_plan_s *fftw_plan
    void *fftw_malloc(size_t n)
    void fftw_free(void *p)
    fftw_plan fftw_plan_many_dft_r2c(int rank, const int *n, int howmany,
                                     double *in_, const int *inembed, int istride, int idist,
                                     fftw_complex *out, const int *onembed, int ostride, int odist,
                                     unsigned flags)
    fftw_plan fftw_plan_many_dft_c2r(int rank, const int *n, int howmany,
                                     fftw_complex *in_, const int *inembed, int istride, int idist,
                                     double *out, const int *onembed, int ostride, int odist,
                                     unsigned flags)
    void fftw_execute(fftw_plan p)
    void fftw_destroy_plan(fftw_plan p)

DEF FFTW_ESTIMATE = 64
DEF FFTW_DESTROY_INPUT = 1

cdef int _RESCALE_EVERY = RESCALE_EVERY
cdef double _RESCALE_HI = RESCALE_HI
cdef double _RESCALE_LO = RESCALE_LO


cdef class _PlanSet:
    """FFT plans plus work buffers for one (rows, n) state shape."""

    cdef int rows, n, nc
    cdef double *rbuf
    cdef fftw_complex *cbuf
    cdef fftw_plan fwd
    cdef fftw_plan bwd

    def __cinit__(self, int rows, int n):
        cdef int nc = n // 2 + 1
        self.rows = rows
        self.n = n
        self.nc = nc
        self.rbuf = <double *> fftw_malloc(sizeof(double) * rows * n)
        self.cbuf = <fftw_complex *> fftw_malloc(sizeof(fftw_complex) * rows * nc)
        if self.rbuf == NULL or self.cbuf == NULL:
            raise MemoryError("fftw buffer allocation failed")
        self.fwd = fftw_plan_many_dft_r2c(1, &n, rows,
                                          self.rbuf, NULL, 1, n,
                                          self.cbuf, NULL, 1, nc,
                                          FFTW_ESTIMATE)
        self.bwd = fftw_plan_many_dft_c2r(1, &n, rows,
                                          self.cbuf, NULL, 1, nc,
                                          self.rbuf, NULL, 1, n,
                                          FFTW_ESTIMATE | FFTW_DESTROY_INPUT)
        if self.fwd == NULL or self.bwd == NULL:
            raise RuntimeError("fftw plan creation failed")

    def __dealloc__(self):
        if self.fwd != NULL:
            fftw_destroy_plan(self.fwd)
        if self.bwd != NULL:
            fftw_destroy_plan(self.bwd)
        if self.rbuf != NULL:
            fftw_free(self.rbuf)
        if self.cbuf != NULL:
            fftw_free(self.cbuf)


_plan_cache = {}


cdef _PlanSet _plans_for(int rows, int n):
    key = (rows, n)
    ps = _plan_cache.get(key)
    if ps is None:
        ps = _PlanSet(rows, n)
        _plan_cache[key] = ps
    return ps


cdef void _spectral_mul(fftw_complex *cbuf, int rows, int nc, const double *mul) nogil:
    cdef int r, i
    cdef fftw_complex *row
    for r in range(rows):
        row = cbuf + r * nc
        for i in range(nc):
            row[i][0] *= mul[i]
            row[i][1] *= mul[i]


cdef int _run(_PlanSet ps, const double[:, :] factors, const double *hmul, const double *fmul,
              int tiles, int m, bint reverse, double *log_scale_out) nogil:
    cdef int rows = ps.rows, n = ps.n, nc = ps.nc
    cdef int steps = factors.shape[0]
    cdef int s, fi, r, t, c, base
    cdef double *rbuf = ps.rbuf
    cdef double peak, v, inv
    cdef double log_scale = 0.0

    fftw_execute(ps.fwd)
    _spectral_mul(ps.cbuf, rows, nc, hmul)
    fftw_execute(ps.bwd)
    for s in range(steps):
        fi = steps - 1 - s if reverse else s
        for r in range(rows):
            base = r * n
            for t in range(tiles):
                for c in range(m):
                    rbuf[base + t * m + c] *= factors[fi, c]
        fftw_execute(ps.fwd)
        _spectral_mul(ps.cbuf, rows, nc, hmul if s == steps - 1 else fmul)
        fftw_execute(ps.bwd)
        if (s + 1) % _RESCALE_EVERY == 0 or s == steps - 1:
            peak = 0.0
            for r in range(rows * n):
                v = fabs(rbuf[r])
                if v > peak:
                    peak = v
            if not isfinite(peak):
                return s + 1
            if peak == 0.0:
                return -(s + 1)
            if peak > _RESCALE_HI or peak < _RESCALE_LO:
                inv = 1.0 / peak
                for r in range(rows * n):
                    rbuf[r] *= inv
                log_scale += log(peak)
    log_scale_out[0] = log_scale
    return 0


def propagate(double[:, ::1] state, const double[:, :] factors,
              const double[::1] half_mult, const double[::1] full_mult, bint reverse=False):
    """Drop-in for _solver_py.propagate (state updated in place)."""
    cdef int rows = state.shape[0], n = state.shape[1]
    cdef int m = factors.shape[1]
    cdef int tiles = n // m
    if tiles * m != n:
        raise ValueError(f"state width {n} not a multiple of factor width {m}")
    cdef int nc = n // 2 + 1
    if half_mult.shape[0] != nc or full_mult.shape[0] != nc:
        raise ValueError("spectral multiplier length mismatch")

    # fold the inverse-transform normalization into the multipliers
    hs = np.asarray(half_mult) / n
    fs = np.asarray(full_mult) / n
    cdef double[::1] hv = hs
    cdef double[::1] fv = fs

    cdef _PlanSet ps = _plans_for(rows, n)
    cdef int r, status
    cdef double log_scale = 0.0
    for r in range(rows):
        memcpy(ps.rbuf + r * n, &state[r, 0], sizeof(double) * n)
    with nogil:
        status = _run(ps, factors, &hv[0], &fv[0], tiles, m, reverse, &log_scale)
    if status > 0:
        raise NumericalInstability(status, "non-finite values")
    if status < 0:
        raise NumericalInstability(-status, "state collapsed to zero")
    for r in range(rows):
        memcpy(&state[r, 0], ps.rbuf + r * n, sizeof(double) * n)
    return log_scale
