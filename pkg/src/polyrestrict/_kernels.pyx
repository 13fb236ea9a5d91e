# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled direct-summation kernel for the extension operator.

Each output point is summed in a fixed node order, so results are
bit-identical regardless of the thread schedule.
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport sin, cos

cnp.import_array()


def extension_direct(const double[:, ::1] points, const double[:, ::1] nodes,
                     const double[::1] sq, const double complex[::1] fw,
                     int nthreads=1):
    """Sum_j fw[j] * exp(i (x' . w_j + x_n |w_j|^2)) for every row x of points."""
    cdef Py_ssize_t npts = points.shape[0]
    cdef Py_ssize_t nn = points.shape[1]
    cdef Py_ssize_t d = nodes.shape[1]
    cdef Py_ssize_t m = nodes.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double phase, re, im, fr, fi, c, s
    out = np.zeros(npts, dtype=np.complex128)
    cdef double complex[::1] res = out
    if nthreads < 1:
        nthreads = 1
    for i in prange(npts, nogil=True, schedule="static", num_threads=nthreads):
        re = 0.0
        im = 0.0
        for j in range(m):
            phase = points[i, nn - 1] * sq[j]
            for k in range(d):
                phase = phase + points[i, k] * nodes[j, k]
            c = cos(phase)
            s = sin(phase)
            fr = fw[j].real
            fi = fw[j].imag
            re = re + fr * c - fi * s
            im = im + fr * s + fi * c
        res[i] = re + 1j * im
    return out
