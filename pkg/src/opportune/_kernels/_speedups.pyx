# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled string similarity kernels.

Must stay bit-identical to the pure-Python versions in _strings.py; the
per-character inner loop here dominates class alignment on large ontologies.
"""

from cpython.unicode cimport PyUnicode_READ_CHAR


def jaro_similarity(str s1, str s2) -> float:
    if s1 == s2:
        return 1.0
    cdef Py_ssize_t len1 = len(s1)
    cdef Py_ssize_t len2 = len(s2)
    if len1 == 0 or len2 == 0:
        return 0.0
    cdef Py_ssize_t window = max(len1, len2) // 2 - 1
    if window < 0:
        window = 0

    cdef list matched1 = [False] * len1
    cdef list matched2 = [False] * len2
    cdef Py_ssize_t matches = 0
    cdef Py_ssize_t i, j, start, end
    for i in range(len1):
        start = i - window if i > window else 0
        end = i + window + 1
        if end > len2:
            end = len2
        for j in range(start, end):
            if matched2[j] or PyUnicode_READ_CHAR(s1, i) != PyUnicode_READ_CHAR(s2, j):
                continue
            matched1[i] = True
            matched2[j] = True
            matches += 1
            break
    if matches == 0:
        return 0.0

    cdef Py_ssize_t transpositions = 0
    cdef Py_ssize_t k = 0
    for i in range(len1):
        if not matched1[i]:
            continue
        while not matched2[k]:
            k += 1
        if PyUnicode_READ_CHAR(s1, i) != PyUnicode_READ_CHAR(s2, k):
            transpositions += 1
        k += 1
    transpositions //= 2

    cdef double m = <double> matches
    return (m / len1 + m / len2 + (m - transpositions) / m) / 3.0


def jaro_winkler_similarity(
    str s1, str s2, double prefix_weight=0.1, double boost_threshold=0.7
) -> float:
    cdef double jaro = jaro_similarity(s1, s2)
    if jaro <= boost_threshold:
        return jaro
    cdef Py_ssize_t prefix = 0
    cdef Py_ssize_t limit = min(min(len(s1), len(s2)), 4)
    cdef Py_ssize_t i
    for i in range(limit):
        if PyUnicode_READ_CHAR(s1, i) != PyUnicode_READ_CHAR(s2, i):
            break
        prefix += 1
    return jaro + prefix * prefix_weight * (1.0 - jaro)
