"""Pure-Python string similarity kernels.

Reference implementation for the optional compiled extension; both must
return bit-identical results (see tests/test_kernels.py).
"""

from __future__ import annotations


def jaro_similarity(s1: str, s2: str) -> float:
    """Jaro similarity in [0, 1]: common characters within a sliding window
    plus a transposition penalty."""
    if s1 == s2:
        return 1.0
    len1, len2 = len(s1), len(s2)
    if len1 == 0 or len2 == 0:
        return 0.0
    window = max(max(len1, len2) // 2 - 1, 0)

    matched1 = [False] * len1
    matched2 = [False] * len2
    matches = 0
    for i in range(len1):
        start = max(0, i - window)
        end = min(i + window + 1, len2)
        for j in range(start, end):
            if matched2[j] or s1[i] != s2[j]:
                continue
            matched1[i] = True
            matched2[j] = True
            matches += 1
            break
    if matches == 0:
        return 0.0

    transpositions = 0
    k = 0
    for i in range(len1):
        if not matched1[i]:
            continue
        while not matched2[k]:
            k += 1
        if s1[i] != s2[k]:
            transpositions += 1
        k += 1
    transpositions //= 2

    m = float(matches)
    return (m / len1 + m / len2 + (m - transpositions) / m) / 3.0


def jaro_winkler_similarity(
    s1: str, s2: str, prefix_weight: float = 0.1, boost_threshold: float = 0.7
) -> float:
    """Jaro similarity boosted by a shared prefix of up to 4 characters.

    The boost applies only above ``boost_threshold`` (classic Winkler form).
    """
    jaro = jaro_similarity(s1, s2)
    if jaro <= boost_threshold:
        return jaro
    prefix = 0
    for c1, c2 in zip(s1, s2):
        if c1 != c2 or prefix == 4:
            break
        prefix += 1
    return jaro + prefix * prefix_weight * (1.0 - jaro)
