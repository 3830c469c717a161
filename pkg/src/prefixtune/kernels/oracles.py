"""Textbook sequential algorithms used as independent references, in double precision."""

from __future__ import annotations

import numpy as np

from ..errors import SingularSystemError


def oracle_prefix(values) -> list:
    out = []
    total = 0
    for v in values:
        total = total + v
        out.append(total)
    return out


def oracle_thomas(system) -> np.ndarray:
    a, b, c, d = system.lower, system.diagonal, system.upper, system.rhs
    n = len(b)
    cp = np.zeros(n)
    dp = np.zeros(n)
    for i in range(n):
        denom = b[i] - (a[i] * cp[i - 1] if i else 0.0)
        if denom == 0:
            raise SingularSystemError(f"zero pivot at row {i}")
        cp[i] = c[i] / denom
        dp[i] = (d[i] - (a[i] * dp[i - 1] if i else 0.0)) / denom
    x = np.zeros(n)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def oracle_dft(signal, direction: str = "forward", chunk: int = 512) -> np.ndarray:
    x = np.asarray(signal, dtype=np.complex128)
    n = len(x)
    sign = -1.0 if direction == "forward" else 1.0
    j = np.arange(n)
    out = np.empty(n, dtype=np.complex128)
    for start in range(0, n, chunk):
        k = np.arange(start, min(start + chunk, n))
        # exact integer phase reduction keeps the angle small
        phase = (np.outer(k, j) % n) * (2.0 * np.pi / n)
        out[start:start + len(k)] = np.exp(sign * 1j * phase) @ x
    if direction == "inverse":
        out /= n
    return out
