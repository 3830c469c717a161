"""Tridiagonal solvers built on the CR, PCR, Ladner-Fischer and Wang&Mou circuits.

The LF and WM solvers treat each equation as an element of a prefix problem.
A contiguous block of equations [l..u] is summarised by two equations over the
unknowns (x[l-1], x[l], x[u], x[u+1]) once its interior unknowns have been
eliminated; joining two adjacent blocks eliminates the two unknowns at the seam.
That join is associative, so any prefix circuit can run it.  One prefix pass and
one suffix pass give every unknown through a 2x2 solve.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..errors import SingularSystemError, SizeError, UnsupportedRadixError, ValidationError
from .problem import is_pow2


@dataclass(frozen=True)
class TridiagonalSystem:
    lower: np.ndarray
    diagonal: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray

    def __post_init__(self) -> None:
        arrays = [np.asarray(v, dtype=float) for v in (self.lower, self.diagonal, self.upper, self.rhs)]
        n = len(arrays[1])
        if any(a.ndim != 1 or len(a) != n for a in arrays):
            raise ValidationError("all coefficient sequences must be 1-D with equal length")
        if not is_pow2(n):
            raise SizeError(f"system size must be a power of two, got {n}")
        if arrays[0][0] != 0 or arrays[2][-1] != 0:
            raise ValidationError("boundary coefficients lower[0] and upper[-1] must be zero")
        for name, arr in zip(("lower", "diagonal", "upper", "rhs"), arrays):
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return len(self.diagonal)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.diagonal * x
        out[1:] += self.lower[1:] * x[:-1]
        out[:-1] += self.upper[:-1] * x[1:]
        return out

    def residual(self, x) -> float:
        """max |A x - d| scaled by (|d|_inf + 1)."""
        r = np.abs(self.matvec(x) - self.rhs).max()
        return float(r / (np.abs(self.rhs).max() + 1.0))


def _checked(div: np.ndarray) -> np.ndarray:
    if np.any(div == 0):
        raise SingularSystemError("zero pivot encountered")
    return div


def solve_cr(system: TridiagonalSystem) -> np.ndarray:
    a, b, c, d = (v.copy() for v in (system.lower, system.diagonal, system.upper, system.rhs))
    n = system.size
    stride = 1
    while stride < n:
        i = np.arange(2 * stride - 1, n, 2 * stride)
        left = i - stride
        right = i + stride
        has_right = right < n
        right = np.where(has_right, right, left)
        k1 = a[i] / _checked(b[left])
        k2 = np.where(has_right, c[i] / _checked(b[right]), 0.0)
        new_a = -a[left] * k1
        new_b = b[i] - c[left] * k1 - a[right] * k2
        new_c = np.where(has_right, -c[right] * k2, 0.0)
        new_d = d[i] - d[left] * k1 - d[right] * k2
        a[i], b[i], c[i], d[i] = new_a, new_b, new_c, new_d
        stride *= 2

    x = np.zeros(n)
    stride = n
    while stride >= 1:
        i = np.arange(stride - 1, n, 2 * stride)
        lo = i - stride
        hi = i + stride
        x_lo = np.where(lo >= 0, x[np.clip(lo, 0, n - 1)], 0.0)
        x_hi = np.where(hi < n, x[np.clip(hi, 0, n - 1)], 0.0)
        x[i] = (d[i] - a[i] * x_lo - c[i] * x_hi) / _checked(b[i])
        stride //= 2
    return x


def solve_pcr(system: TridiagonalSystem) -> np.ndarray:
    a, b, c, d = (v.copy() for v in (system.lower, system.diagonal, system.upper, system.rhs))
    n = system.size
    idx = np.arange(n)
    stride = 1
    while stride < n:
        lo_ok = idx - stride >= 0
        hi_ok = idx + stride < n
        lo = np.where(lo_ok, idx - stride, idx)
        hi = np.where(hi_ok, idx + stride, idx)
        _checked(b)
        k1 = np.where(lo_ok, a / b[lo], 0.0)
        k2 = np.where(hi_ok, c / b[hi], 0.0)
        a, b, c, d = (
            np.where(lo_ok, -a[lo] * k1, 0.0),
            b - np.where(lo_ok, c[lo] * k1, 0.0) - np.where(hi_ok, a[hi] * k2, 0.0),
            np.where(hi_ok, -c[hi] * k2, 0.0),
            d - np.where(lo_ok, d[lo] * k1, 0.0) - np.where(hi_ok, d[hi] * k2, 0.0),
        )
        stride *= 2
    return d / _checked(b)


# Block summaries: array (..., 2, 5); row 0 is the first equation, row 1 the last.
# Columns hold coefficients of x[l-1], x[l], x[u], x[u+1] and the right-hand side.

def _singletons(system: TridiagonalSystem) -> np.ndarray:
    n = system.size
    blocks = np.zeros((n, 2, 5))
    blocks[:, 0, 0] = blocks[:, 1, 0] = system.lower
    blocks[:, 0, 1] = system.diagonal
    blocks[:, 1, 2] = system.diagonal
    blocks[:, 0, 3] = blocks[:, 1, 3] = system.upper
    blocks[:, 0, 4] = blocks[:, 1, 4] = system.rhs
    return blocks


def join_blocks(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Summary of block [l..u] from summaries of [l..m] and [m+1..u]."""
    f1, l1 = left[..., 0, :], left[..., 1, :]
    f2, l2 = right[..., 0, :], right[..., 1, :]
    # seam unknowns are x[m] and x[m+1]; solve for them from l1 and f2
    m00, m01 = l1[..., 2], l1[..., 3]
    m10, m11 = f2[..., 0], f2[..., 1]
    det = m00 * m11 - m01 * m10
    if np.any(det == 0):
        raise SingularSystemError("zero pivot encountered while joining blocks")

    def eliminate(r_m, r_m1):
        u0 = (r_m * m11 - r_m1 * m10) / det
        u1 = (r_m1 * m00 - r_m * m01) / det
        return u0[..., None], u1[..., None]

    # l1 and f2 expanded to columns (y, xl, xu, z, d) of the joined block
    l1_x = np.stack([l1[..., 0], l1[..., 1], np.zeros_like(det), np.zeros_like(det), l1[..., 4]], axis=-1)
    f2_x = np.stack([np.zeros_like(det), np.zeros_like(det), f2[..., 2], f2[..., 3], f2[..., 4]], axis=-1)

    first = np.stack([f1[..., 0], f1[..., 1], np.zeros_like(det), np.zeros_like(det), f1[..., 4]], axis=-1)
    u0, u1 = eliminate(f1[..., 2], f1[..., 3])
    first = first - u0 * l1_x - u1 * f2_x

    last = np.stack([np.zeros_like(det), np.zeros_like(det), l2[..., 2], l2[..., 3], l2[..., 4]], axis=-1)
    u0, u1 = eliminate(l2[..., 0], l2[..., 1])
    last = last - u0 * l1_x - u1 * f2_x
    return np.stack([first, last], axis=-2)


Combine = Callable[[np.ndarray, np.ndarray], np.ndarray]


def ladner_fischer_prefix(items: np.ndarray, op: Combine) -> np.ndarray:
    x = items.copy()
    n = len(x)
    idx = np.arange(n)
    half = 1
    while half < n:
        upper = idx[(idx & half) != 0]
        src = (upper & ~(half - 1)) - 1
        x[upper] = op(x[src], x[upper])
        half *= 2
    return x


def recursive_doubling_prefix(items: np.ndarray, op: Combine, radix: int = 2) -> np.ndarray:
    """Full recursive doubling; each step joins `radix` segments per node."""
    x = items.copy()
    n = len(x)
    stride = 1
    while stride < n:
        acc = x.copy()
        for j in range(1, radix):
            shift = j * stride
            if shift >= n:
                break
            acc[shift:] = op(x[:-shift], acc[shift:])
        x = acc
        stride *= radix
    return x


def _solve_by_prefix(system: TridiagonalSystem, scan) -> np.ndarray:
    n = system.size
    if n == 1:
        return system.rhs / _checked(system.diagonal)
    blocks = _singletons(system)
    prefix = scan(blocks, join_blocks)
    suffix = scan(blocks[::-1], lambda a, b: join_blocks(b, a))[::-1]

    whole = prefix[-1]
    # whole system: two equations in x[0] and x[n-1]
    m = np.array([[whole[0, 1], whole[0, 2]], [whole[1, 1], whole[1, 2]]])
    if np.linalg.det(m) == 0:
        raise SingularSystemError("zero pivot encountered")
    x0, xn = np.linalg.solve(m, whole[:, 4])

    p = prefix[:-1, 1, :]   # last equation of [0..i]: x0, x[i], x[i+1]
    s = suffix[1:, 0, :]    # first equation of [i+1..n-1]: x[i], x[i+1], x[n-1]
    r0 = p[:, 4] - p[:, 1] * x0
    r1 = s[:, 4] - s[:, 2] * xn
    det = p[:, 2] * s[:, 1] - p[:, 3] * s[:, 0]
    x = np.empty(n)
    x[:-1] = (r0 * s[:, 1] - p[:, 3] * r1) / _checked(det)
    x[-1] = xn
    return x


def solve_lf(system: TridiagonalSystem) -> np.ndarray:
    return _solve_by_prefix(system, ladner_fischer_prefix)


def solve_wm(system: TridiagonalSystem, radix: int = 2) -> np.ndarray:
    if radix not in (2, 4, 8):
        raise UnsupportedRadixError(f"Wang&Mou supports radix 2, 4 or 8, got {radix}")
    return _solve_by_prefix(system, lambda items, op: recursive_doubling_prefix(items, op, radix))


SOLVERS = {"CR": solve_cr, "PCR": solve_pcr, "LF": solve_lf, "WM": solve_wm}


def solve_tridiagonal(system: TridiagonalSystem, algorithm: str = "CR", radix: int = 2) -> np.ndarray:
    algorithm = algorithm.upper()
    if algorithm not in SOLVERS:
        raise ValidationError(f"unknown tridiagonal algorithm {algorithm!r}")
    if algorithm == "WM":
        return solve_wm(system, radix)
    if radix != 2:
        raise UnsupportedRadixError(f"radix fixed at 2 for {algorithm}")
    return SOLVERS[algorithm](system)
