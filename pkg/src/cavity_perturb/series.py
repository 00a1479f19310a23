"""Truncated power series in two variables.

``BivariateSeries(c)`` stands for sum_ij c[i, j] t1**i t2**j with the shape of
``c`` fixing the highest power kept in each variable.  Products are truncated
back to that shape, so mixed partial derivatives at the origin up to
(shape[0]-1, shape[1]-1) come out exact to floating point:

    d^m/dt1^m d^n/dt2^n F(0, 0) = m! n! c[m, n]
"""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import convolve2d


class BivariateSeries:
    __array_priority__ = 100.0

    def __init__(self, c: np.ndarray):
        c = np.asarray(c)
        if c.ndim != 2 or 0 in c.shape:
            raise ValueError(f"coefficient array must be a non-empty 2-D array, got shape {c.shape}")
        self.c = c

    @classmethod
    def constant(cls, value, shape: tuple[int, int]) -> BivariateSeries:
        c = np.zeros(shape, dtype=np.result_type(value, float))
        c[0, 0] = value
        return cls(c)

    @classmethod
    def linear(cls, a1, a2, shape: tuple[int, int]) -> BivariateSeries:
        """a1 t1 + a2 t2."""
        c = np.zeros(shape, dtype=np.result_type(a1, a2, float))
        if shape[0] > 1:
            c[1, 0] = a1
        if shape[1] > 1:
            c[0, 1] = a2
        return cls(c)

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape

    def __getitem__(self, index):
        return self.c[index]

    def derivative_at_origin(self, m: int, n: int):
        return self.c[m, n] * math.factorial(m) * math.factorial(n)

    def _coerce(self, x) -> BivariateSeries | None:
        if isinstance(x, BivariateSeries):
            if x.shape != self.shape:
                raise ValueError(f"series shapes differ: {self.shape} vs {x.shape}")
            return x
        return None

    def __add__(self, x):
        other = self._coerce(x)
        if other is not None:
            return BivariateSeries(self.c + other.c)
        ans = self.c.astype(np.result_type(self.c, x), copy=True)
        ans[0, 0] += x
        return BivariateSeries(ans)

    def __radd__(self, x):
        return self + x

    def __neg__(self):
        return BivariateSeries(-self.c)

    def __sub__(self, x):
        return self + (-x)

    def __rsub__(self, x):
        return -self + x

    def __mul__(self, x):
        other = self._coerce(x)
        if other is None:
            return BivariateSeries(x * self.c)
        rows, cols = self.shape
        return BivariateSeries(convolve2d(self.c, other.c)[:rows, :cols])

    def __rmul__(self, x):
        return self * x

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError(f"only non-negative integer powers are supported, got {k!r}")
        ans = BivariateSeries.constant(1.0, self.shape)
        base = self
        while k:
            if k & 1:
                ans = ans * base
            k >>= 1
            if k:
                base = base * base
        return ans

    @property
    def _max_degree(self) -> int:
        return self.shape[0] + self.shape[1] - 2

    def _taylor(self, derivatives: list) -> BivariateSeries:
        # sum_j derivatives[j % len] x^j / j! with x = self - c[0, 0]
        x = self - self.c[0, 0]
        ans = BivariateSeries.constant(0.0, self.shape)
        term = BivariateSeries.constant(1.0, self.shape)
        for j in range(self._max_degree + 1):
            ans = ans + derivatives[j % len(derivatives)] * term
            term = term * x * (1.0 / (j + 1))
        return ans

    def exp(self) -> BivariateSeries:
        f = np.exp(self.c[0, 0])
        return self._taylor([f])

    def sin(self) -> BivariateSeries:
        s, c = np.sin(self.c[0, 0]), np.cos(self.c[0, 0])
        return self._taylor([s, c, -s, -c])

    def cos(self) -> BivariateSeries:
        s, c = np.sin(self.c[0, 0]), np.cos(self.c[0, 0])
        return self._taylor([c, -s, -c, s])

    def __repr__(self) -> str:
        return f"BivariateSeries(shape={self.shape})"
