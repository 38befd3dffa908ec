"""Complete polynomial basis for value-function approximation.

Monomials of total degree ``d_min..d_max`` with square-root-of-multinomial
coefficients, ordered by degree and then by descending leading exponent.
The minimum degree of 2 pins ``V(0) = 0``.
"""
from __future__ import annotations

import math
from itertools import product

import numpy as np

from .validation import check_states, check_vector


class PolynomialBasis:
    """Vector of weighted monomials with batch evaluation and Jacobians."""

    def __init__(self, exponents: np.ndarray, coefficients: np.ndarray,
                 d_min: int, d_max: int):
        self.exponents = np.asarray(exponents, dtype=int)
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.d_min = int(d_min)
        self.d_max = int(d_max)
        if self.exponents.ndim != 2 or len(self.coefficients) != len(self.exponents):
            raise ValueError("exponents and coefficients disagree in shape")
        self.n = self.exponents.shape[1]
        self.size = self.exponents.shape[0]
        # one power table lookup per dimension; exponent-1 clipped for gradients
        self._em1 = np.clip(self.exponents - 1, 0, None)
        self._dims = np.arange(self.n)

    def __len__(self) -> int:
        return self.size

    @property
    def descriptor(self) -> tuple[int, int, int]:
        return (self.n, self.d_min, self.d_max)

    def _power_table(self, x: np.ndarray) -> np.ndarray:
        # (n, d_max+1) with T[d, p] = x_d ** p
        return x[:, None] ** np.arange(self.d_max + 1)

    def eval_one(self, x) -> np.ndarray:
        x = check_vector(x, self.n, name="x")
        T = self._power_table(x)
        return self.coefficients * T[self._dims, self.exponents].prod(axis=1)

    def grad_one(self, x) -> np.ndarray:
        x = check_vector(x, self.n, name="x")
        T = self._power_table(x)
        P = T[self._dims, self.exponents]            # (N, n) per-dim factors
        out = np.empty((self.size, self.n))
        for d in range(self.n):
            other = np.prod(np.delete(P, d, axis=1), axis=1)
            out[:, d] = self.coefficients * self.exponents[:, d] * T[d, self._em1[:, d]] * other
        return out

    def eval(self, X) -> np.ndarray:
        """Evaluate at row states: (M, n) -> (M, N)."""
        X = check_states(X, self.n)
        T = X[:, :, None] ** np.arange(self.d_max + 1)          # (M, n, D+1)
        P = np.take_along_axis(T, self.exponents.T[None, :, :], axis=2)  # (M, n, N)
        return self.coefficients * P.prod(axis=1)

    def grad(self, X) -> np.ndarray:
        """Jacobians at row states: (M, n) -> (M, N, n), row j = grad phi_j."""
        X = check_states(X, self.n)
        M = X.shape[0]
        T = X[:, :, None] ** np.arange(self.d_max + 1)
        P = np.take_along_axis(T, self.exponents.T[None, :, :], axis=2)  # (M, n, N)
        out = np.empty((M, self.size, self.n))
        for d in range(self.n):
            other = np.prod(np.delete(P, d, axis=1), axis=1)             # (M, N)
            lowered = np.take_along_axis(T[:, d, :], self._em1[:, d][None, :], axis=1)
            out[:, :, d] = self.coefficients * self.exponents[:, d] * lowered * other
        return out


def make_poly_basis(n: int, d_min: int, d_max: int) -> PolynomialBasis:
    """All monomials of total degree in ``[d_min, d_max]`` over ``n`` variables.

    The coefficient of each monomial is the square root of the multinomial
    coefficient of its exponents, and terms are ordered by total degree with
    the leading exponent descending inside each degree. For ``n=2`` and
    degrees 2..6 this yields 25 terms.
    """
    n, d_min, d_max = int(n), int(d_min), int(d_max)
    if n < 1:
        raise ValueError("dimension must be positive")
    if not (2 <= d_min <= d_max):
        raise ValueError("degrees must satisfy 2 <= d_min <= d_max (so V(0) = 0)")
    exponents = []
    coefficients = []
    for d in range(d_min, d_max + 1):
        combos = [e for e in product(range(d, -1, -1), repeat=n) if sum(e) == d]
        combos.sort(reverse=True)
        for e in combos:
            exponents.append(e)
            mult = math.factorial(d)
            for ei in e:
                mult //= math.factorial(ei)
            coefficients.append(math.sqrt(mult))
    return PolynomialBasis(np.array(exponents), np.array(coefficients), d_min, d_max)
