"""Tensor-product Gauss-Legendre quadrature over a box domain."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from .systems import DomainBox


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes (M, n) and positive weights (M,) summing to the box volume."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "nodes", np.atleast_2d(np.asarray(self.nodes, dtype=float)))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.shape[0] != self.weights.shape[0]:
            raise ValueError("node and weight counts disagree")
        if np.any(self.weights <= 0.0):
            raise ValueError("quadrature weights must be positive")

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def integrate(self, values: np.ndarray) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))


def gauss_legendre_grid(box: DomainBox, order: int) -> QuadratureGrid:
    """Gauss-Legendre rule with ``order`` points per dimension, mapped to ``box``.

    Exact for polynomials of per-dimension degree up to ``2*order - 1``.
    """
    order = int(order)
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    ref_nodes, ref_weights = np.polynomial.legendre.leggauss(order)
    n = box.dim
    nodes_1d = []
    weights_1d = []
    for d in range(n):
        half = 0.5 * (box.upper[d] - box.lower[d])
        mid = 0.5 * (box.upper[d] + box.lower[d])
        nodes_1d.append(mid + half * ref_nodes)
        weights_1d.append(half * ref_weights)
    nodes = np.array([pt for pt in product(*nodes_1d)])
    weights = np.array([np.prod(w) for w in product(*weights_1d)])
    return QuadratureGrid(nodes, weights)
