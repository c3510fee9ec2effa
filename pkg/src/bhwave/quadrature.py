"""Small composite Gauss-Legendre helpers used by the certificate modules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import QuadratureError


@lru_cache(maxsize=64)
def _leggauss(order: int):
    return np.polynomial.legendre.leggauss(order)


def panel_nodes(breakpoints, order: int):
    """Nodes and weights of per-panel Gauss-Legendre on the given partition."""
    bp = np.asarray(breakpoints, dtype=float)
    x, w = _leggauss(order)
    lo = bp[:-1][:, None]
    hi = bp[1:][:, None]
    nodes = 0.5 * (hi + lo) + 0.5 * (hi - lo) * x[None, :]
    weights = 0.5 * (hi - lo) * w[None, :]
    return nodes.ravel(), weights.ravel()


def gauss_panels(f, breakpoints, order: int) -> float:
    nodes, weights = panel_nodes(breakpoints, order)
    return float(np.sum(weights * f(nodes)))


def adaptive_gauss(f, a: float, b: float, rel_tol: float = 1e-9,
                   order0: int = 8, max_level: int = 8) -> tuple[float, float]:
    """Integrate a smooth vectorized integrand, doubling the order until stable.

    Returns (value, estimated relative error).  Raises QuadratureError if the
    node-doubling sequence never settles.
    """
    bp = (a, b)
    prev = gauss_panels(f, bp, order0)
    order = order0
    for _ in range(max_level):
        order *= 2
        cur = gauss_panels(f, bp, order)
        err = abs(cur - prev) / max(abs(cur), 1e-300)
        if err < rel_tol:
            return cur, err
        prev = cur
    raise QuadratureError(f"quadrature did not converge below {rel_tol} on [{a}, {b}]")


def geometric_breakpoints(n_panels: int) -> np.ndarray:
    """Partition of (0, 1] refined geometrically toward 0: 0, 2^-K, ..., 1/2, 1."""
    if n_panels < 1:
        raise QuadratureError("need at least one panel")
    points = [0.0] + [2.0 ** (-(n_panels - j)) for j in range(n_panels)] + [1.0]
    return np.unique(np.asarray(points))
