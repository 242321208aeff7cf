"""Prekopa-Leindler: exact triples, a failing triple and the near-equality expansion.

The triple u = e^{2 delta f - phi}, v = e^{-phi}, w = e^{f_delta - phi} meets
the Prekopa condition, and its deficit behaves like delta^2 times half the
Brascamp-Lieb deficit of f. Run: python demos/03_prekopa_leindler.py
"""
import math

import numpy as np

from momlab import (Grid, Potential, PreconditionError, bl_deficit, bl_triple, indicator,
                    pl_deficit)


def main():
    g = Grid(-1, 4, 101)
    eps = pl_deficit(indicator(g, 0, 1), indicator(g, 2, 3), indicator(g, 0, 3), 0.5)
    print(f"intervals [0,1], [2,3] -> [0,3]: deficit {eps:.6f} (3/sqrt(1*1) - 1 = 2)")
    try:
        pl_deficit(indicator(g, 0, 1), indicator(g, 2, 3), indicator(g, 0, 1.4), 0.5)
    except PreconditionError as err:
        print(f"h = indicator of [0, 1.4] is rejected: {err}")

    phi = Potential.from_function(Grid(-10, 10, 2001), lambda x: x**2 / 2 + 0.5 * math.log(2 * math.pi))
    f = phi.grid.field(lambda x: x**2)
    half_bl = bl_deficit(f, phi).deficit / 2
    print(f"f = x^2 under the Gaussian: half the Brascamp-Lieb deficit is {half_bl:.4f}")
    for delta in (1e-3, 3e-3, 1e-2):
        u, v, w = bl_triple(f, phi, delta)
        ratio = pl_deficit(u, v, w, 0.5, check=False) / delta**2
        print(f"  delta {delta:.0e}: deficit / delta^2 = {ratio:.4f}")

    u, v, w = bl_triple(phi.grid.field(lambda x: x), phi, 0.05)
    print(f"f = x (an optimizer), delta 0.05: deficit {pl_deficit(u, v, w, 0.5, check=False):.2e}")


if __name__ == "__main__":
    main()
