"""Distance to the Brascamp-Lieb optimizers against the deficit.

Along f = phi' + eps g the deficit grows like eps^2 and the L1 distance to
the optimizers {a phi' + b} like eps, so log-distance against log-deficit has
slope 1/2. For a non-quadratic phi the central differences leave a deficit
floor of order h^2 at eps = 0; subtracting it restores the slope.
Run: python demos/02_brascamp_lieb_stability.py
"""
import numpy as np

from momlab import Field, Grid, Potential, bl_deficit, dist_to_bl_optimizers
from momlab.convexlab import gradient


def sweep(phi, g, eps):
    dphi = gradient(phi).values
    floor = bl_deficit(Field(phi.grid, dphi), phi).deficit
    rows = []
    for e in eps:
        f = Field(phi.grid, dphi + e * g(phi.grid.x))
        rows.append((e, bl_deficit(f, phi).deficit, dist_to_bl_optimizers(f, phi)[0]))
    return floor, np.array(rows)


def main():
    eps = np.geomspace(1e-3, 1e-1, 9)
    cases = {
        "x^2/2 on [-8, 8]": Potential.from_function(Grid(-8, 8, 2001), lambda x: x**2 / 2),
        "x^2/2 + x^4/12 on [-6, 6]": Potential.from_function(Grid(-6, 6, 2001),
                                                             lambda x: x**2 / 2 + x**4 / 12),
    }
    for name, phi in cases.items():
        floor, rows = sweep(phi, np.sin, eps)
        raw = np.polyfit(np.log(rows[:, 1]), np.log(rows[:, 2]), 1)[0]
        fixed = np.polyfit(np.log(rows[:, 1] - floor), np.log(rows[:, 2]), 1)[0]
        print(f"phi = {name}, g = sin")
        print(f"  deficit floor {floor:.2e}; raw slope {raw:.3f}; floor-corrected slope {fixed:.3f}")
        for e, d, dist in rows[::4]:
            print(f"    eps {e:.1e}: deficit {d:.3e}, distance {dist:.3e}")


if __name__ == "__main__":
    main()
