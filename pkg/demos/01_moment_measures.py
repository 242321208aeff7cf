"""Solve for the convex potential whose moment measure is a given target.

The standard Gaussian is its own moment measure (psi = x^2/2). The symmetric
two-atom measure is the moment measure of psi = |x|, whose Gibbs density is
the Laplace density. Run: python demos/01_moment_measures.py
"""
import numpy as np

from momlab import AtomicMeasure, Density, Grid, l1_distance, solve_moment_measure
from momlab.convexlab import gradient, second_derivative


def main():
    grid = Grid(-8, 8, 4001)
    gauss = Density.from_function(grid, lambda x: np.exp(-x**2 / 2))
    rep = solve_moment_measure(gauss, 0.0, grid)
    inner = np.abs(rep.psi.grid.x) < 5
    curv = second_derivative(rep.psi).values[inner]
    print("Gaussian target")
    print(f"  iterations {rep.iterations}, residual {rep.residual:.2e}, duality gap {rep.gap:.2e}")
    print(f"  psi'' in [{curv.min():.4f}, {curv.max():.4f}] on |x| < 5 (expected 1)")

    two = AtomicMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    grid = Grid(-15, 15, 3001)
    rep = solve_moment_measure(two, 0.0, grid)
    x = rep.psi.grid.x
    slope = gradient(rep.psi).values
    far = (np.abs(x) > 0.05) & (np.abs(x) < 12)
    laplace = Density.from_function(grid, lambda x: np.exp(-np.abs(x)))
    print("two atoms at -1 and 1")
    print(f"  iterations {rep.iterations}, residual {rep.residual:.2e}")
    print(f"  max |psi' - sign(x)| away from 0: {np.max(np.abs(slope[far] - np.sign(x[far]))):.2e}")
    print(f"  L1 distance of rho to the Laplace density: {l1_distance(rep.rho, laplace):.2e}")

    print("regularized Gaussian: psi_alpha = c x^2/2 with c^2 = c + alpha")
    for alpha in (0.5, 1.0, 2.0):
        rep = solve_moment_measure(Density.from_function(Grid(-8, 8, 4001), lambda x: np.exp(-x**2 / 2)),
                                   alpha, Grid(-8, 8, 4001), compute_functionals=False)
        x = rep.psi.grid.x
        sel = np.abs(x) < 3
        c = 2 * np.polyfit(x[sel], rep.psi.values[sel], 2)[0]
        print(f"  alpha {alpha}: fitted c {c:.4f}, closed form {(1 + np.sqrt(1 + 4 * alpha)) / 2:.4f}")


if __name__ == "__main__":
    main()
