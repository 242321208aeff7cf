"""How fast the regularized Gibbs densities approach the unregularized one.

For the two-atom target the L1 distance between rho_alpha and the best
translate of rho_0 decays at least like alpha^{1/2}.
Run: python demos/04_regularization_path.py
"""
import numpy as np

from momlab import AtomicMeasure, Grid, regularization_path


def main():
    two = AtomicMeasure(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    fit = regularization_path(two, np.geomspace(1e-1, 1e-3, 5), Grid(-15, 15, 3001))
    for alpha, dist in fit.samples:
        print(f"alpha {alpha:.1e}: distance {dist:.4e}, distance / sqrt(alpha) {dist / np.sqrt(alpha):.4f}")
    print(f"log-log slope {fit.slope:.3f} (r^2 {fit.r2:.4f}); sqrt(alpha) bound holds: {fit.bound_holds}")


if __name__ == "__main__":
    main()
