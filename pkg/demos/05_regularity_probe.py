"""Strong convexity of the potential whose moment measure is exp(-V).

V may be nonconvex as long as V'' <= Lambda. The measured modulus is set
against Lambda^{-1/3}, the limit of the exponent recursion, and Lambda^{-1}.
Run: python demos/05_regularity_probe.py
"""
import numpy as np

from momlab import ClassMembershipError, Grid, caffarelli_exponents, regularity_probe


def main():
    for k, (s, e) in enumerate(caffarelli_exponents(6), start=1):
        print(f"S_{k} = {s:.6f} (alpha exponent {e:.6f})")
    print(f"S_20 = {caffarelli_exponents(20)[-1][0]:.8f}")

    grid = Grid(-8, 8, 1601)
    cases = [("x^2/2", lambda x: x**2 / 2, 1.0),
             ("x^2/2 + 0.3 cos 2x", lambda x: x**2 / 2 + 0.3 * np.cos(2 * x), 2.2),
             ("x^2/2 + 0.3 cos 2x", lambda x: x**2 / 2 + 0.3 * np.cos(2 * x), 1.5)]
    for name, V, lam in cases:
        try:
            pr = regularity_probe(grid.field(V), lam)
        except ClassMembershipError as err:
            print(f"V = {name}, Lambda {lam}: rejected ({err})")
            continue
        print(f"V = {name}, Lambda {lam}: modulus {pr.modulus:.4f}, "
              f"Lambda^(-1/3) {pr.cube_root_threshold:.4f} ({'pass' if pr.passes_cube_root else 'fail'}), "
              f"Lambda^(-1) {pr.inverse_threshold:.4f} ({'pass' if pr.passes_inverse else 'fail'})")


if __name__ == "__main__":
    main()
