"""Elliptic projection of sin(pi x) sin(pi y): L2 and H1 errors per level."""
import math

import numpy as np

from sbbm.fem import build_operators, elliptic_project, error_norms, projection_loads
from sbbm.mesh import build_uniform_mesh
from sbbm.scheme import bump


def grad(x, y):
    return np.pi * np.cos(np.pi * x) * np.sin(np.pi * y), np.pi * np.sin(np.pi * x) * np.cos(np.pi * y)


def main(levels=range(1, 8)):
    print(f"{'level':>5} {'h':>9} {'L2 error':>12} {'order':>6} {'H1 error':>12} {'order':>6}")
    prev = None
    for L in levels:
        ops = build_operators(build_uniform_mesh(L))
        e0, e1 = error_norms(ops, elliptic_project(ops, *projection_loads(ops, bump, grad)), bump, grad)
        r0 = r1 = ""
        if prev:
            r0, r1 = f"{math.log2(prev[0] / e0):.3f}", f"{math.log2(prev[1] / e1):.3f}"
        print(f"{L:>5} {2.0**-L:>9.5f} {e0:>12.4e} {r0:>6} {e1:>12.4e} {r1:>6}")
        prev = (e0, e1)


if __name__ == "__main__":
    main()
