"""Desk-scale invariant suite behind ``sbbm validate``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import experiments as ex
from .fem import (
    assemble_convection,
    assemble_mass_full,
    assemble_stiffness_full,
    build_operators,
    elliptic_project,
    error_norms,
    projection_loads,
)
from .mesh import BOUNDARY_CONDITIONS, build_prolongation, build_uniform_mesh, prolong
from .scheme import SchemeConfig, bump, energy, implicit_step
from .stochastic import NoiseCoefficient, brownian_values, coarsen, generate_path


@dataclass
class Check:
    name: str
    value: float
    threshold: str
    passed: bool

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}: {self.value:.3e} ({self.threshold})"


def check_mesh() -> list:
    worst = max(abs(build_uniform_mesh(L).signed_areas().sum() - 1.0) for L in range(9))
    out = [Check("mesh area sum, levels 0-8", worst, "<= 1e-14", worst <= 1e-14)]
    coarse, fine = build_uniform_mesh(2), build_uniform_mesh(3)
    f = lambda x, y: 2.0 * x - 3.0 * y + 0.5
    err = np.max(np.abs(prolong(build_prolongation(coarse, fine), coarse.interpolate(f)) - fine.interpolate(f)))
    out.append(Check("prolongation reproduces affine functions", err, "<= 1e-14", err <= 1e-14))
    return out


def check_fem(rng) -> list:
    out = []
    sums, rows = [], []
    for L in range(1, 6):
        mesh = build_uniform_mesh(L)
        sums.append(abs(assemble_mass_full(mesh).sum() - 1.0))
        rows.append(np.max(np.abs(assemble_stiffness_full(mesh).sum(axis=1))))
    out.append(Check("mass matrix total = 1", max(sums), "<= 1e-14", max(sums) <= 1e-14))
    out.append(Check("stiffness row sums = 0", max(rows), "<= 1e-14", max(rows) <= 1e-14))

    worst = 0.0
    for bc in BOUNDARY_CONDITIONS:
        for L in range(1, 5):
            ops = build_operators(build_uniform_mesh(L, bc))
            for _ in range(125):
                x = rng.normal(scale=rng.choice([0.1, 1.0, 10.0]), size=ops.n_dofs)
                u = ops.expand(x)
                b = assemble_convection(ops.mesh, u)
                worst = max(worst, abs(b @ u) / (1 + np.max(np.abs(u))) ** 3)
    out.append(Check("drift cancellation |b(u).u|/(1+|u|inf)^3", worst, "<= 1e-12", worst <= 1e-12))

    ops = build_operators(build_uniform_mesh(4), nu=1.0, k=1 / 256)
    b = rng.normal(size=ops.n_dofs)
    res = np.linalg.norm(ops.S @ ops.solve(b) - b) / np.linalg.norm(b)
    out.append(Check("factorized solve relative residual", res, "<= 1e-12", res <= 1e-12))
    return out


def check_projection() -> list:
    f = bump
    grad = lambda x, y: (np.pi * np.cos(np.pi * x) * np.sin(np.pi * y), np.pi * np.sin(np.pi * x) * np.cos(np.pi * y))
    e0, e1 = [], []
    for L in range(2, 6):
        ops = build_operators(build_uniform_mesh(L))
        p = elliptic_project(ops, *projection_loads(ops, f, grad))
        a, b = error_norms(ops, p, f, grad)
        e0.append(a)
        e1.append(b)
    r0 = math.log2(e0[-2] / e0[-1])
    r1 = math.log2(e1[-2] / e1[-1])
    return [
        Check("elliptic projection L2 order", r0, "2.0 +- 0.2", abs(r0 - 2.0) <= 0.2),
        Check("elliptic projection H1 order", r1, "1.0 +- 0.2", abs(r1 - 1.0) <= 0.2),
    ]


def check_stochastic() -> list:
    path = generate_path(3, 0)
    worst = 0.0
    for m in (2, 4, 16, 64):
        cum_c = brownian_values(coarsen(path, m * path.k0))
        cum_f = brownian_values(path.increments)[m - 1 :: m]
        worst = max(worst, np.max(np.abs(cum_c - cum_f)))
    out = [Check("coupled cumulative noise at shared times", worst, "<= 1e-15", worst <= 1e-15)]
    paths = np.stack([generate_path(11, j).increments for j in range(10000)])
    ratio = paths.var(axis=0, ddof=1) / path.k0
    bad = float(np.mean((ratio < 0.95) | (ratio > 1.05)))
    # chi-square(9999) puts ~0.0006 of increments outside +-5% by chance
    out.append(Check("fraction of increments with variance outside k0*[0.95,1.05]", bad, "<= 0.005", bad <= 0.005))
    wt = paths.sum(axis=1).var(ddof=1)
    out.append(Check("Var W(T)", wt, "1 +- 5%", abs(wt - 1.0) <= 0.05))
    return out


def check_scheme(rng) -> list:
    worst = 0.0
    for bc in BOUNDARY_CONDITIONS:
        for L in range(1, 5):
            cfg = SchemeConfig(k=4.0 ** -L, level=L, bc=bc)
            ops = cfg.operators()
            u0 = rng.normal(size=ops.n_dofs)
            u1, _ = implicit_step(ops, cfg, u0, 0.0)
            d = u1 - u0
            lhs = 0.5 * (energy(ops, u1)[1] - energy(ops, u0)[1] + energy(ops, d)[1]) + cfg.nu * cfg.k * energy(ops, u1)[0]
            worst = max(worst, abs(lhs) / energy(ops, u0)[1])
    return [Check("noise-free energy identity (relative)", worst, "<= 1e-10", worst <= 1e-10)]


def check_experiments(J: int = 50) -> list:
    out = []
    for name in ("table1", "table2"):
        cfg = ex.profile(f"ci-{name}", J=J, levels=[3, 4], u0="bump")
        rows = ex.run_study(cfg)
        order = rows[-1].order or float("nan")
        out.append(Check(f"{name} noise, bump start: rate on levels 3-4", order, "in [0.75, 1.15]", 0.75 <= order <= 1.15))
    cfg = ex.StudyConfig(levels=[3], J=100, noise=NoiseCoefficient.linear(0.25), u0="bump")
    z = ex.martingale_test(cfg, 3).z
    out.append(Check("martingale pairing |z|", abs(z), "< 3", abs(z) < 3))
    return out


def run_all(seed: int = 0, quick: bool = False) -> list:
    rng = np.random.default_rng(seed)
    checks = check_mesh() + check_fem(rng) + check_projection() + check_stochastic() + check_scheme(rng)
    if not quick:
        checks += check_experiments()
    return checks
