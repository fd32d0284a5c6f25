"""Implicit Euler-Maruyama / P1 time stepping for the stochastic BBM equation.

One step solves, for all test functions phi in V_h,

    (u1 - u0, phi) + (grad(u1 - u0), grad phi) + nu k (u1, phi)
        = k (F(u1), grad phi) + (G(u0) dW, phi)

by Picard iteration on the flux term with the constant matrix
``S = (1 + nu k) M + A`` factorized once.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .fem import FemOperators, build_operators
from .mesh import DIRICHLET, build_uniform_mesh
from .stochastic import K0_DEFAULT, NoiseCoefficient, WienerPath, apply_noise, coarsen


class SchemeError(RuntimeError):
    """Base class for failures while advancing a trajectory."""

    step: int | None = None

    def at_step(self, n: int) -> "SchemeError":
        self.step = n
        self.args = (f"step {n}: {self.args[0]}",) + self.args[1:]
        return self


class FixedPointError(SchemeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class DivergenceError(SchemeError):
    pass


def bump(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


INITIAL_CONDITIONS: dict[str, Callable | None] = {"zero": None, "bump": bump}


@dataclass
class SchemeConfig:
    k: float
    level: int
    nu: float = 1.0
    T: float = 1.0
    bc: str = DIRICHLET
    u0: object = None  # None/"zero", "bump", callable f(x, y), or nodal array
    fp_tol: float = 1e-10
    fp_max_iter: int = 100
    noise: NoiseCoefficient = field(default_factory=NoiseCoefficient.zero)
    seed: int = 0
    k0: float = K0_DEFAULT

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if not self.k > 0:
            raise ValueError("time step k must be positive")
        if not self.fp_tol > 0:
            raise ValueError("fp_tol must be positive")
        m = self.T / self.k
        if abs(m - round(m)) > 1e-9 * max(1.0, m) or round(m) < 1:
            raise ValueError(f"T/k must be a positive integer (T={self.T}, k={self.k})")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.k))

    def operators(self) -> FemOperators:
        return build_operators(build_uniform_mesh(self.level, self.bc), nu=self.nu, k=self.k)


def initial_state(ops: FemOperators, u0=None) -> np.ndarray:
    """Dof vector of the nodal interpolant of ``u0``."""
    if isinstance(u0, str):
        if u0 not in INITIAL_CONDITIONS:
            raise ValueError(f"unknown initial condition {u0!r}")
        u0 = INITIAL_CONDITIONS[u0]
    if u0 is None:
        return np.zeros(ops.n_dofs)
    if callable(u0):
        return ops.restrict(ops.mesh.interpolate(u0))
    u0 = np.asarray(u0, dtype=float)
    if u0.shape[0] == ops.n_dofs:
        return u0.copy()
    if u0.shape[0] == ops.mesh.n_nodes:
        return ops.restrict(u0)
    raise ValueError(f"initial state has length {u0.shape[0]}; mesh has {ops.mesh.n_nodes} nodes")


def energy(ops: FemOperators, u) -> tuple[float, float]:
    """``(||u||_L2^2, ||u||_H1^2)``."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != ops.n_dofs:
        raise ValueError(f"expected {ops.n_dofs} dof values, got {u.shape[0]}")
    l2 = float(u @ (ops.M @ u))
    return l2, l2 + float(u @ (ops.A @ u))


def step_residual(ops: FemOperators, u_n, u_next, dW, noise: NoiseCoefficient) -> np.ndarray:
    """Residual of the discrete variational equation at ``u_next``."""
    rhs = ops.H @ u_n + dW * ops.noise_load(apply_noise(noise, ops.expand(u_n)))
    return ops.S @ u_next - rhs - ops.k * ops.convection(u_next)


def implicit_step(ops: FemOperators, cfg: SchemeConfig, u_n, dW, noise_at=None):
    """Advance one step; returns ``(u_next, iterations)``.

    ``u_n`` may be a dof vector or a ``(n_dofs, J)`` batch with ``dW`` of length
    ``J``; each column iterates until its own successive H1 difference is below
    ``cfg.fp_tol``. ``noise_at`` overrides the state G is evaluated at (testing hook).
    """
    u_n = np.asarray(u_n, dtype=float)
    single = u_n.ndim == 1
    U0 = u_n[:, None] if single else u_n
    dW = np.broadcast_to(np.asarray(dW, dtype=float), (U0.shape[1],))
    g_state = U0 if noise_at is None else np.asarray(noise_at, dtype=float).reshape(U0.shape)
    if cfg.noise.is_zero:
        rhs0 = ops.H @ U0
    else:
        g = apply_noise(cfg.noise, ops.expand(g_state))
        rhs0 = ops.H @ U0 + ops.noise_load(g) * dW[None, :]

    U = U0.copy()
    iters = np.zeros(U.shape[1], dtype=np.int64)
    active = np.arange(U.shape[1])
    for _ in range(cfg.fp_max_iter):
        everyone = active.size == U.shape[1]
        Ua = U if everyone else U[:, active]
        rhs = rhs0 if everyone else rhs0[:, active]
        Unew = ops.solve(rhs + ops.k * ops.convection(Ua))
        diff = np.sqrt(np.maximum(ops.h1_sq_columns(Unew - Ua), 0.0))
        if not (np.all(np.isfinite(Unew)) and np.all(np.isfinite(diff))):
            raise DivergenceError("fixed-point iterate became non-finite")
        if everyone:
            U = Unew
        else:
            U[:, active] = Unew
        iters[active] += 1
        active = active[~(diff <= cfg.fp_tol)]
        if active.size == 0:
            break
    else:
        r = ops.S @ U[:, active] - rhs0[:, active] - ops.k * ops.convection(U[:, active])
        raise FixedPointError(
            f"fixed-point iteration did not converge in {cfg.fp_max_iter} iterations "
            f"(residual {np.max(np.abs(r)):.3e}); try a smaller k",
            float(np.max(np.abs(r))),
        )

    r = ops.S @ U - rhs0 - ops.k * ops.convection(U)
    rnorm = np.linalg.norm(r, axis=0)
    bound = cfg.fp_tol * (1.0 + np.linalg.norm(U, axis=0))
    if not np.all(rnorm <= bound):
        raise FixedPointError(
            f"fixed-point stalled: residual {rnorm.max():.3e} exceeds {bound[rnorm.argmax()]:.3e}",
            float(rnorm.max()),
        )
    if single:
        return U[:, 0], int(iters[0])
    return U, iters


@dataclass
class StepRecord:
    n: int
    U: np.ndarray  # (n_dofs, J) state after the step
    iters: np.ndarray
    pairing: np.ndarray  # (G(u^n) dW_n, u^n) per sample


def march(ops: FemOperators, cfg: SchemeConfig, increments, U0=None) -> Iterator[StepRecord]:
    """Yield the batch state after every step.

    ``increments`` has shape ``(J, n_steps)``; the batch is stepped in lockstep.
    """
    increments = np.atleast_2d(np.asarray(increments, dtype=float))
    J, n_steps = increments.shape
    if U0 is None:
        U0 = initial_state(ops, cfg.u0)
    U = np.array(U0, dtype=float)
    if U.ndim == 1:
        U = np.repeat(U[:, None], J, axis=1)
    for n in range(n_steps):
        dW = increments[:, n]
        if cfg.noise.is_zero:
            pairing = np.zeros(J)
        else:
            load = ops.noise_load(apply_noise(cfg.noise, ops.expand(U)))
            pairing = dW * np.einsum("ij,ij->j", load, U)
        try:
            U, iters = implicit_step(ops, cfg, U, dW)
        except SchemeError as exc:
            raise exc.at_step(n)
        yield StepRecord(n + 1, U, iters, pairing)


@dataclass
class Trajectory:
    h1_norms: np.ndarray
    fp_iters: np.ndarray
    noise_pairings: np.ndarray
    states: dict = field(default_factory=dict, repr=False)  # step -> dof vector

    @property
    def sup_h1(self) -> float:
        return float(np.max(self.h1_norms))

    @property
    def final_h1(self) -> float:
        return float(self.h1_norms[-1])


def run_trajectory(ops: FemOperators, cfg: SchemeConfig, path: WienerPath, checkpoints=None) -> Trajectory:
    """Drive one trajectory with ``path`` coarsened to ``cfg.k``.

    ``checkpoints``: iterable of step indices whose states are kept, ``"all"``,
    or None (initial and final state only).
    """
    increments = coarsen(path, cfg.k)
    if increments.shape[0] != cfg.n_steps:
        raise ValueError("path horizon does not match the configuration")
    u0 = initial_state(ops, cfg.u0)
    M = cfg.n_steps
    keep = set(range(M + 1)) if checkpoints == "all" else set(checkpoints or (0, M))
    h1 = np.empty(M + 1)
    h1[0] = ops.h1_norm(u0)
    iters = np.empty(M, dtype=np.int64)
    pairings = np.empty(M)
    states = {0: u0.copy()} if 0 in keep else {}
    for rec in march(ops, cfg, increments[None, :], u0):
        u = rec.U[:, 0]
        h1[rec.n] = math.sqrt(max(float(u @ (ops.H @ u)), 0.0))
        iters[rec.n - 1] = rec.iters[0]
        pairings[rec.n - 1] = rec.pairing[0]
        if rec.n in keep:
            states[rec.n] = u.copy()
    return Trajectory(h1, iters, pairings, states)


def dump_states(path, traj: Trajectory, cfg: SchemeConfig, ops: FemOperators, sample_id: int = 0) -> None:
    """CSV dump of checkpointed nodal vectors with a provenance header."""
    with open(path, "w") as fh:
        fh.write(
            f"# level={cfg.level} k={cfg.k!r} T={cfg.T!r} seed={cfg.seed} "
            f"sample_id={sample_id} bc={cfg.bc} nodes={ops.mesh.n_nodes}\n"
        )
        fh.write("step," + ",".join(f"n{i}" for i in range(ops.mesh.n_nodes)) + "\n")
        for n in sorted(traj.states):
            vals = ops.expand(traj.states[n])
            fh.write(f"{n}," + ",".join(repr(float(v)) for v in vals) + "\n")
