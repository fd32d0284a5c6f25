"""Monte Carlo strong-error studies and statistical stability checks.

Every sample ``j`` is driven by the Brownian path keyed ``(seed, j)``, on every
level and for both the coarse and the reference run, so the reported
differences measure discretization error rather than noise variance.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .fem import FemOperators
from .mesh import DIRICHLET, build_prolongation, prolong
from .scheme import SchemeConfig, march
from .stochastic import K0_DEFAULT, NoiseCoefficient, increment_matrix

log = logging.getLogger(__name__)

SAME_K = "same_k"
K_OVER_4 = "k_over_4"
REF_RULES = (SAME_K, K_OVER_4)

# Seed offset for the deliberately uncoupled reference paths (negative control).
_UNCOUPLED_SEED_OFFSET = 0x9E3779B97F4A7C15
CHUNK = 100


@dataclass
class StudyConfig:
    levels: list = field(default_factory=lambda: [1, 2, 3, 4])
    J: int = 400
    noise: NoiseCoefficient = field(default_factory=lambda: NoiseCoefficient.linear(0.25))
    seed: int = 0
    nu: float = 1.0
    T: float = 1.0
    bc: str = DIRICHLET
    u0: object = None
    k_equals_h2: bool = True
    k: float | None = None  # used when k_equals_h2 is False
    ref_rule: str = SAME_K
    k0: float = K0_DEFAULT
    fp_tol: float = 1e-10
    fp_max_iter: int = 100
    coupled: bool = True

    def __post_init__(self):
        self.levels = [int(v) for v in self.levels]
        if any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if self.J < 2:
            raise ValueError("need at least two samples")
        if self.ref_rule not in REF_RULES:
            raise ValueError(f"ref_rule must be one of {REF_RULES}")
        if not self.k_equals_h2 and self.k is None:
            raise ValueError("a fixed time step k is required when k_equals_h2 is off")

    def time_step(self, level: int) -> float:
        return 4.0 ** -level if self.k_equals_h2 else float(self.k)

    def scheme(self, level: int, k: float | None = None) -> SchemeConfig:
        return SchemeConfig(
            k=self.time_step(level) if k is None else k,
            level=level,
            nu=self.nu,
            T=self.T,
            bc=self.bc,
            u0=self.u0,
            fp_tol=self.fp_tol,
            fp_max_iter=self.fp_max_iter,
            noise=self.noise,
            seed=self.seed,
            k0=self.k0,
        )


@dataclass
class ConvergenceRow:
    level: int
    k: float
    h: float
    error: float
    order: float | None
    J: int
    stderr: float

    def csv_fields(self) -> list:
        order = "" if self.order is None or not math.isfinite(self.order) else f"{self.order:.6g}"
        return [repr(self.k), repr(self.h), f"{self.error:.10g}", order, self.J, f"{self.stderr:.6g}"]


CSV_HEADER = ["k", "h", "error", "order", "J", "stderr"]


class StudyError(RuntimeError):
    def __init__(self, message: str, partial: list):
        super().__init__(message)
        self.partial = partial


def worker_count() -> int:
    cap = os.environ.get("SBBM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return n


def _paths(cfg: StudyConfig, sample_ids, k: float, coupled: bool = True) -> np.ndarray:
    seed = cfg.seed if coupled else (cfg.seed + _UNCOUPLED_SEED_OFFSET) % 2**64
    return increment_matrix(seed, sample_ids, cfg.T, cfg.k0, k)


def sup_sq_difference(coarse: SchemeConfig, fine: SchemeConfig, dW_c, dW_f, evaluate) -> np.ndarray:
    """``max_n ||u_fine^n - evaluate(u_coarse^n)||_H1^2`` per sample over coarse steps.

    ``fine.k`` must divide ``coarse.k``; norms use the fine mesh matrices.
    """
    ratio = int(round(coarse.k / fine.k))
    oc, of = coarse.operators(), fine.operators()
    fine_steps = march(of, fine, dW_f)
    sup = np.zeros(np.atleast_2d(dW_c).shape[0])
    for rec_c in march(oc, coarse, dW_c):
        for _ in range(ratio):
            rec_f = next(fine_steps)
        diff = evaluate(oc, of, rec_c.U) - rec_f.U
        sup = np.maximum(sup, of.h1_sq_columns(diff))
    return sup


def prolongation_evaluator():
    cache = {}

    def evaluate(oc: FemOperators, of: FemOperators, U):
        key = (id(oc.mesh), id(of.mesh))
        if key not in cache:
            cache[key] = build_prolongation(oc.mesh, of.mesh)
        return of.restrict(prolong(cache[key], oc.expand(U)))

    return evaluate


def _sup_sq_errors(level: int, cfg: StudyConfig, sample_ids, evaluate=None) -> np.ndarray:
    """Per-sample squared sup-errors between level ``level`` and its reference."""
    coarse = cfg.scheme(level)
    k_ref = coarse.k if cfg.ref_rule == SAME_K else coarse.k / 4.0
    fine = cfg.scheme(level + 1, k=k_ref)
    dW_c = _paths(cfg, sample_ids, coarse.k)
    dW_f = _paths(cfg, sample_ids, k_ref, coupled=cfg.coupled)
    return sup_sq_difference(coarse, fine, dW_c, dW_f, evaluate or prolongation_evaluator())


def _chunks(J: int):
    return [list(range(s, min(J, s + CHUNK))) for s in range(0, J, CHUNK)]


def level_errors(level: int, cfg: StudyConfig) -> np.ndarray:
    """Per-sample squared sup-errors for one level, ordered by sample id."""
    chunks = _chunks(cfg.J)
    nw = min(worker_count(), len(chunks))
    if nw <= 1:
        parts = [_sup_sq_errors(level, cfg, ids) for ids in chunks]
    else:
        with ProcessPoolExecutor(nw) as pool:
            parts = list(pool.map(_sup_sq_errors, [level] * len(chunks), [cfg] * len(chunks), chunks))
    return np.concatenate(parts)


def sample_error(level: int, cfg: StudyConfig, sample_id: int, evaluate=None) -> float:
    """``max_n ||u_{h/2}^n - u_h^n||_H1`` on the path of ``sample_id``.

    ``evaluate(coarse_ops, fine_ops, U)`` maps coarse states to fine dofs;
    defaults to exact prolongation.
    """
    return math.sqrt(_sup_sq_errors(level, cfg, [sample_id], evaluate)[0])


def _order(prev: float, cur: float) -> float | None:
    if prev > 0 and cur > 0:
        return math.log2(prev / cur)
    return None


def summarize(level: int, cfg: StudyConfig, sq: np.ndarray, prev: ConvergenceRow | None) -> ConvergenceRow:
    J = sq.size
    mean_sq = float(np.mean(sq))
    error = math.sqrt(mean_sq)
    se_sq = float(np.std(sq, ddof=1)) / math.sqrt(J)
    stderr = se_sq / (2.0 * error) if error > 0 else 0.0
    order = _order(prev.error, error) if prev is not None else None
    return ConvergenceRow(level, cfg.time_step(level), 2.0 ** -level, error, order, J, stderr)


def run_study(cfg: StudyConfig, progress=None) -> list:
    rows: list = []
    for level in cfg.levels:
        try:
            sq = level_errors(level, cfg)
        except Exception as exc:  # abort with what we have
            raise StudyError(f"level {level}: {exc}", rows) from exc
        row = summarize(level, cfg, sq, rows[-1] if rows else None)
        rows.append(row)
        log.info("level %d: error %.6g order %s", level, row.error, row.order)
        if progress is not None:
            progress(row)
    return rows


def write_csv(path, rows, failed: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())
        if failed:
            fh.write(f"# FAILED: {failed}\n")


def plot_data(rows) -> list:
    """``(level, log2 error)`` pairs."""
    return [(r.level, math.log2(r.error) if r.error > 0 else float("-inf")) for r in rows]


# --- statistical stability checks ---------------------------------------------------


def _ensemble(cfg: StudyConfig, level: int, k: float | None = None):
    """Run J trajectories; returns (ops, h1_sq (M, J), pairings (M, J))."""
    sc = cfg.scheme(level, k)
    ops = sc.operators()
    h1, pair = [], []
    for ids in _chunks(cfg.J):
        dW = _paths(cfg, ids, sc.k)
        hs, ps = [], []
        for rec in march(ops, sc, dW):
            hs.append(ops.h1_sq_columns(rec.U))
            ps.append(rec.pairing)
        h1.append(np.array(hs))
        pair.append(np.array(ps))
    return ops, sc, np.concatenate(h1, axis=1), np.concatenate(pair, axis=1)


@dataclass
class MomentReport:
    level: int
    exponents: list
    estimates: dict  # exponent -> (mean, stderr) at `level`
    refined: dict  # same at level + 1
    ratios: dict
    flagged: bool  # some estimate grew by more than 50% under refinement
    exp_moment: float | None = None  # sup_n E[exp(gamma ||u^n||^2)]
    exp_bound: float | None = None
    gamma: float | None = None
    admissible: bool | None = None


def _moments(h1_sq: np.ndarray, exponents) -> dict:
    sup = np.max(h1_sq, axis=0)
    out = {}
    for e in exponents:
        x = sup ** (e / 2.0)
        out[e] = (float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size)))
    return out


def exp_moment_bound(gamma: float, L0: float, k: float, h1_sq0: float = 0.0, l2_sq0: float = 0.0) -> float:
    """Upper bound on ``sup_n E exp(gamma ||u^n||_H1^2)`` for a deterministic start."""
    return math.exp(0.5 * (4 * gamma * h1_sq0 + 16 * gamma**2 * L0**2 * k * l2_sq0 + 8 * L0**2 * gamma))


def moment_statistics(cfg: StudyConfig, level: int, powers=(1,), gamma: float | None = None) -> MomentReport:
    """Estimates of ``E[sup_n ||u_h^n||_H1^(2^p)]`` at ``level`` and ``level + 1``.

    With bounded noise and ``gamma`` given, also the exponential moment
    ``sup_n E[exp(gamma ||u_h^n||_H1^2)]`` together with its a priori bound.
    """
    if not set(powers) <= {1, 2, 3}:
        raise ValueError("powers must be drawn from {1, 2, 3}")
    exponents = [2 ** p for p in powers]
    ops, sc, h1, _ = _ensemble(cfg, level)
    est = _moments(h1, exponents)
    _, _, h1f, _ = _ensemble(cfg, level + 1)
    ref = _moments(h1f, exponents)
    ratios = {e: (ref[e][0] / est[e][0] if est[e][0] > 0 else 1.0) for e in exponents}
    flagged = any(r > 1.5 for r in ratios.values())
    report = MomentReport(level, exponents, est, ref, ratios, flagged)

    if gamma is not None:
        L0 = cfg.noise.L0
        if L0 is None:
            raise ValueError("exponential moments need a bounded noise coefficient")
        report.gamma = gamma
        report.exp_moment = float(np.max(np.mean(np.exp(gamma * h1), axis=1)))
        report.admissible = L0 == 0 or (gamma <= cfg.nu / (4 * L0**2) and sc.k <= 1 / (32 * L0**2 * gamma))
        if not report.admissible:
            warnings.warn(
                f"k={sc.k} exceeds 1/(32 L0^2 gamma) or gamma exceeds nu/(4 L0^2); "
                "the exponential-moment bound does not apply",
                RuntimeWarning,
                stacklevel=2,
            )
        from .scheme import initial_state

        u0 = initial_state(ops, cfg.u0)
        l2, hs = float(u0 @ (ops.M @ u0)), float(u0 @ (ops.H @ u0))
        report.exp_bound = exp_moment_bound(gamma, L0, sc.k, hs, l2)
    return report


@dataclass
class MartingaleReport:
    level: int
    J: int
    mean: float
    stderr: float
    z: float


def martingale_test(cfg: StudyConfig, level: int, pairing=None) -> MartingaleReport:
    """z-score of the summed noise pairings ``(G(u^n) dW_n, u^n)``.

    The per-sample sums are i.i.d. across samples with mean zero, so
    ``z = mean / (std / sqrt(J))``. ``pairing`` may supply an alternative
    ``(ops, cfg, J) -> (M, J)`` array (used to check the test's power).
    """
    if cfg.J < 100:
        raise ValueError("martingale test needs J >= 100")
    if pairing is None:
        _, _, _, pairs = _ensemble(cfg, level)
    else:
        pairs = pairing(cfg, level)
    totals = pairs.sum(axis=0)
    mean = float(np.mean(totals))
    sd = float(np.std(totals, ddof=1))
    if sd == 0.0:
        return MartingaleReport(level, cfg.J, mean, 0.0, 0.0)
    stderr = sd / math.sqrt(totals.size)
    return MartingaleReport(level, cfg.J, mean, stderr, mean / stderr)


def lagged_pairings(cfg: StudyConfig, level: int) -> np.ndarray:
    """Corrupted pairings ``(G(u^{n+1}) dW_n, u^{n+1})``, i.e. G taken after the step."""
    sc = cfg.scheme(level)
    ops = sc.operators()
    out = []
    for ids in _chunks(cfg.J):
        dW = _paths(cfg, ids, sc.k)
        ps = []
        for n, rec in enumerate(march(ops, sc, dW)):
            load = ops.noise_load(cfg.noise(ops.expand(rec.U)))
            ps.append(dW[:, n] * np.einsum("ij,ij->j", load, rec.U))
        out.append(np.array(ps))
    return np.concatenate(out, axis=1)


def profile(name: str, **overrides) -> StudyConfig:
    """Named study setups: ``table1``/``table2`` (full) and ``ci-table1``/``ci-table2``."""
    base, _, which = name.rpartition("-")
    noise = {"table1": NoiseCoefficient.linear(0.25), "table2": NoiseCoefficient.sin_shift(0.1)}.get(which)
    if noise is None or base not in ("", "ci"):
        raise ValueError(f"unknown profile {name!r}")
    levels, J = ([1, 2, 3, 4], 100) if base == "ci" else ([1, 2, 3, 4, 5], 400)
    cfg = StudyConfig(levels=levels, J=J, noise=noise)
    return replace(cfg, **overrides) if overrides else cfg
