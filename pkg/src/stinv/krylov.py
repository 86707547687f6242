"""Restarted GMRES and flexible GMRES with right preconditioning.

Both use modified Gram-Schmidt with one reorthogonalization pass when the
orthogonality loss is large, Givens rotations for the least-squares update,
and report the true-residual convergence history.  A dense LU solve is
provided as an oracle for small systems.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp


@dataclass(frozen=True)
class KrylovConfig:
    restart: int = 50
    rtol: float = 1e-6
    max_iters: int = 10000
    flexible: bool = False

    def __post_init__(self):
        if self.restart < 1:
            raise ValueError("restart must be >= 1")
        if not 0.0 < self.rtol < 1.0:
            raise ValueError("rtol must lie in (0, 1)")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residuals: list[float] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual", "wall_time"])
            for i, (r, t) in enumerate(zip(self.residuals, self.wall_times)):
                w.writerow([i, f"{r:.6e}", f"{t:.6f}"])


def _as_operator(op):
    if callable(op):
        return op
    return lambda x: op @ x


def _gmres_core(apply_A, apply_M, b, cfg: KrylovConfig, x0, flexible: bool):
    apply_A = _as_operator(apply_A)
    if apply_M is None:
        apply_M = lambda x: x
    else:
        apply_M = _as_operator(apply_M)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else x0.astype(float).copy()
    bnorm = np.linalg.norm(b)
    t0 = time.perf_counter()
    report = SolveReport(converged=False, iterations=0)
    if bnorm == 0.0:
        report.converged = True
        report.residuals.append(0.0)
        report.wall_times.append(0.0)
        return x, report
    tol = cfg.rtol * bnorm
    m = cfg.restart
    total = 0
    while total < cfg.max_iters:
        r = b - apply_A(x)
        beta = np.linalg.norm(r)
        if total == 0:
            report.residuals.append(beta)
            report.wall_times.append(time.perf_counter() - t0)
        if beta <= tol:
            report.converged = True
            break
        V = np.empty((m + 1, n))
        Z = np.empty((m, n)) if flexible else None
        Hcol = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            z = apply_M(V[j])
            if flexible:
                Z[j] = z
            # copy: the operator may return its input (e.g. the identity)
            # and w is modified in place during orthogonalization
            w = np.array(apply_A(z), dtype=float)
            wnorm0 = np.linalg.norm(w)
            for i in range(j + 1):
                Hcol[i, j] = V[i] @ w
                w -= Hcol[i, j] * V[i]
            # one reorthogonalization pass on severe cancellation
            if np.linalg.norm(w) < 1e-8 * wnorm0:
                for i in range(j + 1):
                    c = V[i] @ w
                    Hcol[i, j] += c
                    w -= c * V[i]
            hj1 = np.linalg.norm(w)
            Hcol[j + 1, j] = hj1
            for i in range(j):
                t = cs[i] * Hcol[i, j] + sn[i] * Hcol[i + 1, j]
                Hcol[i + 1, j] = -sn[i] * Hcol[i, j] + cs[i] * Hcol[i + 1, j]
                Hcol[i, j] = t
            denom = np.hypot(Hcol[j, j], Hcol[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j] = Hcol[j, j] / denom
                sn[j] = Hcol[j + 1, j] / denom
            Hcol[j, j] = denom
            Hcol[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            res = abs(g[j + 1])
            report.residuals.append(res)
            report.wall_times.append(time.perf_counter() - t0)
            if hj1 <= 1e-14 * max(1.0, wnorm0):  # happy breakdown
                break
            V[j + 1] = w / hj1
            if res <= tol or total >= cfg.max_iters:
                break
        # solve the small triangular system and update x
        if j_done > 0:
            y = scipy.linalg.solve_triangular(Hcol[:j_done, :j_done], g[:j_done])
            if flexible:
                x += Z[:j_done].T @ y
            else:
                x += apply_M(V[:j_done].T @ y)
        r = b - apply_A(x)
        if np.linalg.norm(r) <= tol:
            report.converged = True
            break
        if j_done == 0:
            break
    report.iterations = total
    return x, report


def gmres(apply_A, apply_M, b, cfg: KrylovConfig, x0=None):
    """Right-preconditioned restarted GMRES; the preconditioner must be a
    fixed operator."""
    return _gmres_core(apply_A, apply_M, b, cfg, x0, flexible=False)


def fgmres(apply_A, apply_M, b, cfg: KrylovConfig, x0=None):
    """Flexible GMRES; the preconditioner may change between iterations."""
    return _gmres_core(apply_A, apply_M, b, cfg, x0, flexible=True)


def dense_lu_solve(mat, b: np.ndarray) -> np.ndarray:
    """Partial-pivoting dense LU solve (oracle for small systems)."""
    if sp.issparse(mat):
        mat = mat.toarray()
    elif hasattr(mat, "to_dense"):
        mat = mat.to_dense()
    mat = np.asarray(mat, dtype=float)
    if mat.shape[0] > 10_000:
        raise ValueError("dense oracle limited to dimension 1e4")
    lu, piv = scipy.linalg.lu_factor(mat)
    return scipy.linalg.lu_solve((lu, piv), b)
