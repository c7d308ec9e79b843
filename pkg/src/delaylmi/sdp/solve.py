"""Feasibility solve with an independent eigenvalue recheck.

The conic program solved is

    maximize t   s.t.  C_i - delta_i I + A_i x - t I >= 0
                       ||x||_2 <= R,  t <= 1

with delta_i = 0 for non-strict constraints.  The program always has an
optimum; t* < 0 means no x in the ball satisfies the constraints.

For homogeneous problems (every C_i = 0) R = 1, which removes the trivial
scaling direction.  The solver's answer is never trusted directly: the
returned x is evaluated constraint by constraint and the status follows from
the smallest eigenvalues.

On barely feasible problems the interior point iterates reach the t <= 1 cap
early and then stall short of the solver's own stopping test.  ``solve`` thus
first runs ``first_iters`` iterations and only spends the full ``max_iters``
budget when that attempt neither converged nor passed the recheck.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .problem import SdpProblem, unpack

log = logging.getLogger(__name__)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
INCONCLUSIVE = "inconclusive"


@dataclass
class SolverConfig:
    backend: str = "cvxopt"
    abstol: float = 1e-9
    reltol: float = 1e-9
    feastol: float = 1e-9
    max_iters: int = 200
    first_iters: int = 50         # short first attempt; see solve()
    radius: float = 1e4          # used when the problem has constant terms
    rel_positive: float = 1e-11  # strict margins must exceed this times ||M||_F
    equilibrate: bool = True
    kktsolver: str = "chol"       # cvxopt's default for SDPs is the slower "qr"

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FeasibilityResult:
    status: str
    x: np.ndarray | None
    assignment: dict[str, np.ndarray]
    margins: dict[str, float]
    required: dict[str, float]
    tolerances: dict[str, float]
    diagnostics: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    @property
    def min_margin(self) -> float:
        return min(self.margins.values()) if self.margins else float("nan")

    def worst(self) -> tuple[str, float]:
        name = min(self.margins, key=self.margins.get)
        return name, self.margins[name]


def recheck(sdp: SdpProblem, x: np.ndarray, rel_positive: float = 1e-11):
    """Smallest eigenvalue of every constraint at x, and whether all pass."""
    margins, ok = {}, True
    for c in sdp.constraints:
        M = c.value(x)
        lam = float(np.linalg.eigvalsh(M)[0])
        margins[c.name] = lam
        tol = c.tolerance()
        if c.strict:
            ok &= lam >= c.margin - tol and lam > rel_positive * np.linalg.norm(M)
        else:
            ok &= lam >= -tol
    return margins, bool(ok)


def _scale_up(sdp: SdpProblem, x: np.ndarray) -> np.ndarray:
    """For homogeneous problems, scale x so each strict margin reaches delta."""
    factor = 1.0
    for c in sdp.constraints:
        if not c.strict:
            continue
        lam = float(np.linalg.eigvalsh(c.value(x))[0])
        if lam <= 0:
            return x
        factor = max(factor, 2.0 * c.margin / lam)
    return x * factor


def equilibrate(sdp: SdpProblem, passes: int = 3):
    """Positive row (per constraint) and column (per scalar) scalings.

    Scaling a constraint by a positive number keeps its feasible set, and
    x = col * y is a change of variables, so the conic program in y is
    equivalent but better balanced.
    """
    n = sdp.n_scalars
    row = np.ones(len(sdp.constraints))
    col = np.ones(n)
    mats = [c.coeffs.tocsc() for c in sdp.constraints]
    for _ in range(passes):
        for i, (c, A) in enumerate(zip(sdp.constraints, mats)):
            a = abs(A @ sp.diags(col)).max() if A.nnz else 0.0
            b = np.abs(c.shifted_constant()).max() if c.dim else 0.0
            big = max(a, b)
            row[i] = 1.0 / big if big > 0 else 1.0
        sq = np.zeros(n)
        for r, A in zip(row, mats):
            sq += np.asarray(A.multiply(A).sum(axis=0)).ravel() * r * r
        col = np.where(sq > 0, 1.0 / np.sqrt(np.maximum(sq, 1e-300)), 1.0)
    return row, col


def _cvxopt_data(sdp: SdpProblem, radius: float, row=None, col=None):
    """c, G, h, dims for cvxopt.conelp over z = [y; t] with x = col * y."""
    from cvxopt import matrix, spmatrix

    n = sdp.n_scalars
    row = np.ones(len(sdp.constraints)) if row is None else row
    col = np.ones(n) if col is None else col
    rows, cols, vals, h = [], [], [], []
    # t <= 1
    rows.append(np.array([0])); cols.append(np.array([n])); vals.append(np.array([1.0]))
    h.append(np.array([1.0]))
    # (R, x) in the second-order cone: s = h - G z = [R; x]
    rows.append(np.arange(1, n + 1)); cols.append(np.arange(n)); vals.append(-np.ones(n))
    h.append(np.concatenate([[radius], np.zeros(n)]))
    offset = n + 2
    for k, c in enumerate(sdp.constraints):
        m = c.dim
        iu, ju = np.triu_indices(m)
        lower = iu * m + ju      # (ju, iu) in column-major storage, ju >= iu
        A = c.coeffs.tocoo()
        rows.append(offset + lower[A.row]); cols.append(A.col)
        vals.append(-A.data * row[k] * col[A.col])
        diag = np.arange(m) * (m + 1)
        rows.append(offset + diag); cols.append(np.full(m, n)); vals.append(np.ones(m))
        hv = np.zeros(m * m)
        hv[lower] = c.shifted_constant() * row[k]
        h.append(hv)
        offset += m * m
    r = np.concatenate(rows).astype(int)
    cc = np.concatenate(cols).astype(int)
    v = np.concatenate(vals).astype(float)
    G = spmatrix(v.tolist(), r.tolist(), cc.tolist(), (offset, n + 1))
    hh = matrix(np.concatenate(h))
    cvec = np.zeros(n + 1)
    cvec[n] = -1.0
    dims = {"l": 1, "q": [n + 1], "s": [c.dim for c in sdp.constraints]}
    return matrix(cvec), G, hh, dims


def _solve_cvxopt(sdp: SdpProblem, cfg: SolverConfig, radius: float):
    from cvxopt import solvers

    row, col = equilibrate(sdp) if cfg.equilibrate else (None, None)
    c, G, h, dims = _cvxopt_data(sdp, radius, row, col)
    opts = {"show_progress": False, "abstol": cfg.abstol, "reltol": cfg.reltol,
            "feastol": cfg.feastol, "maxiters": cfg.max_iters}
    sol = solvers.conelp(c, G, h, dims, kktsolver=cfg.kktsolver, options=opts)
    z = np.array(sol["x"]).reshape(-1) if sol["x"] is not None else None
    if z is not None and col is not None:
        z[:-1] *= col
    diag = {
        "solver_status": sol["status"],
        "iterations": int(sol.get("iterations", -1)),
        "primal_infeasibility": sol.get("primal infeasibility"),
        "dual_infeasibility": sol.get("dual infeasibility"),
        "gap": sol.get("gap"),
    }
    return z, diag


def _solve_clarabel(sdp: SdpProblem, cfg: SolverConfig, radius: float):
    from .external import clarabel_solve

    return clarabel_solve(sdp, radius=radius, tol=cfg.feastol, max_iter=cfg.max_iters)


BACKENDS = {"cvxopt": _solve_cvxopt, "clarabel": _solve_clarabel}


def _attempt(sdp: SdpProblem, cfg: SolverConfig, radius: float):
    try:
        return BACKENDS[cfg.backend](sdp, cfg, radius)
    except (ValueError, ArithmeticError) as exc:
        log.warning("solver failed: %s", exc)
        return None, {"solver_status": "error", "error": str(exc)}


def solve(sdp: SdpProblem, config: SolverConfig | None = None) -> FeasibilityResult:
    cfg = config or SolverConfig()
    if cfg.backend not in BACKENDS:
        raise ValueError(f"unknown backend {cfg.backend!r}")
    homogeneous = sdp.homogeneous
    radius = 1.0 if homogeneous else cfg.radius
    required = {c.name: (c.margin if c.strict else 0.0) for c in sdp.constraints}
    tols = {c.name: c.tolerance() for c in sdp.constraints}
    t0 = time.perf_counter()
    budgets = [cfg.max_iters]
    if 0 < cfg.first_iters < cfg.max_iters:
        budgets.insert(0, cfg.first_iters)
    for budget in budgets:
        z, diag = _attempt(sdp, replace(cfg, max_iters=budget), radius)
        diag["attempts"] = budgets.index(budget) + 1
        if z is None or not np.all(np.isfinite(z)):
            status, x, margins = INCONCLUSIVE, None, {}
            continue
        x, t = z[:-1], float(z[-1])
        diag["t"] = t
        if homogeneous:
            x = _scale_up(sdp, x)
        margins, ok = recheck(sdp, x, cfg.rel_positive)
        if ok:
            status = FEASIBLE
        elif diag["solver_status"] == "optimal" and t < cfg.feastol:
            status = INFEASIBLE
        else:
            status = INCONCLUSIVE
        if status != INCONCLUSIVE or diag["solver_status"] == "optimal":
            break
    diag["solve_seconds"] = time.perf_counter() - t0
    diag["backend"] = cfg.backend
    diag["radius"] = radius
    log.info("%s: %s (t=%.3g, %d it, %.1fs)", sdp.kind, status, diag.get("t", np.nan),
             diag.get("iterations", -1), diag["solve_seconds"])
    assignment = sdp.assignment(x) if x is not None else {}
    return FeasibilityResult(status, x, assignment, margins, required, tols, diag)
