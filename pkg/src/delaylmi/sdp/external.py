"""Second, independent solver path through Clarabel.

``solve_sdpa_text`` reads an SDPA file, solves it with Clarabel and returns
the primal vector; it shares no code with the native backend beyond the SDPA
parser.  ``clarabel_solve`` runs the same margin-maximizing program as the
native backend and is mainly useful on small instances.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .problem import SdpProblem

_SQRT2 = np.sqrt(2.0)


def _svec_map(dim: int):
    """Row-major packed upper index -> Clarabel column-major triangle index and scale."""
    iu, ju = np.triu_indices(dim)
    # column-major upper triangle: entry (i, j), i <= j, sits at j(j+1)/2 + i
    target = ju * (ju + 1) // 2 + iu
    scale = np.where(iu == ju, 1.0, _SQRT2)
    return target, scale


def _psd_rows(sdp: SdpProblem, offset: int, n_cols: int, t_col: int | None):
    """Rows of A and b for ``s = b - A z`` with s = svec(C - delta I + A x - t I)."""
    blocks_A, blocks_b, cones = [], [], []
    for c in sdp.constraints:
        target, scale = _svec_map(c.dim)
        A = c.coeffs.tocoo()
        rows = target[A.row]
        vals = -A.data * scale[A.row]
        cols = A.col
        if t_col is not None:
            iu, ju = np.triu_indices(c.dim)
            diag = np.nonzero(iu == ju)[0]
            rows = np.concatenate([rows, target[diag]])
            cols = np.concatenate([cols, np.full(diag.size, t_col)])
            vals = np.concatenate([vals, np.ones(diag.size)])
        size = c.dim * (c.dim + 1) // 2
        blocks_A.append(sp.csc_matrix((vals, (rows, cols)), shape=(size, n_cols)))
        b = np.zeros(size)
        b[target] = c.shifted_constant() * scale
        blocks_b.append(b)
        cones.append(c.dim)
    return blocks_A, blocks_b, cones


def _settings(tol: float, max_iter: int):
    import clarabel

    s = clarabel.DefaultSettings()
    s.verbose = False
    s.tol_feas = tol
    s.tol_gap_abs = tol
    s.tol_gap_rel = tol
    s.max_iter = max_iter
    return s


def clarabel_solve(sdp: SdpProblem, radius: float = 1.0, tol: float = 1e-9, max_iter: int = 200):
    """maximize t s.t. constraints shifted by t, ||x|| <= radius, t <= 1."""
    import clarabel

    n = sdp.n_scalars
    nz = n + 1
    A_parts, b_parts = [], []
    # t <= 1
    A_parts.append(sp.csc_matrix(([1.0], ([0], [n])), shape=(1, nz)))
    b_parts.append(np.array([1.0]))
    # (radius, x) in SOC
    A_parts.append(sp.csc_matrix((-np.ones(n), (np.arange(1, n + 1), np.arange(n))), shape=(n + 1, nz)))
    b_parts.append(np.concatenate([[radius], np.zeros(n)]))
    pa, pb, dims = _psd_rows(sdp, 0, nz, n)
    A = sp.vstack(A_parts + pa).tocsc()
    b = np.concatenate(b_parts + pb)
    q = np.zeros(nz)
    q[n] = -1.0
    cones = [clarabel.NonnegativeConeT(1), clarabel.SecondOrderConeT(n + 1)]
    cones += [clarabel.PSDTriangleConeT(d) for d in dims]
    P = sp.csc_matrix((nz, nz))
    solver = clarabel.DefaultSolver(P, q, A, b, cones, _settings(tol, max_iter))
    sol = solver.solve()
    z = np.asarray(sol.x, dtype=float)
    diag = {"solver_status": str(sol.status), "iterations": int(sol.iterations),
            "primal_infeasibility": float(sol.r_prim), "dual_infeasibility": float(sol.r_dual)}
    if "Solved" in diag["solver_status"]:
        diag["solver_status"] = "optimal"
    return z, diag


def solve_sdpa_problem(sdp: SdpProblem, tol: float = 1e-9, max_iter: int = 200):
    """Solve the SDPA primal as written: minimize c^T x s.t. sum F_i x_i - F_0 >= 0."""
    import clarabel

    n = sdp.n_scalars
    pa, pb, dims = _psd_rows(sdp, 0, n, None)
    A = sp.vstack(pa).tocsc() if pa else sp.csc_matrix((0, n))
    b = np.concatenate(pb) if pb else np.zeros(0)
    q = sdp.objective if sdp.objective is not None else np.zeros(n)
    cones = [clarabel.PSDTriangleConeT(d) for d in dims]
    solver = clarabel.DefaultSolver(sp.csc_matrix((n, n)), np.asarray(q, dtype=float), A, b,
                                    cones, _settings(tol, max_iter))
    sol = solver.solve()
    return np.asarray(sol.x, dtype=float), str(sol.status)


def solve_sdpa_text(text: str, tol: float = 1e-9, max_iter: int = 200):
    from .sdpa import import_sdpa

    return solve_sdpa_problem(import_sdpa(text), tol, max_iter)
