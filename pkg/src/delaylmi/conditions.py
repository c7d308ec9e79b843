"""LMI feasibility problems: bounded-delay analysis, switched analysis, co-design.

Every problem is a list of symmetric affine constraints in named variable
blocks.  Constraints of kind ``"condition"`` are the stability conditions
proper; kind ``"domain"`` holds the positivity of the LKF matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .lmi import (FULL, SYMMETRIC, AffineMatrixExpr, LinExpr, VariableBlock, as_expr,
                  bmat, block_diag, congruence, he, kron_block, sym)
from .model import (BoundedDelaySubsystem, ControllerGains, DelaySystem, ModelError,
                    PlantModel, build_closed_loop, split_switched)
from .selectors import (SelectorSet, build_appendix_a, build_appendix_b, finsler_history,
                        finsler_history_perp, gamma, history_patterns)

NEG = "neg"   # expression must be negative definite
POS = "pos"   # expression must be positive definite


@dataclass
class Constraint:
    name: str
    expr: AffineMatrixExpr
    sense: str
    strict: bool = True
    kind: str = "condition"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.sense not in (NEG, POS):
            raise ValueError(f"unknown sense {self.sense!r}")

    @property
    def dim(self) -> int:
        return self.expr.dim

    def normalized(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        """Value with the sign flipped so that feasibility means positive definite."""
        M = self.expr.evaluate(values)
        return -M if self.sense == NEG else M

    def margin(self, values: Mapping[str, np.ndarray]) -> float:
        return float(np.linalg.eigvalsh(self.normalized(values))[0])


@dataclass
class LmiProblem:
    kind: str
    variables: list[VariableBlock]
    constraints: list[Constraint]
    meta: dict = field(default_factory=dict)

    def variable(self, name: str) -> VariableBlock:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(name)

    @property
    def conditions(self) -> list[Constraint]:
        return [c for c in self.constraints if c.kind == "condition"]

    @property
    def domain(self) -> list[Constraint]:
        return [c for c in self.constraints if c.kind == "domain"]

    @property
    def n_scalars(self) -> int:
        return sum(v.n_scalars for v in self.variables)

    def block_sizes(self) -> list[int]:
        return [c.dim for c in self.constraints]

    def margins(self, values: Mapping[str, np.ndarray]) -> dict[str, float]:
        return {c.name: c.margin(values) for c in self.constraints}


AnalysisProblem = LmiProblem


@dataclass
class DesignProblem(LmiProblem):
    plant: PlantModel | None = None
    epsilon: float = 0.0


# ---------------------------------------------------------------- LKF blocks

def _sym_block(name: str, n: int) -> VariableBlock:
    return VariableBlock(name, SYMMETRIC, n, n, positive=True)


def _mode_blocks(sel: SelectorSet, n: int, suffix: str, prefix: str = "") -> dict[str, VariableBlock]:
    """LKF blocks of one mode."""
    b = {
        "P": _sym_block(f"{prefix}P{suffix}", sel.W5.shape[0]),
        "Q1": _sym_block(f"{prefix}Q1{suffix}", n),
        "Q2": _sym_block(f"{prefix}Q2{suffix}", n),
        "Z1": _sym_block(f"{prefix}Z1{suffix}", n),
        "Z2": _sym_block(f"{prefix}Z2{suffix}", n),
    }
    b["X"] = VariableBlock(f"{prefix}X{suffix}", FULL, 2 * n, 2 * n)
    return b


def psi_matrix(blocks: Mapping[str, VariableBlock]) -> AffineMatrixExpr:
    """[[diag(Z2, 3 Z2), X], [X^T, diag(Z2, 3 Z2)]]."""
    Z2 = as_expr(blocks["Z2"])
    n = Z2.shape[0]
    Z = bmat([[Z2, None], [None, 3.0 * Z2]])
    X = as_expr(blocks["X"])
    return sym(bmat([[Z, X], [X.T, Z]]))


def _place(sel: SelectorSet, index: int, Q: LinExpr) -> AffineMatrixExpr:
    E = sel.E(index)
    return sym(E.T @ Q @ E)


def phi_matrix(sel: SelectorSet, blocks: Mapping[str, VariableBlock], d) -> AffineMatrixExpr:
    """Upper bound of the forward difference of the LKF, as a form in xi.

    For a trajectory with delay d(k) = d, Delta V <= xi^T Phi(d) xi.
    """
    P = sym(as_expr(blocks["P"]))
    Wd = sel.W(d)
    out = (congruence(sel.W2, P) - congruence(sel.W1, P)
           + he(Wd.T @ as_expr(blocks["P"]) @ (sel.W2 - sel.W1)))

    Q1, Q2 = as_expr(blocks["Q1"]), as_expr(blocks["Q2"])
    out = out + _place(sel, 1, Q1) + _place(sel, 2, Q2 - Q1)
    if sel.extended:
        Q3 = as_expr(blocks["Q3"])
        out = out + _place(sel, 4, Q3 - Q2) - _place(sel, 8, Q3)
    else:
        out = out - _place(sel, 4, Q2)

    Z1, Z2 = as_expr(blocks["Z1"]), as_expr(blocks["Z2"])
    lo, dd = sel.lo, sel.d_delta
    R = (lo * lo) * Z1 + (dd * dd) * Z2
    if sel.extended:
        D = sel.d_delta_top
        R = R + (D * D) * as_expr(blocks["Z3"])
    out = out + congruence(sel.W3, sym(R))
    g = float(gamma(lo))
    out = out - congruence(sel.W_s, sym(bmat([[Z1, None], [None, (3.0 * g) * Z1]])))
    # With d_delta = 0 the Jensen arguments vanish on every trajectory, so the
    # term is exact for any Psi; it still pins the redundant xi coordinates.
    out = out - congruence(sel.W_psi, psi_matrix(blocks))
    if sel.extended:
        Z3 = as_expr(blocks["Z3"])
        out = out - congruence(sel.W_z, sym(bmat([[Z3, None], [None, 3.0 * Z3]])))
    return out


def history_matrix(sel: SelectorSet, blocks: Mapping[str, VariableBlock]) -> AffineMatrixExpr:
    """Matrix S with V(x_bar) = x_bar^T S x_bar (quadratic form of the LKF)."""
    P = as_expr(blocks["P"])
    out = sym(sel.W5.T @ P @ sel.W5)
    for key, C in history_patterns(sel).items():
        if np.any(C):
            out = out + sym(kron_block(C, blocks[key]))
    return out


def _domain(blocks: Mapping[str, VariableBlock], tag: str) -> list[Constraint]:
    out = []
    for key, b in blocks.items():
        if b.positive:
            out.append(Constraint(f"{b.name}>0", AffineMatrixExpr.from_block(b), POS,
                                  kind="domain", meta={"block": b.name, "mode": tag}))
    return out


# ---------------------------------------------------------------- analysis

def lemma2_problem(sub: BoundedDelaySubsystem) -> LmiProblem:
    """Stability of a bounded-delay system with d(k) in [d_m, d_M].

    Three conditions: Psi > 0 and the projected Phi(d) < 0 at both delay
    vertices (Phi is affine in d).  Psi is dropped when d_m == d_M.
    """
    n = sub.n
    sel = build_appendix_a(n, sub.d_m, sub.d_M)
    blocks = _mode_blocks(sel, n, "")
    G = sel.gamma_perp(sub.A, sub.A_m, sub.A_d, sub.A_M)
    cons = []
    if sel.d_delta >= 1:
        cons.append(Constraint("psi", psi_matrix(blocks), POS))
    for tag, d in (("lo", sub.d_m), ("hi", sub.d_M)):
        cons.append(Constraint(f"phi[d={d}]", congruence(G, phi_matrix(sel, blocks, d)), NEG,
                               meta={"d": d, "vertex": tag}))
    cons += _domain(blocks, "")
    return LmiProblem("bounded", list(blocks.values()), cons,
                      meta={"d_m": sub.d_m, "d_M": sub.d_M, "n": n})


def _switched_blocks(n: int, d_m: int, d_n: int, d_M: int, prefix: str = ""):
    sels = {j: build_appendix_b(n, d_m, d_n, d_M, j) for j in (1, 2)}
    blocks = {j: _mode_blocks(sels[j], n, f"_{j}", prefix) for j in (1, 2)}
    shared = {}
    if d_M > d_n:
        shared = {"Q3": _sym_block(f"{prefix}Q3", n), "Z3": _sym_block(f"{prefix}Z3", n)}
        for j in (1, 2):
            blocks[j].update(shared)
    return sels, blocks, shared


def _all_blocks(blocks, shared) -> list[VariableBlock]:
    out = []
    for j in (1, 2):
        out += [b for k, b in blocks[j].items() if k not in shared]
    return out + list(shared.values())


def cross_range(d_m: int, d_n: int, d_M: int, pair: tuple[int, int]) -> range:
    """Delays checked for the switch pair (from, to)."""
    return range(d_m, d_n + 1) if pair == (1, 2) else range(d_n, d_M + 1)


def theorem1_problem(sys: DelaySystem) -> LmiProblem:
    """Switched path-complete analysis of the system with nominal delay d_n.

    Per mode: Psi_j > 0 (when non-degenerate) and the projected Phi_j < 0 at
    both vertices.  Cross conditions compare S_1 and S_2 along the actual
    dynamics for every delay of the relevant range.
    """
    n, d_m, d_n, d_M = sys.n, sys.d_m, sys.d_n, sys.d_M
    modes = split_switched(sys)
    sels, blocks, shared = _switched_blocks(n, d_m, d_n, d_M)
    cons: list[Constraint] = []
    for j in (1, 2):
        sel, sub = sels[j], modes[j - 1]
        G = sel.gamma_perp(sub.A, sub.A_m, sub.A_d, sub.A_M)
        if sel.d_delta >= 1:
            cons.append(Constraint(f"psi_{j}", psi_matrix(blocks[j]), POS, meta={"mode": j}))
        for d in (sel.lo, sel.hi):
            cons.append(Constraint(f"phi_{j}[d={d}]",
                                   congruence(G, phi_matrix(sel, blocks[j], d)), NEG,
                                   meta={"mode": j, "d": d}))
    S = {j: history_matrix(sels[j], blocks[j]) for j in (1, 2)}
    for pair in ((1, 2), (2, 1)):
        for l in cross_range(d_m, d_n, d_M, pair):
            Lp = finsler_history_perp(n, d_n, d_M, sys.A, sys.A_n, sys.A_d, l)
            body = _next_minus_now(S[pair[0]], S[pair[1]], n)
            cons.append(Constraint(f"cross_{pair[0]}{pair[1]}[d={l}]", congruence(Lp, body),
                                   NEG, meta={"pair": pair, "d": l}))
    for j in (1, 2):
        cons += _domain({k: b for k, b in blocks[j].items() if k not in shared}, str(j))
    cons += _domain(shared, "shared")
    return LmiProblem("switched", _all_blocks(blocks, shared), cons,
                      meta={"d_m": d_m, "d_n": d_n, "d_M": d_M, "n": n})


def _next_minus_now(S_next: AffineMatrixExpr, S_now: AffineMatrixExpr, n: int) -> AffineMatrixExpr:
    """diag(S_next, 0_n) - diag(0_n, S_now) acting on [x(k+1); x_bar(k)].

    The last block of x_bar(k+1) drops out, so S_next is padded below.
    """
    zero = AffineMatrixExpr.zeros(n)
    return block_diag(S_next, zero) - block_diag(zero, S_now)


def expected_condition_count(d_m: int, d_n: int, d_M: int) -> int:
    """6 + (d_n - d_m + 1) + (d_M - d_n + 1), less the dropped degenerate Psi_j."""
    count = 6 + (d_n - d_m + 1) + (d_M - d_n + 1)
    count -= (d_n == d_m) + (d_M == d_n)
    return count


# ---------------------------------------------------------------- co-design

def _design_matrices(plant: PlantModel, blocks: Mapping[str, VariableBlock]):
    """Barred closed-loop matrices (A, A_d, A_n) and J = diag(U, U) as LinExpr."""
    A_p, B_p = plant.A_p, plant.B_p
    n_p = plant.n_p
    U, K, F, L = (as_expr(blocks[k]) for k in ("U", "Kbar", "Fbar", "Lbar"))
    Z = np.zeros((n_p, n_p))
    BK, BF = B_p @ K, B_p @ F
    A = bmat([[A_p @ U.T + BK, -BK], [Z, A_p @ U.T]])
    A_d = bmat([[BF, Z], [-L, Z]])
    A_n = bmat([[-BF, BF], [L, -L]])
    J = bmat([[U, Z], [Z, U]])
    return A, A_d, A_n, J


def _row(parts: list, n: int, n_blocks: int) -> LinExpr:
    """n x (n_blocks*n) row from (block index, LinExpr) pairs."""
    out = LinExpr.zeros(n, n_blocks * n)
    for idx, piece in parts:
        right = np.zeros((n, n_blocks * n))
        right[:, idx * n:(idx + 1) * n] = np.eye(n)
        out = out + as_expr(piece) @ right
    return out


def _multiplier(n: int, n_blocks: int, eps: float) -> np.ndarray:
    """[I, eps I, 0, ...]: the Finsler multiplier acts on the first two blocks."""
    I_ = np.zeros((n, n_blocks * n))
    I_[:, :n] = np.eye(n)
    I_[:, n:2 * n] = eps * np.eye(n)
    return I_


def corollary1_problem(plant: PlantModel, d_m: int, d_n: int, d_M: int,
                       epsilon: float = -0.5) -> DesignProblem:
    """Observer-based controller co-design as one LMI problem in barred variables.

    Gains are recovered as K = Kbar U^{-T}, F = Fbar U^{-T}, L = Lbar U^{-T}.
    ``epsilon`` is the Finsler scaling and must lie in (-1, 0].
    """
    if not -1.0 < epsilon <= 0.0:
        raise ModelError(f"epsilon must lie in (-1, 0], got {epsilon}")
    DelaySystem(np.eye(1), np.eye(1), np.eye(1), d_m, d_n, d_M)  # bound validation
    n_p, m = plant.n_p, plant.m
    n = 2 * n_p
    sels, blocks, shared = _switched_blocks(n, d_m, d_n, d_M, prefix="bar_")
    design = {
        "U": VariableBlock("U", FULL, n_p, n_p),
        "Kbar": VariableBlock("Kbar", FULL, m, n_p),
        "Fbar": VariableBlock("Fbar", FULL, m, n_p),
        "Lbar": VariableBlock("Lbar", FULL, n_p, n_p),
    }
    A, A_d, A_n, J = _design_matrices(plant, design)
    zero = np.zeros((n, n))
    cons: list[Constraint] = []
    for j in (1, 2):
        sel = sels[j]
        N = sel.n_blocks
        A_m, A_M = (zero, A_n) if j == 1 else (A_n, zero)
        Gbar = _row([(0, -J.T), (1, A), (2, A_m), (3, A_d), (4, A_M)], n, N)
        ups = he(_multiplier(n, N, epsilon).T @ Gbar)
        if sel.d_delta >= 1:
            cons.append(Constraint(f"psi_{j}", psi_matrix(blocks[j]), POS, meta={"mode": j}))
        for d in (sel.lo, sel.hi):
            cons.append(Constraint(f"phi_{j}[d={d}]", phi_matrix(sel, blocks[j], d) + ups, NEG,
                                   meta={"mode": j, "d": d}))
    S = {j: history_matrix(sels[j], blocks[j]) for j in (1, 2)}
    NB = d_M + 2
    for pair in ((1, 2), (2, 1)):
        for l in cross_range(d_m, d_n, d_M, pair):
            parts = [(0, -J.T), (1, A), (1 + d_n, A_n), (1 + l, A_d)]
            Lbar = _row(parts, n, NB)
            body = _next_minus_now(S[pair[0]], S[pair[1]], n) + he(_multiplier(n, NB, epsilon).T @ Lbar)
            cons.append(Constraint(f"cross_{pair[0]}{pair[1]}[d={l}]", body, NEG,
                                   meta={"pair": pair, "d": l}))
    for j in (1, 2):
        cons += _domain({k: b for k, b in blocks[j].items() if k not in shared}, str(j))
    cons += _domain(shared, "shared")
    variables = _all_blocks(blocks, shared) + list(design.values())
    return DesignProblem("design", variables, cons,
                         meta={"d_m": d_m, "d_n": d_n, "d_M": d_M, "n": n, "epsilon": epsilon},
                         plant=plant, epsilon=epsilon)


class GainRecoveryError(ValueError):
    pass


def recover_gains(values: Mapping[str, np.ndarray], max_cond: float = 1e12) -> ControllerGains:
    U = np.asarray(values["U"], dtype=float)
    c = np.linalg.cond(U)
    if not np.isfinite(c) or c > max_cond:
        raise GainRecoveryError(f"U is ill-conditioned (cond = {c:.3g})")
    UinvT = np.linalg.inv(U).T
    return ControllerGains(values["Kbar"] @ UinvT, values["Fbar"] @ UinvT, values["Lbar"] @ UinvT)


def design_closed_loop(problem: DesignProblem, values: Mapping[str, np.ndarray]) -> DelaySystem:
    gains = recover_gains(values)
    meta = problem.meta
    return build_closed_loop(problem.plant, gains, meta["d_m"], meta["d_n"], meta["d_M"])


def unbar_certificate(problem: DesignProblem, values: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Map a design certificate to LKF matrices of the recovered closed loop.

    Every barred block B is J B J^T-congruent to its analysis counterpart,
    so the analysis block is J^{-1} B J^{-T} (with J repeated along the diagonal).
    """
    U = np.asarray(values["U"], dtype=float)
    J = np.kron(np.eye(2), U)
    n = J.shape[0]
    out = {}
    for name, M in values.items():
        if not name.startswith("bar_"):
            continue
        M = np.asarray(M, dtype=float)
        k = M.shape[0] // n
        T = np.linalg.inv(np.kron(np.eye(k), J))
        out[name[len("bar_"):]] = T @ M @ T.T
    return out
