"""Simulation, two-way LKF evaluation and trajectory-level certificate checks.

The LKF is evaluated two ways: ``direct`` follows the defining sums term by
term, ``quadratic`` uses the assembled matrix S_j with V_j = x_bar^T S_j x_bar.
Both paths share only the certificate values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg as sl

from .model import (ControllerGains, DelaySystem, HistoryVector, ModelError, PlantModel, sigma)
from .selectors import build_appendix_b, history_patterns

# ------------------------------------------------------------ delay signals

CONSTANT = "constant"
RANDOM = "uniform-random"
TOGGLE = "extremal-toggle"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class DelaySignal:
    kind: str
    d_m: int
    d_M: int
    value: int | None = None          # constant
    seed: int | None = None           # uniform-random
    period: int | None = None         # extremal-toggle
    sequence: tuple[int, ...] = ()    # explicit

    def __post_init__(self):
        if self.kind not in (CONSTANT, RANDOM, TOGGLE, EXPLICIT):
            raise ModelError(f"unknown delay signal kind {self.kind!r}")
        if not 1 <= self.d_m <= self.d_M:
            raise ModelError("delay signal needs 1 <= d_m <= d_M")
        if self.kind == CONSTANT and not self.d_m <= (self.value or 0) <= self.d_M:
            raise ModelError(f"constant delay {self.value} outside [{self.d_m}, {self.d_M}]")
        if self.kind == TOGGLE and (self.period is None or self.period < 1):
            raise ModelError("extremal-toggle needs period >= 1")
        if self.kind == EXPLICIT:
            seq = tuple(int(v) for v in self.sequence)
            if not seq or any(not self.d_m <= v <= self.d_M for v in seq):
                raise ModelError("explicit delay sequence empty or out of bounds")
            object.__setattr__(self, "sequence", seq)

    @classmethod
    def constant(cls, d: int, d_m: int, d_M: int):
        return cls(CONSTANT, d_m, d_M, value=d)

    @classmethod
    def random(cls, seed: int, d_m: int, d_M: int):
        return cls(RANDOM, d_m, d_M, seed=seed)

    @classmethod
    def toggle(cls, period: int, d_m: int, d_M: int):
        return cls(TOGGLE, d_m, d_M, period=period)

    @classmethod
    def explicit(cls, sequence: Sequence[int], d_m: int, d_M: int):
        return cls(EXPLICIT, d_m, d_M, sequence=tuple(sequence))

    def values(self, K: int) -> np.ndarray:
        """d(0), ..., d(K-1).  Explicit sequences repeat cyclically."""
        if self.kind == CONSTANT:
            return np.full(K, self.value, dtype=int)
        if self.kind == RANDOM:
            rng = np.random.default_rng(self.seed)
            return rng.integers(self.d_m, self.d_M + 1, size=K)
        if self.kind == TOGGLE:
            phase = (np.arange(K) // self.period) % 2
            return np.where(phase == 0, self.d_m, self.d_M).astype(int)
        seq = np.asarray(self.sequence, dtype=int)
        return seq[np.arange(K) % seq.size]


# ------------------------------------------------------------ trajectories

@dataclass
class Trajectory:
    """x(-d_M), ..., x(K) in ``full`` (oldest first); delays d(0..K-1) and modes."""

    full: np.ndarray
    d_M: int
    delays: np.ndarray
    modes: np.ndarray

    @property
    def states(self) -> np.ndarray:
        """x(0), ..., x(K)."""
        return self.full[self.d_M:]

    @property
    def horizon(self) -> int:
        return self.full.shape[0] - self.d_M - 1

    def x(self, k: int) -> np.ndarray:
        return self.full[k + self.d_M]

    def window(self, k: int) -> np.ndarray:
        """x_bar(k) newest first, shape (d_M+1, n)."""
        i = k + self.d_M
        return self.full[i - self.d_M:i + 1][::-1]


def _initial(phi, d_M: int, n: int) -> np.ndarray:
    h = phi.samples if isinstance(phi, HistoryVector) else np.asarray(phi, dtype=float)
    if h.ndim == 1:
        h = h.reshape(-1, n)
    if h.shape != (d_M + 1, n):
        raise ModelError(f"initial history must be ({d_M + 1}, {n}), got {h.shape}")
    return h[::-1].copy()      # oldest first


def simulate(sys: DelaySystem, phi, signal: DelaySignal, K: int) -> Trajectory:
    if K < 1:
        raise ModelError("horizon must be >= 1")
    if signal.d_m < sys.d_m or signal.d_M > sys.d_M:
        raise ModelError("delay signal bounds exceed the system's")
    n, D = sys.n, sys.d_M
    full = np.zeros((K + D + 1, n))
    full[:D + 1] = _initial(phi, D, n)
    delays = signal.values(K)
    modes = np.array([sigma(int(d), sys) for d in delays], dtype=int)
    for k in range(K):
        i = k + D
        full[i + 1] = sys.A @ full[i] + sys.A_n @ full[i - sys.d_n] + sys.A_d @ full[i - delays[k]]
    return Trajectory(full, D, delays, modes)


@dataclass
class ObserverRun:
    plant: np.ndarray        # x_p(-d_M..K)
    observer: np.ndarray     # xhat(-d_M..K)
    d_M: int
    delays: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.plant - self.observer

    def stacked(self) -> np.ndarray:
        """(x_p, e) coordinates, rows x(-d_M..K)."""
        return np.hstack([self.plant, self.error])


def simulate_observer_loop(plant: PlantModel, gains: ControllerGains, signal: DelaySignal,
                           d_n: int, phi_plant, K: int, phi_observer=None) -> ObserverRun:
    """Plant with delayed output y(k) = x_p(k - d(k)) and an observer predicting at d_n.

    u(k) = K xhat(k) + F e_y(k),  e_y(k) = y(k) - xhat(k - d_n).
    """
    gains.check_plant(plant)
    D, n_p = signal.d_M, plant.n_p
    if not signal.d_m <= d_n <= D:
        raise ModelError("nominal delay outside the signal bounds")
    xp = np.zeros((K + D + 1, n_p))
    xh = np.zeros((K + D + 1, n_p))
    xp[:D + 1] = _initial(phi_plant, D, n_p)
    if phi_observer is not None:
        xh[:D + 1] = _initial(phi_observer, D, n_p)
    delays = signal.values(K)
    A_p, B_p = plant.A_p, plant.B_p
    for k in range(K):
        i = k + D
        e_y = xp[i - delays[k]] - xh[i - d_n]
        u = gains.K @ xh[i] + gains.F @ e_y
        xp[i + 1] = A_p @ xp[i] + B_p @ u
        xh[i + 1] = A_p @ xh[i] + B_p @ u + gains.L @ e_y
    return ObserverRun(xp, xh, D, delays)


# ------------------------------------------------------------ certificates

@dataclass
class LkfCertificate:
    """LKF matrices of both modes of the switched analysis."""

    d_m: int
    d_n: int
    d_M: int
    n: int
    modes: dict[int, dict[str, np.ndarray]]
    Q3: np.ndarray | None = None
    Z3: np.ndarray | None = None
    margins: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_assignment(cls, values: Mapping[str, np.ndarray], d_m: int, d_n: int, d_M: int,
                        margins=None) -> "LkfCertificate":
        modes = {}
        for j in (1, 2):
            modes[j] = {k: np.asarray(values[f"{k}_{j}"], dtype=float)
                        for k in ("P", "Q1", "Q2", "Z1", "Z2", "X") if f"{k}_{j}" in values}
        n = modes[1]["Q1"].shape[0]
        return cls(d_m, d_n, d_M, n, modes, values.get("Q3"), values.get("Z3"), dict(margins or {}))

    def blocks(self, j: int) -> dict[str, np.ndarray]:
        b = dict(self.modes[j])
        if self.Q3 is not None:
            b["Q3"], b["Z3"] = self.Q3, self.Z3
        return b

    def selector(self, j: int):
        return build_appendix_b(self.n, self.d_m, self.d_n, self.d_M, j)

    def matrix(self, j: int) -> np.ndarray:
        """S_j with V_j(x_bar) = x_bar^T S_j x_bar."""
        sel = self.selector(j)
        b = self.blocks(j)
        S = sel.W5.T @ b["P"] @ sel.W5
        for key, C in history_patterns(sel).items():
            S = S + np.kron(C, b[key])
        return (S + S.T) / 2

    def check(self, tol: float = 1e-9) -> None:
        for j in (1, 2):
            for k, M in self.blocks(j).items():
                if k == "X":
                    continue
                if not np.allclose(M, M.T, atol=tol * (1 + np.abs(M).max())):
                    raise ModelError(f"{k}_{j} is not symmetric")
                if np.linalg.eigvalsh(M)[0] < -tol * (1 + np.abs(M).max()):
                    raise ModelError(f"{k}_{j} is not positive semidefinite")


def _quad(v: np.ndarray, M: np.ndarray) -> float:
    return float(v @ M @ v)


def lkf_terms(cert: LkfCertificate, j: int, history) -> dict[str, float]:
    """The three parts (a, b, c) of V_j from their defining sums.

    ``history`` is a newest-first window x(k), ..., x(k-d_M).
    """
    h = np.asarray(history.samples if isinstance(history, HistoryVector) else history, dtype=float)
    h = h.reshape(cert.d_M + 1, cert.n)
    b = cert.blocks(j)
    if j == 1:
        lo, hi = cert.d_m, cert.d_n
    else:
        lo, hi = cert.d_n, cert.d_M
    top = cert.d_M
    tail = j == 1 and top > hi

    def x(i):                 # x(k - i)
        return h[i]

    def eta(l):               # eta(k + l) = x(k+l+1) - x(k+l), l < 0
        return x(-l - 1) - x(-l)

    parts = [x(0), sum((x(i) for i in range(1, lo + 1)), np.zeros(cert.n)),
             sum((x(i) for i in range(lo + 1, hi + 1)), np.zeros(cert.n))]
    if tail:
        parts.append(sum((x(i) for i in range(hi + 1, top + 1)), np.zeros(cert.n)))
    w = np.concatenate(parts)
    Va = _quad(w, b["P"])

    Vb = sum(_quad(x(i), b["Q1"]) for i in range(1, lo + 1))
    Vb += sum(_quad(x(i), b["Q2"]) for i in range(lo + 1, hi + 1))
    if hi < top:
        Vb += sum(_quad(x(i), b["Q3"]) for i in range(hi + 1, top + 1))

    Vc = 0.0
    for i in range(-lo, 0):
        Vc += lo * sum(_quad(eta(l), b["Z1"]) for l in range(i, 0))
    dd = hi - lo
    for i in range(-hi, -lo):
        Vc += dd * sum(_quad(eta(l), b["Z2"]) for l in range(i, 0))
    if tail:
        D = top - hi
        for i in range(-top, -hi):
            Vc += D * sum(_quad(eta(l), b["Z3"]) for l in range(i, 0))
    return {"a": Va, "b": Vb, "c": Vc}


def lkf_direct(cert: LkfCertificate, j: int, history) -> float:
    t = lkf_terms(cert, j, history)
    return t["a"] + t["b"] + t["c"]


def eval_lkf(cert: LkfCertificate, j: int, history) -> tuple[float, float]:
    """(direct, quadratic) evaluations of V_j at the window ``history``."""
    h = np.asarray(history.samples if isinstance(history, HistoryVector) else history, dtype=float)
    if h.reshape(-1).size != (cert.d_M + 1) * cert.n:
        raise ModelError(f"history must hold {cert.d_M + 1} samples")
    v = h.reshape(-1)
    return lkf_direct(cert, j, h), _quad(v, cert.matrix(j))


# ------------------------------------------------------------ path-complete check

@dataclass
class Violation:
    trajectory: int
    step: int
    edge: tuple[int, int]      # (mode used at k+1, function compared at k)
    deficit: float


@dataclass
class DecreaseReport:
    steps_checked: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_path_complete_decrease(cert: LkfCertificate, trajectories: Iterable[Trajectory],
                                 rel_tol: float = 1e-9, floor: float = 1e-12) -> DecreaseReport:
    """V_sigma(k)(k+1) < V_i(k) for i = 1, 2 along each trajectory.

    This implies the min-functional m(k) = min_j V_j(k) strictly decreases.
    Steps where ||x_bar(k)|| < ``floor`` are skipped (no numerical content).
    """
    S = {j: cert.matrix(j) for j in (1, 2)}
    rep = DecreaseReport()
    for t, traj in enumerate(trajectories):
        K = traj.horizon
        wins = [traj.window(k).reshape(-1) for k in range(K + 1)]
        V = {j: np.array([_quad(w, S[j]) for w in wins]) for j in (1, 2)}
        for k in range(K):
            if np.linalg.norm(wins[k]) < floor:
                break
            s = int(traj.modes[k])
            m_k = min(V[1][k], V[2][k])
            nxt = V[s][k + 1]
            rep.steps_checked += 1
            for i in (1, 2):
                deficit = nxt - V[i][k]
                if deficit > rel_tol * m_k:
                    rep.violations.append(Violation(t, k, (s, i), float(deficit)))
    return rep


# ------------------------------------------------------------ brute force

MAX_AUGMENTED_DIM = 64

def augmented_matrices(sys: DelaySystem) -> list[np.ndarray]:
    """Delay-free companion matrices on x_bar, one per delay in [d_m, d_M]."""
    n, D = sys.n, sys.d_M
    N = n * (D + 1)
    out = []
    for d in range(sys.d_m, D + 1):
        M = np.zeros((N, N))
        M[:n, :n] += sys.A
        M[:n, sys.d_n * n:(sys.d_n + 1) * n] += sys.A_n
        M[:n, d * n:(d + 1) * n] += sys.A_d
        M[n:, :N - n] = np.eye(N - n)
        out.append(M)
    return out


@dataclass
class BruteForceResult:
    unstable: bool
    witness: tuple[int, ...] | None
    rho: float                  # largest rho(product)^(1/length) seen
    nodes: int
    complete: bool
    depth: int
    growth: float = float("nan")  # largest norm growth seen in extremal simulations


def _weight(mats: list[np.ndarray]) -> np.ndarray:
    """T with ||T M T^-1|| small: from the averaged Lyapunov equation, else identity."""
    N = mats[0].shape[0]
    if N > 40:
        return np.eye(N)
    try:
        # sum_d M_d^T P M_d / k - P = -I   (mean-square Lyapunov function)
        k = len(mats)
        L = sum(np.kron(M.T, M.T) for M in mats) / k
        p = np.linalg.solve(np.eye(N * N) - L, np.eye(N).reshape(-1))
        P = p.reshape(N, N)
        P = (P + P.T) / 2
        if np.linalg.eigvalsh(P)[0] <= 0:
            raise np.linalg.LinAlgError
        return sl.cholesky(P)          # P = T^T T
    except (np.linalg.LinAlgError, ValueError):
        return np.eye(N)


def brute_force_cross_check(sys: DelaySystem, depth: int = 12, node_budget: int = 200_000,
                            tol: float = 1e-9, simulate_steps: int = 400,
                            seed: int = 0) -> BruteForceResult:
    """Search delay words up to ``depth`` for a product with spectral radius > 1.

    A found word is a proof of instability under periodic switching.  Branches
    are pruned when every extension provably has weighted norm < 1.
    """
    if sys.n * (sys.d_M + 1) > MAX_AUGMENTED_DIM:
        raise ModelError(f"augmented dimension {sys.n * (sys.d_M + 1)} exceeds the cap "
                         f"{MAX_AUGMENTED_DIM}")
    mats = augmented_matrices(sys)
    k = len(mats)
    T = _weight(mats)
    Ti = np.linalg.inv(T)
    W = np.stack([T @ M @ Ti for M in mats])          # weighted generators
    norm = lambda X: np.linalg.norm(X, 2, axis=(-2, -1))  # noqa: E731
    # G[r] >= max weighted norm over products of length r (exact for r <= 2)
    G = [1.0, float(norm(W).max())]
    if depth >= 2:
        G.append(float(norm(np.einsum("aij,bjk->abik", W, W).reshape(-1, *W.shape[1:])).max()))
    for r in range(len(G), depth + 1):
        G.append(min(G[a] * G[r - a] for a in range(1, r)))
    Gmax = np.maximum.accumulate(np.array(G))

    best_rho, witness = 0.0, None
    nodes = 0
    complete = True
    level = W.copy()
    words = [(d,) for d in range(k)]
    for length in range(1, depth + 1):
        nodes += len(words)
        rho = np.abs(np.linalg.eigvals(level)).max(axis=1)
        rate = rho ** (1.0 / length)
        i = int(np.argmax(rate))
        if rate[i] > best_rho:
            best_rho = float(rate[i])
        if rho[i] > 1.0 + tol:
            # products are M_{w1} ... M_{wL}: the last letter acts first
            witness = tuple(sys.d_m + d for d in reversed(words[i]))
            break
        if length == depth:
            break
        keep = norm(level) * Gmax[depth - length] >= 1.0
        level = level[keep]
        words = [w for w, kk in zip(words, keep) if kk]
        if not words:
            break
        if len(words) * k + nodes > node_budget:
            complete = False
            break
        level = np.einsum("aij,bjk->baik", level, W).reshape(-1, *W.shape[1:])
        words = [w + (d,) for d in range(k) for w in words]

    growth = _extremal_growth(sys, simulate_steps, seed)
    return BruteForceResult(witness is not None, witness, best_rho, nodes,
                            complete or witness is not None, depth, growth)


def _extremal_growth(sys: DelaySystem, steps: int, seed: int) -> float:
    if steps <= 0:
        return float("nan")
    rng = np.random.default_rng(seed)
    worst = 0.0
    signals = [DelaySignal.toggle(p, sys.d_m, sys.d_M) for p in (1, 2, 3)]
    signals += [DelaySignal.constant(d, sys.d_m, sys.d_M) for d in (sys.d_m, sys.d_M)]
    for sig in signals:
        phi = rng.normal(size=(sys.d_M + 1, sys.n))
        tr = simulate(sys, phi, sig, steps)
        worst = max(worst, np.linalg.norm(tr.states[-1]) / np.linalg.norm(phi))
    return float(worst)
