"""Selector matrices for the augmented vectors used by the LKF arguments.

Augmented vector for a bounded-delay subsystem with bounds [a, b] (plain
layout, 8 blocks of size n)::

    0 x(k+1)   1 x(k)   2 x(k-a)   3 x(k-d)   4 x(k-b)
    5 v1 = mean x(k-a..k)    6 v2 = mean x(k-d..k-a)    7 v3 = mean x(k-b..k-d)

The extended layout (first mode of the switched split) appends
``8 x(k-D)`` and ``9 v4 = mean x(k-D..k-b)`` where D is the overall upper
bound.  All scalar patterns are expanded with ``kron(pattern, I_n)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lmi import LinExpr, VariableBlock, kron_block


def gamma(d: int) -> Fraction:
    """Weight of the second-order Jensen term: 1 for d = 1, (d+1)/(d-1) otherwise."""
    d = int(d)
    if d < 1:
        raise ValueError("gamma needs d >= 1")
    return Fraction(1) if d == 1 else Fraction(d + 1, d - 1)


def _kron(pattern, n: int) -> np.ndarray:
    return np.kron(np.asarray(pattern, dtype=float), np.eye(n))


def block_selector(index: int, n_blocks: int, n: int) -> np.ndarray:
    """n x (n_blocks*n) matrix picking block ``index``."""
    e = np.zeros((1, n_blocks))
    e[0, index] = 1.0
    return _kron(e, n)


_M = np.array([[0, 1, -1, 0, 0, 0],
               [0, 1, 1, 0, 0, -2]], dtype=float)


@dataclass(frozen=True)
class SelectorSet:
    """Selectors of one bounded-delay subsystem.

    ``lo``/``hi`` are the subsystem bounds; ``top`` is the overall upper bound
    (equal to ``hi`` unless ``extended``).
    """

    n: int
    lo: int
    hi: int
    top: int
    extended: bool
    W_psi: np.ndarray
    W_s: np.ndarray
    W3: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    W4: np.ndarray
    W_d0: np.ndarray
    W_dslope: np.ndarray
    W_z: np.ndarray | None
    W5: np.ndarray

    @property
    def n_blocks(self) -> int:
        return 10 if self.extended else 8

    @property
    def dim(self) -> int:
        return self.n_blocks * self.n

    @property
    def d_delta(self) -> int:
        return self.hi - self.lo

    @property
    def d_delta_top(self) -> int:
        return self.top - self.hi

    def W(self, d) -> np.ndarray:
        """W(d) = W_d0 + d * W_dslope; delay-dependent part of w(k)."""
        return self.W_d0 + float(d) * self.W_dslope

    def E(self, index: int) -> np.ndarray:
        return block_selector(index, self.n_blocks, self.n)

    def gamma_perp(self, A, A_m, A_d, A_M) -> np.ndarray:
        """Null-space basis of [-I, A, A_m, A_d, A_M, 0, ...]: rows map xi[1:] -> xi."""
        n, N = self.n, self.n_blocks
        top = np.zeros((n, (N - 1) * n))
        for blk, mat in ((0, A), (1, A_m), (2, A_d), (3, A_M)):
            top[:, blk * n:(blk + 1) * n] += np.asarray(mat, dtype=float)
        return np.vstack([top, np.eye((N - 1) * n)])

    def finsler_row(self, A, A_m, A_d, A_M) -> np.ndarray:
        n, N = self.n, self.n_blocks
        row = np.zeros((n, N * n))
        row[:, :n] = -np.eye(n)
        for blk, mat in ((1, A), (2, A_m), (3, A_d), (4, A_M)):
            row[:, blk * n:(blk + 1) * n] += np.asarray(mat, dtype=float)
        return row


def _build(n: int, lo: int, hi: int, top: int, extended: bool) -> SelectorSet:
    if not 1 <= lo <= hi <= top:
        raise ValueError(f"need 1 <= {lo} <= {hi} <= {top}")
    if extended and top == hi:
        raise ValueError("extended layout needs top > hi")
    N = 10 if extended else 8
    pad = N - 8

    def wide(rows):
        rows = np.asarray(rows, dtype=float)
        return np.hstack([rows, np.zeros((rows.shape[0], pad))])

    z = np.zeros((2, 2))
    W_psi = wide(np.vstack([np.hstack([z, _M]), np.hstack([z[:, :1], _M, z[:, :1]])]))
    W_s = wide(np.hstack([_M, z]))
    W3 = wide([[1, -1, 0, 0, 0, 0, 0, 0]])
    W4 = np.array([[0, 0, 0],
                   [lo + 1, 0, 0],
                   [0, 1 - lo, hi + 1]], dtype=float)
    W1 = np.hstack([np.array([[0, 1, 0, 0, 0],
                              [0, -1, 0, 0, 0],
                              [0, 0, -1, -1, 0]], dtype=float), W4])
    W2 = np.hstack([np.array([[1, 0, 0, 0, 0],
                              [0, 0, -1, 0, 0],
                              [0, 0, 0, -1, -1]], dtype=float), W4])
    slope = np.zeros((3, 8))
    slope[2, 6] = 1.0
    slope[2, 7] = -1.0
    W1, W2, slope = wide(W1), wide(W2), wide(slope)
    W_z = None
    if extended:
        D = top - hi
        W1 = np.vstack([W1, np.eye(1, N, 4) * -1 + np.eye(1, N, 9) * (D + 1)])
        W2 = np.vstack([W2, np.eye(1, N, 8) * -1 + np.eye(1, N, 9) * (D + 1)])
        slope = np.vstack([slope, np.zeros((1, N))])
        W_z = np.array([[0, 0, 0, 0, 1, 0, 0, 0, -1, 0],
                        [0, 0, 0, 0, 1, 0, 0, 0, 1, -2]], dtype=float)

    # W5 x_bar = [x(k); sum x(k-1..k-lo); sum x(k-lo-1..k-hi) (; sum x(k-hi-1..k-top))]
    groups = [(0, 0), (1, lo), (lo + 1, hi)]
    if extended:
        groups.append((hi + 1, top))
    W5 = np.zeros((len(groups), top + 1))
    for r, (a, b) in enumerate(groups):
        W5[r, a:b + 1] = 1.0

    return SelectorSet(
        n=n, lo=lo, hi=hi, top=top, extended=extended,
        W_psi=_kron(W_psi, n), W_s=_kron(W_s, n), W3=_kron(W3, n),
        W1=_kron(W1, n), W2=_kron(W2, n), W4=_kron(W4, n),
        W_d0=np.zeros((W1.shape[0] * n, N * n)), W_dslope=_kron(slope, n),
        W_z=None if W_z is None else _kron(W_z, n),
        W5=_kron(W5, n),
    )


def build_appendix_a(n: int, d_m: int, d_M: int) -> SelectorSet:
    """Selectors for a single bounded-delay system with d in [d_m, d_M]."""
    return _build(n, d_m, d_M, d_M, False)


def build_appendix_b(n: int, d_m: int, d_n: int, d_M: int, j: int) -> SelectorSet:
    """Selectors of mode ``j`` of the switched split at the nominal delay d_n.

    Mode 1 covers [d_m, d_n] and also carries the tail x(k-d_n-1..k-d_M) in
    its LKF; when d_n == d_M the tail is empty and the plain layout is used.
    """
    if j == 1:
        return _build(n, d_m, d_n, d_M, d_M > d_n)
    if j == 2:
        return _build(n, d_n, d_M, d_M, False)
    raise ValueError("mode must be 1 or 2")


def band_pattern(a: int, b: int, size: int) -> np.ndarray:
    """Scalar pattern of the summed-difference term weighted by b.

    Represents ``b sum_{i=-b}^{-1} sum_{l=k+i}^{k-1} ... `` on blocks
    0..a+b of a (size x size) block matrix: P0 = b^2, 2b^2 on 1..a with -b^2
    couplings, then b(2b-2l+1) on a+l with -b(b-l+1) couplings.
    """
    C = np.zeros((size, size))
    C[0, 0] = b * b
    for i in range(1, a + 1):
        C[i, i] += 2 * b * b
        C[i - 1, i] = C[i, i - 1] = -b * b
    for l in range(1, b + 1):
        C[a + l, a + l] += b * (2 * b - 2 * l + 1)
        C[a + l - 1, a + l] = C[a + l, a + l - 1] = -b * (b - l + 1)
    return C


def lead_pattern(a: int, size: int) -> np.ndarray:
    """Scalar pattern of the summed-difference term over the first ``a`` lags."""
    C = np.zeros((size, size))
    C[0, 0] = a * a
    for i in range(1, a + 1):
        C[i, i] += a * (2 * a - 2 * i + 1)
        C[i - 1, i] = C[i, i - 1] = -a * (a - i + 1)
    return C


def mask_pattern(first: int, last: int, size: int) -> np.ndarray:
    C = np.zeros((size, size))
    idx = np.arange(first, last + 1)
    C[idx, idx] = 1.0
    return C


def history_patterns(sel: SelectorSet) -> dict[str, np.ndarray]:
    """Scalar patterns of the non-quadratic-form part of V over x_bar.

    Keys name the LKF block each pattern multiplies (kron with the block).
    """
    size = sel.top + 1
    a, b = sel.lo, sel.d_delta
    out = {
        "Q1": mask_pattern(1, a, size),
        "Q2": mask_pattern(a + 1, sel.hi, size),
        "Z1": lead_pattern(a, size),
        "Z2": band_pattern(a, b, size),
    }
    if sel.top > sel.hi:
        out["Q3"] = mask_pattern(sel.hi + 1, sel.top, size)
    if sel.extended:
        out["Z3"] = band_pattern(sel.hi, sel.d_delta_top, size)
    return out


def history_form(sel: SelectorSet, blocks: dict[str, VariableBlock | LinExpr]) -> LinExpr:
    """Sum of kron(pattern, block) over :func:`history_patterns`."""
    size = (sel.top + 1) * sel.n
    out = LinExpr.zeros(size, size)
    for key, C in history_patterns(sel).items():
        if np.any(C):
            out = out + kron_block(C, blocks[key])
    return out


def finsler_history(n: int, d_n: int, d_M: int, A, A_n, A_d, l: int) -> np.ndarray:
    """[-I, A, 0.., A_n (at lag d_n), .., A_d (at lag l), ..] acting on [x(k+1); x_bar(k)]."""
    row = np.zeros((n, (d_M + 2) * n))
    row[:, :n] = -np.eye(n)
    for lag, mat in ((0, A), (d_n, A_n), (l, A_d)):
        c = (1 + lag) * n
        row[:, c:c + n] += np.asarray(mat, dtype=float)
    return row


def finsler_history_perp(n: int, d_n: int, d_M: int, A, A_n, A_d, l: int) -> np.ndarray:
    """Null-space basis of :func:`finsler_history`: x_bar -> [x(k+1); x_bar]."""
    row = finsler_history(n, d_n, d_M, A, A_n, A_d, l)
    return np.vstack([row[:, n:], np.eye((d_M + 1) * n)])


def _mean(history: np.ndarray, first: int, last: int) -> np.ndarray:
    return history[first:last + 1].mean(axis=0)


def xi_assemble(sel: SelectorSet, x_next, history, d_k: int) -> np.ndarray:
    """Augmented vector of ``sel``'s layout from a newest-first history."""
    h = np.asarray(history, dtype=float)
    if h.ndim == 1:
        h = h.reshape(-1, sel.n)
    if h.shape[0] < sel.top + 1:
        raise ValueError(f"history needs {sel.top + 1} samples, got {h.shape[0]}")
    if not sel.lo <= d_k <= sel.hi:
        raise ValueError(f"delay {d_k} outside [{sel.lo}, {sel.hi}]")
    a, b = sel.lo, sel.hi
    parts = [np.asarray(x_next, dtype=float).reshape(-1), h[0], h[a], h[d_k], h[b],
             _mean(h, 0, a), _mean(h, a, d_k), _mean(h, d_k, b)]
    if sel.extended:
        parts += [h[sel.top], _mean(h, b, sel.top)]
    return np.concatenate(parts)


def w_vector(sel: SelectorSet, history) -> np.ndarray:
    """[x(k); sum over each lag group] = W5 x_bar."""
    h = np.asarray(history, dtype=float).reshape(-1)
    return sel.W5 @ h[: sel.W5.shape[1]]
