"""Matrix expressions affine in decision-variable blocks.

A :class:`LinExpr` is a rectangular expression ``C + sum_t X_t B_t Y_t``
(or ``X_t B_t^T Y_t``) where ``B_t`` are variable blocks and ``C``, ``X_t``,
``Y_t`` are constant matrices.  An :class:`AffineMatrixExpr` is a symmetric
expression stored through a square ``LinExpr`` ``E`` whose value is
``(E + E^T) / 2``; evaluating it is therefore symmetric bit for bit.

Symmetric blocks are scalarized in row-major upper-triangular order.  The
off-diagonal scalar ``s`` of entry ``(p, q)`` stands for both ``B[p, q]`` and
``B[q, p]``, so its coefficient matrix carries both contributions.
"""
from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

SYMMETRIC = "symmetric"
FULL = "full"


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class VariableBlock:
    name: str
    kind: str
    rows: int
    cols: int
    positive: bool = False

    def __post_init__(self):
        if self.kind not in (SYMMETRIC, FULL):
            raise ValueError(f"unknown block kind {self.kind!r}")
        if self.kind == SYMMETRIC and self.rows != self.cols:
            raise ShapeError(f"symmetric block {self.name} must be square")
        if self.positive and self.kind != SYMMETRIC:
            raise ValueError("only symmetric blocks can be declared positive")

    @property
    def id(self) -> str:
        return self.name

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def n_scalars(self) -> int:
        if self.kind == SYMMETRIC:
            return self.rows * (self.rows + 1) // 2
        return self.rows * self.cols

    def entries(self) -> list[tuple[int, int]]:
        if self.kind == SYMMETRIC:
            return [(p, q) for p in range(self.rows) for q in range(p, self.rows)]
        return [(p, q) for p in range(self.rows) for q in range(self.cols)]

    def to_matrix(self, vec) -> np.ndarray:
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if vec.size != self.n_scalars:
            raise ShapeError(f"{self.name}: expected {self.n_scalars} scalars, got {vec.size}")
        if self.kind == FULL:
            return vec.reshape(self.rows, self.cols).copy()
        M = np.zeros((self.rows, self.rows))
        iu = np.triu_indices(self.rows)
        M[iu] = vec
        M.T[iu] = vec
        return M

    def to_vector(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if M.shape != self.shape:
            raise ShapeError(f"{self.name}: expected shape {self.shape}, got {M.shape}")
        if self.kind == FULL:
            return M.reshape(-1).copy()
        return M[np.triu_indices(self.rows)].copy()

    def expr(self) -> "LinExpr":
        return LinExpr.var(self)


@dataclass(frozen=True)
class _Term:
    block: VariableBlock
    X: np.ndarray
    Y: np.ndarray
    trans: bool


def _const(value, shape=None) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 0 and shape is not None:
        if a != 0:
            raise ShapeError("only the scalar 0 broadcasts to a matrix")
        return np.zeros(shape)
    return np.atleast_2d(a)


class LinExpr:
    """Rectangular matrix expression, affine in variable blocks."""

    __array_ufunc__ = None  # make ndarray @ LinExpr dispatch to __rmatmul__

    def __init__(self, shape, const=None, terms: Iterable[_Term] = ()):
        self.shape = (int(shape[0]), int(shape[1]))
        self.const = np.zeros(self.shape) if const is None else np.asarray(const, dtype=float)
        if self.const.shape != self.shape:
            raise ShapeError(f"constant shape {self.const.shape} != {self.shape}")
        self.terms = tuple(terms)

    @classmethod
    def var(cls, block: VariableBlock) -> "LinExpr":
        return cls(block.shape, None,
                   (_Term(block, np.eye(block.rows), np.eye(block.cols), False),))

    @classmethod
    def constant(cls, value) -> "LinExpr":
        c = _const(value)
        return cls(c.shape, c)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "LinExpr":
        return cls((rows, cols))

    @property
    def T(self) -> "LinExpr":
        return LinExpr((self.shape[1], self.shape[0]), self.const.T,
                       (_Term(t.block, t.Y.T, t.X.T, not t.trans) for t in self.terms))

    def blocks(self) -> dict[str, VariableBlock]:
        return {t.block.name: t.block for t in self.terms}

    def _coerce(self, other) -> "LinExpr":
        if isinstance(other, LinExpr):
            if other.shape != self.shape:
                raise ShapeError(f"shape mismatch {self.shape} vs {other.shape}")
            return other
        c = _const(other, self.shape)
        if c.shape != self.shape:
            raise ShapeError(f"shape mismatch {self.shape} vs {c.shape}")
        return LinExpr(self.shape, c)

    def __add__(self, other) -> "LinExpr":
        o = self._coerce(other)
        return LinExpr(self.shape, self.const + o.const, self.terms + o.terms)

    __radd__ = __add__

    def __neg__(self) -> "LinExpr":
        return self * -1.0

    def __sub__(self, other) -> "LinExpr":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "LinExpr":
        return (-self) + other

    def __mul__(self, s) -> "LinExpr":
        if not isinstance(s, Real):
            raise TypeError("LinExpr can only be scaled by real scalars")
        s = float(s)
        return LinExpr(self.shape, self.const * s,
                       (_Term(t.block, t.X * s, t.Y, t.trans) for t in self.terms))

    __rmul__ = __mul__

    def __matmul__(self, M) -> "LinExpr":
        if isinstance(M, LinExpr):
            raise TypeError("product of two variable expressions is not affine")
        M = _const(M)
        if M.shape[0] != self.shape[1]:
            raise ShapeError(f"cannot multiply {self.shape} by {M.shape}")
        return LinExpr((self.shape[0], M.shape[1]), self.const @ M,
                       (_Term(t.block, t.X, t.Y @ M, t.trans) for t in self.terms))

    def __rmatmul__(self, M) -> "LinExpr":
        M = _const(M)
        if M.shape[1] != self.shape[0]:
            raise ShapeError(f"cannot multiply {M.shape} by {self.shape}")
        return LinExpr((M.shape[0], self.shape[1]), M @ self.const,
                       (_Term(t.block, M @ t.X, t.Y, t.trans) for t in self.terms))

    def evaluate(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.const.copy()
        for t in self.terms:
            B = np.asarray(values[t.block.name], dtype=float)
            out += t.X @ (B.T if t.trans else B) @ t.Y
        return out

    def __repr__(self):
        names = sorted(self.blocks())
        return f"LinExpr(shape={self.shape}, blocks={names})"


def as_expr(value) -> LinExpr:
    if isinstance(value, LinExpr):
        return value
    if isinstance(value, VariableBlock):
        return LinExpr.var(value)
    return LinExpr.constant(value)


def bmat(rows: Sequence[Sequence]) -> LinExpr:
    """Block matrix from LinExpr / ndarray pieces; ``None`` marks a zero block."""
    nr, nc = len(rows), len(rows[0])
    heights: list[int | None] = [None] * nr
    widths: list[int | None] = [None] * nc
    for i, row in enumerate(rows):
        if len(row) != nc:
            raise ShapeError("ragged block rows")
        for j, piece in enumerate(row):
            if piece is None:
                continue
            h, w = as_expr(piece).shape
            if heights[i] not in (None, h) or widths[j] not in (None, w):
                raise ShapeError(f"inconsistent block size at ({i}, {j})")
            heights[i], widths[j] = h, w
    if any(h is None for h in heights) or any(w is None for w in widths):
        raise ShapeError("every block row and column needs one sized entry")
    R, C = sum(heights), sum(widths)
    r0 = np.concatenate([[0], np.cumsum(heights)])
    c0 = np.concatenate([[0], np.cumsum(widths)])
    out = LinExpr.zeros(R, C)
    for i, row in enumerate(rows):
        for j, piece in enumerate(row):
            if piece is None:
                continue
            out = out + embed(as_expr(piece), R, C, r0[i], c0[j])
    return out


def embed(E: LinExpr, R: int, C: int, r0: int, c0: int) -> LinExpr:
    h, w = E.shape
    left = np.zeros((R, h))
    left[r0:r0 + h, :] = np.eye(h)
    right = np.zeros((w, C))
    right[:, c0:c0 + w] = np.eye(w)
    return left @ E @ right


def kron_block(C: np.ndarray, block: VariableBlock | LinExpr) -> LinExpr:
    """``C ⊗ B`` for a constant matrix ``C`` and an n x n expression ``B``."""
    B = as_expr(block)
    n = B.shape[0]
    C = _const(C)
    I = np.eye(n)
    out = LinExpr.zeros(C.shape[0] * n, C.shape[1] * B.shape[1])
    for i in range(C.shape[0]):
        row = C[i]
        if not np.any(row):
            continue
        e = np.zeros((C.shape[0], 1))
        e[i, 0] = 1.0
        out = out + np.kron(e, I) @ B @ np.kron(row.reshape(1, -1), np.eye(B.shape[1]))
    return out


class AffineMatrixExpr:
    """Symmetric affine matrix expression; value is ``(E + E^T) / 2``."""

    __array_ufunc__ = None

    def __init__(self, half: LinExpr):
        if half.shape[0] != half.shape[1]:
            raise ShapeError(f"symmetric expression needs a square body, got {half.shape}")
        self.half = half

    @classmethod
    def from_block(cls, block: VariableBlock) -> "AffineMatrixExpr":
        if block.kind != SYMMETRIC:
            raise ShapeError("from_block needs a symmetric block")
        return cls(LinExpr.var(block))

    @classmethod
    def constant_matrix(cls, C) -> "AffineMatrixExpr":
        C = _const(C)
        if C.shape[0] != C.shape[1] or not np.array_equal(C, C.T):
            raise ShapeError("constant must be square and symmetric")
        return cls(LinExpr.constant(C))

    @classmethod
    def zeros(cls, dim: int) -> "AffineMatrixExpr":
        return cls(LinExpr.zeros(dim, dim))

    @property
    def dim(self) -> int:
        return self.half.shape[0]

    @property
    def constant(self) -> np.ndarray:
        c = self.half.const
        return (c + c.T) * 0.5

    def blocks(self) -> dict[str, VariableBlock]:
        return self.half.blocks()

    def evaluate(self, values: Mapping[str, np.ndarray]) -> np.ndarray:
        M = self.half.evaluate(values)
        return (M + M.T) * 0.5

    def _other(self, other) -> "AffineMatrixExpr":
        if isinstance(other, AffineMatrixExpr):
            if other.dim != self.dim:
                raise ShapeError(f"dimension mismatch {self.dim} vs {other.dim}")
            return other
        return AffineMatrixExpr(self.half._coerce(other))

    def __add__(self, other) -> "AffineMatrixExpr":
        return AffineMatrixExpr(self.half + self._other(other).half)

    __radd__ = __add__

    def __sub__(self, other) -> "AffineMatrixExpr":
        return AffineMatrixExpr(self.half - self._other(other).half)

    def __neg__(self) -> "AffineMatrixExpr":
        return AffineMatrixExpr(-self.half)

    def __mul__(self, s) -> "AffineMatrixExpr":
        return AffineMatrixExpr(self.half * s)

    __rmul__ = __mul__

    def coefficient_tensors(self) -> dict[str, np.ndarray]:
        """Per block, an array (n_scalars, dim, dim) of symmetric coefficients."""
        groups: dict[str, list[_Term]] = {}
        for t in self.half.terms:
            groups.setdefault(t.block.name, []).append(t)
        return {name: _block_coefficients(terms, self.dim) for name, terms in groups.items()}

    def coefficients(self) -> dict[tuple[str, int], sp.csr_matrix]:
        out = {}
        for name, tensor in self.coefficient_tensors().items():
            for s in range(tensor.shape[0]):
                if np.any(tensor[s]):
                    out[(name, s)] = sp.csr_matrix(tensor[s])
        return out

    def __repr__(self):
        return f"AffineMatrixExpr(dim={self.dim}, blocks={sorted(self.blocks())})"


def _block_coefficients(terms: list[_Term], dim: int) -> np.ndarray:
    block = terms[0].block
    r, c = block.shape
    # G[p, q] = sum_t X_t[:, p] Y_t[q, :]  (coefficient of entry (p, q) of B)
    G = np.zeros((r, c, dim, dim))
    plain = [t for t in terms if not t.trans or block.kind == SYMMETRIC]
    flipped = [t for t in terms if t.trans and block.kind == FULL]
    if plain:
        G += _outer_sum(plain, r, c, dim)
    if flipped:
        # X B^T Y: entry (p, q) of B sits at (q, p) of B^T
        G += _outer_sum(flipped, c, r, dim).transpose(1, 0, 2, 3)
    if block.kind == SYMMETRIC:
        iu, ju = np.triu_indices(r)
        D = G[iu, ju] + np.where((iu != ju)[:, None, None], G[ju, iu], 0.0)
    else:
        D = G.reshape(r * c, dim, dim)
    return (D + D.transpose(0, 2, 1)) * 0.5


def _outer_sum(terms: list[_Term], r: int, c: int, dim: int) -> np.ndarray:
    T = len(terms)
    Xs = np.stack([t.X for t in terms])          # (T, dim, r)
    Ys = np.stack([t.Y for t in terms])          # (T, c, dim)
    prod = Xs.reshape(T, dim * r).T @ Ys.reshape(T, c * dim)
    return prod.reshape(dim, r, c, dim).transpose(1, 2, 0, 3)


def sym(E: LinExpr) -> AffineMatrixExpr:
    """Symmetric part (E + E^T)/2 of a square expression."""
    return AffineMatrixExpr(as_expr(E))


def he(E) -> AffineMatrixExpr:
    """E + E^T."""
    if isinstance(E, AffineMatrixExpr):
        return E * 2.0
    E = as_expr(E)
    if E.shape[0] != E.shape[1]:
        raise ShapeError(f"He{{.}} needs a square argument, got {E.shape}")
    return AffineMatrixExpr(E * 2.0)


def congruence(W, E: AffineMatrixExpr) -> AffineMatrixExpr:
    """W^T E W, with W of shape (E.dim, p)."""
    W = _const(W)
    if W.shape[0] != E.dim:
        raise ShapeError(f"congruence needs W with {E.dim} rows, got {W.shape}")
    return AffineMatrixExpr(W.T @ E.half @ W)


def block_diag(*parts) -> AffineMatrixExpr:
    exprs = [p if isinstance(p, AffineMatrixExpr) else AffineMatrixExpr.constant_matrix(p)
             for p in parts]
    dims = [e.dim for e in exprs]
    D = sum(dims)
    out = LinExpr.zeros(D, D)
    k = 0
    for e in exprs:
        out = out + embed(e.half, D, D, k, k)
        k += e.dim
    return AffineMatrixExpr(out)


def affine_in_d(E0: AffineMatrixExpr, E1: AffineMatrixExpr, d: float) -> AffineMatrixExpr:
    return E0 + E1 * float(d)
