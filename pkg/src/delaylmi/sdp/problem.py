"""Solver-neutral form of an LMI problem.

Each constraint becomes ``C + sum_s x_s A_s >= 0`` (after flipping the sign
of negative-definite constraints), stored as packed upper triangles in
row-major order.  Strict constraints carry a margin ``delta``; the solver
and the SDPA export use ``C - delta I``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..conditions import NEG, LmiProblem
from ..lmi import VariableBlock


def packed_index(dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(dim)


def pack(M: np.ndarray) -> np.ndarray:
    return M[np.triu_indices(M.shape[0])]


def unpack(v: np.ndarray, dim: int) -> np.ndarray:
    M = np.zeros((dim, dim))
    iu = np.triu_indices(dim)
    M[iu] = v
    M.T[iu] = v
    return M


def strict_margin(constant: np.ndarray) -> float:
    """Margin demanded of a strict constraint with (full, symmetric) constant."""
    return max(1e-8, 1e-9 * float(np.linalg.norm(constant)))


def tolerance(constant: np.ndarray) -> float:
    return 1e-7 * (1.0 + float(np.linalg.norm(constant)))


@dataclass
class SdpConstraint:
    name: str
    dim: int
    constant: np.ndarray        # packed, unshifted
    coeffs: sp.csc_matrix       # (packed length, n_scalars)
    strict: bool
    margin: float
    kind: str = "condition"
    meta: dict = field(default_factory=dict)

    def shifted_constant(self) -> np.ndarray:
        return self.constant - self.margin * pack(np.eye(self.dim))

    def value(self, x: np.ndarray) -> np.ndarray:
        return unpack(self.constant + self.coeffs @ x, self.dim)

    def tolerance(self) -> float:
        return tolerance(unpack(self.constant, self.dim))


@dataclass
class SdpProblem:
    n_scalars: int
    constraints: list[SdpConstraint]
    directory: list[tuple[VariableBlock, int]]   # (block, offset)
    objective: np.ndarray | None = None
    kind: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def block_sizes(self) -> list[int]:
        return [c.dim for c in self.constraints]

    def assignment(self, x: np.ndarray) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=float)
        return {b.name: b.to_matrix(x[o:o + b.n_scalars]) for b, o in self.directory}

    def vector(self, values) -> np.ndarray:
        x = np.zeros(self.n_scalars)
        for b, o in self.directory:
            x[o:o + b.n_scalars] = b.to_vector(values[b.name])
        return x

    @property
    def homogeneous(self) -> bool:
        return all(not np.any(c.constant) for c in self.constraints)


def normalize(problem: LmiProblem) -> SdpProblem:
    offsets, directory, k = {}, [], 0
    for b in problem.variables:
        offsets[b.name] = k
        directory.append((b, k))
        k += b.n_scalars
    n_scalars = k
    out = []
    for c in problem.constraints:
        sign = -1.0 if c.sense == NEG else 1.0
        dim = c.dim
        iu = np.triu_indices(dim)
        const = sign * c.expr.constant[iu]
        rows, cols, vals = [], [], []
        for name, tensor in c.expr.coefficient_tensors().items():
            if name not in offsets:
                raise KeyError(f"constraint {c.name} uses undeclared block {name}")
            packed = sign * tensor[:, iu[0], iu[1]]        # (n_scalars_block, tri)
            s_idx, r_idx = np.nonzero(packed)
            rows.append(r_idx)
            cols.append(s_idx + offsets[name])
            vals.append(packed[s_idx, r_idx])
        tri = len(iu[0])
        if rows:
            A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(tri, n_scalars))
        else:
            A = sp.csc_matrix((tri, n_scalars))
        A.sum_duplicates()
        margin = strict_margin(unpack(const, dim)) if c.strict else 0.0
        out.append(SdpConstraint(c.name, dim, const, A, c.strict, margin, c.kind, dict(c.meta)))
    return SdpProblem(n_scalars, out, directory, kind=problem.kind, meta=dict(problem.meta))


def denormalize(sdp: SdpProblem) -> list[dict]:
    """Per constraint: the constant and per-scalar coefficient matrices, unpacked.

    Values are in the normalized sign (positive-definite sense).
    """
    names = {}
    for b, o in sdp.directory:
        for s in range(b.n_scalars):
            names[o + s] = (b.name, s)
    out = []
    for c in sdp.constraints:
        coeffs = {}
        A = c.coeffs.tocsc()
        for col in range(A.shape[1]):
            lo, hi = A.indptr[col], A.indptr[col + 1]
            if lo == hi:
                continue
            v = np.zeros(A.shape[0])
            v[A.indices[lo:hi]] = A.data[lo:hi]
            coeffs[names[col]] = unpack(v, c.dim)
        out.append({"name": c.name, "constant": unpack(c.constant, c.dim), "coeffs": coeffs,
                    "strict": c.strict, "margin": c.margin})
    return out
