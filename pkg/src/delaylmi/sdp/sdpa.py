"""SDPA sparse format (".dat-s") export and import.

The SDPA primal reads ``sum_i F_i x_i - F_0 >= 0``; our normalized
constraints ``C + A x >= 0`` (strict ones shifted to ``C - delta I``) map to
``F_0 = -(C - delta I)`` and ``F_i = A_i``, one block per constraint.  The
objective line is all zeros for feasibility problems.  Output is canonical:
blocks in declaration order, entries sorted by (matno, blkno, i, j), values
with 17 significant digits, so export(import(export(p))) is byte-identical.
"""
from __future__ import annotations

import re

import numpy as np
import scipy.sparse as sp

from ..lmi import FULL, VariableBlock
from .problem import SdpConstraint, SdpProblem


class SdpaParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _fmt(v: float) -> str:
    s = "%.17g" % v
    return "0" if s == "-0" else s


def export_sdpa(p: SdpProblem) -> str:
    m = p.n_scalars
    lines = [str(m), str(len(p.constraints)),
             " ".join(str(c.dim) for c in p.constraints)]
    obj = p.objective if p.objective is not None else np.zeros(m)
    lines.append(" ".join(_fmt(v) for v in obj) if m else "")
    entries = []
    for blk, c in enumerate(p.constraints, start=1):
        iu, ju = np.triu_indices(c.dim)
        F0 = -c.shifted_constant()
        for k in np.nonzero(F0)[0]:
            entries.append((0, blk, iu[k] + 1, ju[k] + 1, F0[k]))
        A = c.coeffs.tocoo()
        for r, col, v in zip(A.row, A.col, A.data):
            if v != 0.0:
                entries.append((col + 1, blk, iu[r] + 1, ju[r] + 1, v))
    entries.sort(key=lambda e: e[:4])
    lines += [f"{a} {b} {i} {j} {_fmt(v)}" for a, b, i, j, v in entries]
    return "\n".join(lines) + "\n"


def _data_lines(text: str):
    """(line number, tokens) for non-comment lines; braces and commas are separators."""
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in '"*':
            continue
        tokens = re.sub(r"[{}(),]", " ", line).split()
        if tokens:
            yield no, tokens


def _ints(tokens, no, what):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise SdpaParseError(f"expected integers for {what}, got {' '.join(tokens)!r}", no) from None


def import_sdpa(text: str) -> SdpProblem:
    """Parse SDPA sparse text.  Constraints come back non-strict with margin 0."""
    it = _data_lines(text)
    try:
        no, tok = next(it)
        m = _ints(tok[:1], no, "variable count")[0]
        no, tok = next(it)
        nblk = _ints(tok[:1], no, "block count")[0]
        sizes: list[int] = []
        while len(sizes) < nblk:
            no, tok = next(it)
            sizes += _ints(tok, no, "block sizes")
        if len(sizes) != nblk:
            raise SdpaParseError(f"expected {nblk} block sizes, got {len(sizes)}", no)
        if any(s <= 0 for s in sizes):
            raise SdpaParseError("diagonal (negative) blocks are not supported", no)
        obj: list[float] = []
        while len(obj) < m:
            no, tok = next(it)
            try:
                obj += [float(t) for t in tok]
            except ValueError:
                raise SdpaParseError("malformed objective vector", no) from None
    except StopIteration:
        raise SdpaParseError("unexpected end of header", 0) from None
    if len(obj) != m:
        raise SdpaParseError(f"objective has {len(obj)} entries, expected {m}", no)

    consts = [np.zeros(s * (s + 1) // 2) for s in sizes]
    trips: list[list] = [[[], [], []] for _ in sizes]
    for no, tok in it:
        if len(tok) != 5:
            raise SdpaParseError(f"expected 'matno blkno i j value', got {len(tok)} fields", no)
        matno, blk, i, j = _ints(tok[:4], no, "entry indices")
        try:
            v = float(tok[4])
        except ValueError:
            raise SdpaParseError(f"bad value {tok[4]!r}", no) from None
        if not 0 <= matno <= m:
            raise SdpaParseError(f"matrix number {matno} out of range", no)
        if not 1 <= blk <= nblk:
            raise SdpaParseError(f"block number {blk} out of range", no)
        s = sizes[blk - 1]
        if not (1 <= i <= s and 1 <= j <= s):
            raise SdpaParseError(f"entry ({i}, {j}) outside block of size {s}", no)
        i, j = min(i, j) - 1, max(i, j) - 1
        k = i * s - i * (i - 1) // 2 + (j - i)       # row-major upper index
        if matno == 0:
            consts[blk - 1][k] -= v
        else:
            t = trips[blk - 1]
            t[0].append(k); t[1].append(matno - 1); t[2].append(v)
    cons = []
    for b, s in enumerate(sizes):
        r, c, v = trips[b]
        A = sp.csc_matrix((v, (r, c)), shape=(s * (s + 1) // 2, m))
        A.sum_duplicates()
        cons.append(SdpConstraint(f"block{b + 1}", s, consts[b], A, strict=False, margin=0.0))
    directory = [(VariableBlock(f"x{i + 1}", FULL, 1, 1), i) for i in range(m)]
    return SdpProblem(m, cons, directory, objective=np.asarray(obj, dtype=float), kind="sdpa")


def write_solution(x: np.ndarray) -> str:
    """Solution vector in the ``xVec = {...}`` style of SDPA result files."""
    return "xVec = \n{" + ",".join(_fmt(v) for v in np.asarray(x, dtype=float)) + "}\n"


def read_solution_vector(text: str, m: int | None = None) -> np.ndarray:
    """Primal vector from an SDPA result file (``xVec`` section) or bare numbers."""
    match = re.search(r"xVec\s*=\s*\{([^}]*)\}", text)
    body = match.group(1) if match else text
    try:
        x = np.array([float(t) for t in re.split(r"[\s,{}]+", body) if t], dtype=float)
    except ValueError as exc:
        raise SdpaParseError(f"malformed solution vector: {exc}", 0) from None
    if m is not None and x.size != m:
        raise SdpaParseError(f"solution has {x.size} entries, expected {m}", 0)
    return x
