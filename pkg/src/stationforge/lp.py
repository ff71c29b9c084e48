"""Dense two-phase simplex solver, a brute-force vertex oracle and an LP dump format.

Problems are always minimizations::

    min  c'x   s.t.  A[i] x  (<= | = | >=)  b[i],   lo <= x <= hi

``lo`` may be ``-inf`` and ``hi`` may be ``+inf``. The solver converts to
standard form (shift/negate/split columns, upper bounds as rows, rows scaled
to unit max-norm and flipped to a non-negative right-hand side), runs phase one
on artificial variables and phase two on the true costs. Entering columns
follow Dantzig's rule until a run of degenerate pivots is seen, after which
the solver falls back to Bland's rule for the remainder of the phase.

Dual values follow the Lagrangian ``c'x - y'(Ax - b)``: ``y >= 0`` on ``>=``
rows, ``y <= 0`` on ``<=`` rows, free on equalities. ``reduced_costs`` are
``c - A'y``; they are the multipliers of the active variable bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Protocol, Sequence

import numpy as np

Sense = Literal["<=", "=", ">="]
Status = Literal["optimal", "infeasible", "unbounded"]

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
BLAND_PIVOT_TOL = 1e-10
DEGENERATE_RUN = 50


class NumericalBreakdown(RuntimeError):
    pass


class SizeLimit(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LinearProgram:
    c: np.ndarray
    A: np.ndarray
    senses: tuple[str, ...]
    b: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    row_names: tuple[str, ...] | None = None
    col_names: tuple[str, ...] | None = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        m = A.shape[0]
        b = np.asarray(self.b, dtype=float).ravel()
        lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        senses = tuple(self.senses)
        if b.size != m or len(senses) != m or lo.size != n or hi.size != n:
            raise ValueError("inconsistent LP dimensions")
        if any(s not in ("<=", "=", ">=") for s in senses):
            raise ValueError(f"unknown constraint sense in {set(senses)}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        if np.any(lo > hi) or np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValueError("variable bounds must satisfy lo <= hi")
        if self.row_names is not None and len(self.row_names) != m:
            raise ValueError("row_names length mismatch")
        if self.col_names is not None and len(self.col_names) != n:
            raise ValueError("col_names length mismatch")
        for name, val in (("c", c), ("A", A), ("b", b), ("lo", lo), ("hi", hi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "senses", senses)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    def row_name(self, i: int) -> str:
        return self.row_names[i] if self.row_names else f"r{i}"

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation (>= 0) at ``x``."""
        ax = self.A @ x
        v = np.zeros(self.n_rows)
        for i, s in enumerate(self.senses):
            if s == "<=":
                v[i] = max(0.0, ax[i] - self.b[i])
            elif s == ">=":
                v[i] = max(0.0, self.b[i] - ax[i])
            else:
                v[i] = abs(ax[i] - self.b[i])
        return v

    def is_feasible(self, x: np.ndarray, tol: float = FEAS_TOL) -> bool:
        scale = 1 + (np.abs(self.b).max() if self.n_rows else 0.0)
        bound_ok = np.all(x >= self.lo - tol * scale) and np.all(x <= self.hi + tol * scale)
        return bool(bound_ok and np.all(self.residuals(x) <= tol * scale))


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    infeasible_rows: list[str] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


class Solver(Protocol):
    def __call__(self, lp: LinearProgram) -> LpSolution: ...


# --------------------------------------------------------------------------
# standard form


@dataclass
class _StdForm:
    A: np.ndarray  # (m, n_std) scaled, rhs-non-negative rows
    b: np.ndarray
    c: np.ndarray
    kinds: list[str]  # per row: "<=", ">=", "="
    row_scale: np.ndarray  # original-row multiplier, sign included
    row_origin: list[tuple[str, int]]  # ("row", i) or ("bound", j)
    col_map: np.ndarray  # (n, n_std): x = offset + col_map @ x_std
    offset: np.ndarray


def _standard_form(lp: LinearProgram) -> _StdForm | LpSolution:
    n = lp.n_vars
    cols: list[tuple[int, float]] = []
    offset = np.zeros(n)
    bound_rows: list[tuple[int, float]] = []  # (std column, upper limit)
    for j in range(n):
        lo, hi = lp.lo[j], lp.hi[j]
        if lo == hi:
            offset[j] = lo  # fixed: no column at all
        elif np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                bound_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    n_std = len(cols)
    col_map = np.zeros((n, n_std))
    for k, (j, sgn) in enumerate(cols):
        col_map[j, k] = sgn

    A = lp.A @ col_map
    b = lp.b - lp.A @ offset
    kinds = list(lp.senses)
    origin: list[tuple[str, int]] = [("row", i) for i in range(lp.n_rows)]
    if bound_rows:
        extra = np.zeros((len(bound_rows), n_std))
        for r, (k, ub) in enumerate(bound_rows):
            extra[r, k] = 1.0
        A = np.vstack([A, extra])
        b = np.concatenate([b, [ub for _, ub in bound_rows]])
        kinds += ["<="] * len(bound_rows)
        origin += [("bound", cols[k][0]) for k, _ in bound_rows]

    norms = np.abs(A).max(axis=1) if A.size else np.zeros(len(kinds))
    keep, scale = [], []
    bad: list[str] = []
    for i, nrm in enumerate(norms):
        if nrm == 0.0:
            # empty row: 0 (sense) b must hold on its own
            ok = {"<=": b[i] >= -FEAS_TOL, ">=": b[i] <= FEAS_TOL, "=": abs(b[i]) <= FEAS_TOL}[kinds[i]]
            if not ok:
                bad.append(_origin_name(lp, origin[i]))
            continue
        s = 1.0 / nrm
        if b[i] * s < 0:
            s = -s
        keep.append(i)
        scale.append(s)
    if bad:
        return LpSolution("infeasible", infeasible_rows=bad)
    scale = np.asarray(scale)
    A = A[keep] * scale[:, None]
    b = b[keep] * scale
    flip = {"<=": ">=", ">=": "<=", "=": "="}
    kinds = [kinds[i] if s > 0 else flip[kinds[i]] for i, s in zip(keep, scale)]
    origin = [origin[i] for i in keep]
    return _StdForm(A, b, col_map.T @ lp.c, kinds, scale, origin, col_map, offset)


def _origin_name(lp: LinearProgram, origin: tuple[str, int]) -> str:
    kind, idx = origin
    if kind == "row":
        return lp.row_name(idx)
    name = lp.col_names[idx] if lp.col_names else f"x{idx}"
    return f"upper_bound[{name}]"


# --------------------------------------------------------------------------
# tableau simplex


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int], n_enterable: int):
        self.T = T
        self.basis = basis
        self.n_enterable = n_enterable  # columns >= this never enter
        self.iterations = 0

    @property
    def m(self) -> int:
        return self.T.shape[0] - 1

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        prow = T[r] / T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        T -= np.outer(col, prow)
        T[r] = prow
        self.basis[r] = c
        self.iterations += 1

    def run(self, max_iter: int) -> str:
        bland = False
        degenerate = 0
        T = self.T
        m = self.m
        while True:
            if self.iterations >= max_iter:
                raise NumericalBreakdown(f"simplex exceeded {max_iter} iterations")
            d = T[-1, : self.n_enterable]
            if bland:
                neg = np.flatnonzero(d < -OPT_TOL)
                if neg.size == 0:
                    return "optimal"
                c = int(neg[0])
            else:
                c = int(np.argmin(d))
                if d[c] >= -OPT_TOL:
                    return "optimal"
            col = T[:m, c]
            tol = BLAND_PIVOT_TOL if bland else PIVOT_TOL
            rows = np.flatnonzero(col > tol)
            if rows.size == 0:
                if not bland and np.any(col > BLAND_PIVOT_TOL):
                    bland = True
                    continue
                return "unbounded"
            rhs = np.maximum(T[rows, -1], 0.0)
            ratios = rhs / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * (1 + best)]
            if bland:
                r = int(min(ties, key=lambda i: self.basis[i]))
                if abs(col[r]) < BLAND_PIVOT_TOL:
                    raise NumericalBreakdown("pivot magnitude below 1e-10 under Bland's rule")
            else:
                r = int(ties[np.argmax(col[ties])])
            if best <= 1e-12:
                degenerate += 1
                if degenerate > DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
            self.pivot(r, c)


def simplex(lp: LinearProgram, max_iter: int | None = None) -> LpSolution:
    """Solve ``lp`` with the bundled two-phase dense tableau simplex."""
    sf = _standard_form(lp)
    if isinstance(sf, LpSolution):
        return sf
    m, n_std = sf.A.shape
    if max_iter is None:
        max_iter = 50 * (m + n_std) + 1000

    n_slack = sum(k != "=" for k in sf.kinds)
    needs_art = [i for i, k in enumerate(sf.kinds) if k in ("=", ">=")]
    n_art = len(needs_art)
    n_cols = n_std + n_slack + n_art
    T = np.zeros((m + 1, n_cols + 1))
    T[:m, :n_std] = sf.A
    T[:m, -1] = sf.b
    basis = [-1] * m
    s = n_std
    for i, k in enumerate(sf.kinds):
        if k == "<=":
            T[i, s] = 1.0
            basis[i] = s
            s += 1
        elif k == ">=":
            T[i, s] = -1.0
            s += 1
    for a, i in enumerate(needs_art):
        T[i, n_std + n_slack + a] = 1.0
        basis[i] = n_std + n_slack + a
    A0 = T[:m, :-1].copy()  # original standard-form matrix incl. slacks, for duals

    tab = _Tableau(T, basis, n_cols)
    art_start = n_std + n_slack
    if n_art:
        for i in needs_art:
            T[-1] -= T[i]
        T[-1, art_start:n_cols] = 0.0
        tab.run(max_iter)
        infeas = -T[-1, -1]
        if infeas > FEAS_TOL * (1 + np.abs(sf.b).max()):
            bad = [
                _origin_name(lp, sf.row_origin[i])
                for i, j in enumerate(tab.basis)
                if j >= art_start and T[i, -1] > FEAS_TOL
            ]
            return LpSolution("infeasible", iterations=tab.iterations, infeasible_rows=bad)
        # drive zero-level artificials out of the basis; drop redundant rows
        drop = []
        for i in range(m):
            if tab.basis[i] >= art_start:
                cand = np.flatnonzero(np.abs(T[i, :art_start]) > PIVOT_TOL)
                if cand.size:
                    tab.pivot(i, int(cand[np.argmax(np.abs(T[i, cand]))]))
                else:
                    drop.append(i)
        keep_rows = [i for i in range(m) if i not in set(drop)]
        T = np.vstack([T[keep_rows], T[-1:]])
        T = np.delete(T, np.s_[art_start:n_cols], axis=1)
        tab.T = T
        tab.basis = [tab.basis[i] for i in keep_rows]
        tab.n_enterable = art_start
    else:
        keep_rows = list(range(m))

    # phase two
    c_full = np.zeros(art_start)
    c_full[:n_std] = sf.c
    T[-1, :-1] = c_full
    T[-1, -1] = 0.0
    for i, j in enumerate(tab.basis):
        if c_full[j] != 0.0:
            T[-1] -= c_full[j] * T[i]
    status = tab.run(max_iter)
    if status == "unbounded":
        return LpSolution("unbounded", iterations=tab.iterations)

    x_std = np.zeros(art_start)
    x_std[tab.basis] = T[:-1, -1]
    x_std = np.maximum(x_std[:n_std], 0.0)
    x = sf.offset + sf.col_map @ x_std

    B = A0[np.ix_(keep_rows, tab.basis)]
    w_kept = np.linalg.solve(B.T, c_full[tab.basis])
    w = np.zeros(m)
    w[keep_rows] = w_kept
    y = np.zeros(lp.n_rows)
    for i, (kind, idx) in enumerate(sf.row_origin):
        if kind == "row":
            y[idx] = w[i] * sf.row_scale[i]
    reduced = lp.c - lp.A.T @ y
    return LpSolution("optimal", x, float(lp.c @ x), y, reduced, tab.iterations)


class SimplexSolver:
    """Bundled solver; callable so it can stand anywhere a ``Solver`` is expected."""

    def __init__(self, max_iter: int | None = None):
        self.max_iter = max_iter

    def __call__(self, lp: LinearProgram) -> LpSolution:
        return simplex(lp, self.max_iter)


class HighsSolver:
    """External solver behind the same seam (scipy's HiGHS)."""

    def __call__(self, lp: LinearProgram) -> LpSolution:
        from scipy.optimize import linprog

        ub = [i for i, s in enumerate(lp.senses) if s != "="]
        eq = [i for i, s in enumerate(lp.senses) if s == "="]
        sign = np.array([1.0 if lp.senses[i] == "<=" else -1.0 for i in ub])
        res = linprog(
            lp.c,
            A_ub=lp.A[ub] * sign[:, None] if ub else None,
            b_ub=lp.b[ub] * sign if ub else None,
            A_eq=lp.A[eq] if eq else None,
            b_eq=lp.b[eq] if eq else None,
            bounds=list(zip(np.where(np.isfinite(lp.lo), lp.lo, None), np.where(np.isfinite(lp.hi), lp.hi, None))),
            method="highs",
        )
        if res.status == 2:
            # presolve may not separate infeasible from unbounded; settle it with c = 0
            if np.any(lp.c) and self(LinearProgram(np.zeros_like(lp.c), lp.A, lp.senses, lp.b, lp.lo, lp.hi)).optimal:
                return LpSolution("unbounded")
            return LpSolution("infeasible")
        if res.status == 3:
            return LpSolution("unbounded")
        if res.status != 0:
            raise NumericalBreakdown(res.message)
        y = np.zeros(lp.n_rows)
        if ub:
            # scipy reports marginals of the <= form; our sign convention is the reverse
            y[ub] = res.ineqlin.marginals * sign
        if eq:
            y[eq] = res.eqlin.marginals
        return LpSolution("optimal", res.x, float(res.fun), y, lp.c - lp.A.T @ y, int(res.nit))


DEFAULT_SOLVER: Solver = SimplexSolver()


def solve(lp: LinearProgram, solver: Solver | None = None) -> LpSolution:
    return (solver or DEFAULT_SOLVER)(lp)


# --------------------------------------------------------------------------
# brute-force oracle

MAX_ORACLE_VARS = 10
MAX_ORACLE_ROWS = 16


def enumerate_vertices(lp: LinearProgram, box: float = 1e6, chunk: int = 20000) -> LpSolution:
    """Optimum by enumerating every basic solution (small LPs only).

    Infinite bounds are replaced by ``|x_j| <= box``. When the best vertex sits
    on an artificial box face the enumeration is repeated with a 100x larger
    box; an improving objective means the LP is unbounded.
    """
    n, m = lp.n_vars, lp.n_rows
    if n > MAX_ORACLE_VARS or m > MAX_ORACLE_ROWS:
        raise SizeLimit(f"oracle handles at most {MAX_ORACLE_VARS} vars and {MAX_ORACLE_ROWS} rows")
    best = _best_vertex(lp, box, chunk)
    if best is None:
        return LpSolution("infeasible")
    val, x, on_box = best
    if on_box:
        val2, _, _ = _best_vertex(lp, box * 100, chunk)
        if val2 < val - 1e-6 * (1 + abs(val)):
            return LpSolution("unbounded")
    return LpSolution("optimal", x, val)


def _best_vertex(lp: LinearProgram, box: float, chunk: int):
    n, m = lp.n_vars, lp.n_rows
    E, f, G, h, is_box = [], [], [], [], []
    for i, s in enumerate(lp.senses):
        if s == "=":
            E.append(lp.A[i])
            f.append(lp.b[i])
        else:
            sgn = 1.0 if s == "<=" else -1.0
            G.append(sgn * lp.A[i])
            h.append(sgn * lp.b[i])
            is_box.append(False)
    eye = np.eye(n)
    for j in range(n):
        G.append(-eye[j])
        h.append(-lp.lo[j] if np.isfinite(lp.lo[j]) else box)
        is_box.append(not np.isfinite(lp.lo[j]))
        G.append(eye[j])
        h.append(lp.hi[j] if np.isfinite(lp.hi[j]) else box)
        is_box.append(not np.isfinite(lp.hi[j]))
    E = np.array(E).reshape(-1, n)
    f = np.array(f)
    G, h, is_box = np.array(G), np.array(h), np.array(is_box)
    if E.shape[0]:
        # keep a row basis of the equalities; the rest must be implied by it
        indep: list[int] = []
        for i in range(E.shape[0]):
            if np.linalg.matrix_rank(E[indep + [i]], tol=1e-9) > len(indep):
                indep.append(i)
        sol, *_ = np.linalg.lstsq(E[indep], f[indep], rcond=None)
        if E.shape[0] > len(indep) and not np.allclose(E @ sol, f, atol=1e-9):
            # implied rows must be consistent along the whole affine set
            proj = np.linalg.lstsq(E[indep].T, E.T, rcond=None)[0]
            if not np.allclose(proj.T @ f[indep], f, atol=1e-9):
                return None
        E, f = E[indep], f[indep]
    k = n - E.shape[0]

    best_val, best_x = math.inf, None
    scale = 1 + max(np.abs(lp.b).max() if m else 0.0, box)
    combos = itertools.combinations(range(G.shape[0]), k)
    while True:
        batch = list(itertools.islice(combos, chunk))
        if not batch:
            break
        idx = np.array(batch, dtype=int).reshape(len(batch), k)
        M = np.concatenate([np.broadcast_to(E, (len(batch),) + E.shape), G[idx]], axis=1)
        rhs = np.concatenate([np.broadcast_to(f, (len(batch), f.size)), h[idx]], axis=1)
        norms = np.linalg.norm(M, axis=2, keepdims=True)
        norms[norms == 0] = 1.0
        ok = np.abs(np.linalg.det(M / norms)) > 1e-9
        if not ok.any():
            continue
        X = np.linalg.solve(M[ok], rhs[ok][..., None])[..., 0]
        feas = np.all(X @ G.T <= h + 1e-9 * scale, axis=1)
        if E.size:
            feas &= np.all(np.abs(X @ E.T - f) <= 1e-9 * scale, axis=1)
        if not feas.any():
            continue
        vals = X[feas] @ lp.c
        j = int(np.argmin(vals))
        if vals[j] < best_val - 1e-12:
            best_val, best_x = float(vals[j]), X[feas][j]
    if best_x is None:
        return None
    on_box = bool(np.any(np.abs(G[is_box] @ best_x - h[is_box]) <= 1e-7 * box))
    return best_val, best_x, on_box


# --------------------------------------------------------------------------
# plain-text dump


def dump_lp(lp: LinearProgram, path: str | Path | None = None) -> str:
    """Fixed-layout text form; see README for the grammar."""
    fmt = repr
    lines = [f"LP {lp.n_vars} {lp.n_rows}"]
    lines.append("min " + " ".join(fmt(float(v)) for v in lp.c))
    lines.append("lo " + " ".join(fmt(float(v)) for v in lp.lo))
    lines.append("hi " + " ".join(fmt(float(v)) for v in lp.hi))
    for i in range(lp.n_rows):
        coeffs = " ".join(fmt(float(v)) for v in lp.A[i])
        lines.append(f"row {lp.row_name(i)} {coeffs} {lp.senses[i]} {fmt(float(lp.b[i]))}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def load_lp(text: str) -> LinearProgram:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "LP":
        raise ValueError("not an LP dump")
    n, m = int(head[1]), int(head[2])

    def floats(line: str, tag: str) -> list[float]:
        parts = line.split()
        if parts[0] != tag:
            raise ValueError(f"expected {tag!r} line, got {parts[0]!r}")
        return [float(v) for v in parts[1:]]

    c = floats(lines[1], "min")
    lo = floats(lines[2], "lo")
    hi = floats(lines[3], "hi")
    A, senses, b, names = [], [], [], []
    for ln in lines[4 : 4 + m]:
        parts = ln.split()
        if parts[0] != "row" or len(parts) != n + 4:
            raise ValueError(f"malformed row line: {ln!r}")
        names.append(parts[1])
        A.append([float(v) for v in parts[2 : 2 + n]])
        senses.append(parts[2 + n])
        b.append(float(parts[3 + n]))
    return LinearProgram(np.array(c), np.array(A).reshape(m, n), tuple(senses), np.array(b), np.array(lo), np.array(hi), tuple(names))


def lp_from_rows(
    n: int,
    rows: Sequence[tuple[dict[int, float], str, float, str]],
    c: Sequence[float],
    lo: Sequence[float] | None = None,
    hi: Sequence[float] | None = None,
    col_names: Sequence[str] | None = None,
) -> LinearProgram:
    """Build an LP from sparse row dictionaries ``({col: coeff}, sense, rhs, name)``."""
    A = np.zeros((len(rows), n))
    for i, (coeffs, _, _, _) in enumerate(rows):
        for j, v in coeffs.items():
            A[i, j] += v
    return LinearProgram(
        np.asarray(c, dtype=float),
        A,
        tuple(r[1] for r in rows),
        np.array([r[2] for r in rows], dtype=float),
        None if lo is None else np.asarray(lo, dtype=float),
        None if hi is None else np.asarray(hi, dtype=float),
        tuple(r[3] for r in rows),
        None if col_names is None else tuple(col_names),
    )

