# Copyright (c) 2020, ISACLAB DEVELOPERS.
"""
First-order solver for complex Hermitian semidefinite programs

    maximize    sum_b Re Tr(C_b X_b)
    subject to  l_i <= sum_b Re Tr(A_ib X_b) <= u_i
                X_b >= 0

The iteration splits the problem into an affine part (the constraint rows
together with the linear objective) and a cone part (one PSD cone per
block, one interval per row) and alternates projections onto both with
over-relaxation and an adaptive penalty. Every Hermitian block is carried
as a real vector with an isometric packing so that Frobenius inner
products are preserved.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from isaclab._lib import real_embedding
from isaclab.isaclab import SolverError

logger = logging.getLogger(__name__)

SENSES = ("=", "<=", ">=")
STATUSES = ("optimal", "infeasible", "max-iters")

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50000

_SQRT2 = math.sqrt(2.0)


def _hermitian(A, n, what):
    A = np.asarray(A, dtype=complex)
    if A.shape != (n, n):
        raise ValueError(f"{what} has shape {A.shape}, expected ({n}, {n})")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{what} is not finite")
    return 0.5 * (A + A.conj().T)


@dataclass
class SdpConstraint:
    coefficients: Tuple[Optional[np.ndarray], ...]
    sense: str
    rhs: float
    label: str = ""


class SdpProblem:
    """
    Blocks are declared up front; objective and constraint matrices are
    symmetrized when added. Blocks absent from a constraint contribute
    nothing.
    """

    def __init__(self, block_sizes):
        self.block_sizes = tuple(int(n) for n in block_sizes)
        if not self.block_sizes or min(self.block_sizes) < 1:
            raise ValueError(f"invalid block sizes {block_sizes}")
        self.objective = [None] * len(self.block_sizes)
        self.constraints: List[SdpConstraint] = []

    def _blocks(self, mats, what):
        out = [None] * len(self.block_sizes)
        for b, A in mats.items():
            out[b] = _hermitian(A, self.block_sizes[b], f"{what} block {b}")
        return tuple(out)

    def set_objective(self, block, C):
        self.objective[block] = _hermitian(
            C, self.block_sizes[block], f"objective block {block}"
        )

    def add_constraint(self, coefficients, sense, rhs, label=""):
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        if not math.isfinite(rhs):
            raise ValueError(f"constraint {label!r} has non-finite rhs")
        label = label or f"row{len(self.constraints)}"
        self.constraints.append(
            SdpConstraint(
                self._blocks(coefficients, label), sense, float(rhs), label
            )
        )

    @property
    def n_constraints(self):
        return len(self.constraints)

    def evaluate(self, blocks):
        """Returns (objective, row values) at the given block matrices."""
        obj = sum(
            np.trace(C @ X).real
            for C, X in zip(self.objective, blocks)
            if C is not None
        )
        rows = np.array(
            [
                sum(
                    np.trace(A @ X).real
                    for A, X in zip(c.coefficients, blocks)
                    if A is not None
                )
                for c in self.constraints
            ]
        )
        return float(obj), rows

    def bounds(self):
        lo = np.full(self.n_constraints, -np.inf)
        hi = np.full(self.n_constraints, np.inf)
        for i, c in enumerate(self.constraints):
            if c.sense in ("=", ">="):
                lo[i] = c.rhs
            if c.sense in ("=", "<="):
                hi[i] = c.rhs
        return lo, hi

    def violation(self, blocks):
        _, rows = self.evaluate(blocks)
        lo, hi = self.bounds()
        return np.maximum(np.maximum(lo - rows, rows - hi), 0.0)


@dataclass
class SdpSolution:
    blocks: List[np.ndarray]
    objective: float
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    rho: float = 1.0
    row_violation: np.ndarray = field(default=None, repr=False)


class _Packing:
    """Isometric real packing of Hermitian blocks."""

    def __init__(self, sizes):
        self.sizes = sizes
        self.slices = []
        self.upper = []
        start = 0
        for n in sizes:
            self.slices.append(slice(start, start + n * n))
            self.upper.append(np.triu_indices(n, 1))
            start += n * n
        self.dim = start

    def pack_block(self, b, X):
        iu = self.upper[b]
        off = X[iu]
        return np.concatenate(
            [np.diag(X).real, _SQRT2 * off.real, _SQRT2 * off.imag]
        )

    def unpack_block(self, b, v):
        n = self.sizes[b]
        iu = self.upper[b]
        p = len(iu[0])
        X = np.zeros((n, n), dtype=complex)
        X[np.diag_indices(n)] = v[:n]
        off = (v[n : n + p] + 1j * v[n + p :]) / _SQRT2
        X[iu] = off
        X[iu[1], iu[0]] = off.conj()
        return X

    def pack(self, blocks):
        v = np.zeros(self.dim)
        for b, X in enumerate(blocks):
            if X is not None:
                v[self.slices[b]] = self.pack_block(b, X)
        return v

    def unpack(self, v):
        return [
            self.unpack_block(b, v[s]) for b, s in enumerate(self.slices)
        ]

    def project_psd(self, v):
        out = np.empty_like(v)
        for b, s in enumerate(self.slices):
            if self.sizes[b] == 1:
                out[s] = max(v[s][0], 0.0)
                continue
            w, V = np.linalg.eigh(self.unpack_block(b, v[s]))
            X = (V * np.maximum(w, 0.0)) @ V.conj().T
            out[s] = self.pack_block(b, X)
        return out

    def max_eigenvalues(self, v):
        return [
            float(np.linalg.eigvalsh(self.unpack_block(b, v[s]))[-1])
            for b, s in enumerate(self.slices)
        ]


def _certifies_infeasibility(d, A, lo, hi, packing, eps=1e-6):
    scale = np.max(np.abs(d))
    if scale < 1e-12:
        return False
    d = d / scale
    pos = d > eps
    neg = d < -eps
    if np.any(pos & np.isinf(lo)) or np.any(neg & np.isinf(hi)):
        return False
    support = np.sum(d[pos] * lo[pos]) + np.sum(d[neg] * hi[neg])
    if support <= eps:
        return False
    return max(packing.max_eigenvalues(A.T @ d)) <= eps * 1e-2


def solve(
    problem,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
    warm_start=None,
    rho=1.0,
    alpha=1.6,
    check_every=10,
):
    """
    Solves ``problem``.

    Parameters
    ----------
    problem : SdpProblem
    tol : float, default 1e-6
        Relative tolerance on the primal and dual residuals.
    max_iter : int, default 50000
    warm_start : SdpSolution or list of ndarray, optional
        Initial block values.
    rho : float, default 1.0
        Initial penalty; adapted while iterating.
    alpha : float, default 1.6
        Over-relaxation factor in (0, 2).

    Returns
    -------
    SdpSolution
        ``status`` is "optimal" when both residuals are below tolerance,
        "infeasible" when the dual iterates certify that no PSD point meets
        the rows and "max-iters" otherwise. Returned blocks are always PSD.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    packing = _Packing(problem.block_sizes)
    c = packing.pack(problem.objective)
    lo, hi = problem.bounds()
    m = problem.n_constraints
    A = np.zeros((m, packing.dim))
    for i, con in enumerate(problem.constraints):
        A[i] = packing.pack(con.coefficients)

    # rows with no coefficients only need 0 in [lo, hi]
    norms = np.linalg.norm(A, axis=1)
    empty = norms == 0
    if np.any(empty & ((lo > 0) | (hi < 0))):
        bad = [problem.constraints[i].label for i in np.flatnonzero(empty)]
        logger.info("empty constraint rows cannot be met: %s", bad)
        zeros = [np.zeros((n, n), dtype=complex) for n in packing.sizes]
        return SdpSolution(zeros, 0.0, "infeasible", np.inf, np.inf, 0, rho)
    keep = ~empty
    A_s = A[keep] / norms[keep, None]
    lo_s = lo[keep] / norms[keep]
    hi_s = hi[keep] / norms[keep]
    c_norm = np.linalg.norm(c)
    c_s = c / c_norm if c_norm > 0 else c

    has_rows = A_s.shape[0] > 0
    if has_rows:
        factor = cho_factor(A_s @ A_s.T + np.eye(A_s.shape[0]))

    if warm_start is not None:
        blocks = getattr(warm_start, "blocks", warm_start)
        z_y = packing.project_psd(packing.pack(blocks))
    else:
        z_y = np.zeros(packing.dim)
    z_w = np.clip(A_s @ z_y, lo_s, hi_s) if has_rows else np.zeros(0)
    u_y = np.zeros_like(z_y)
    u_w = np.zeros_like(z_w)

    status = "max-iters"
    r_prim = r_dual = np.inf
    strikes = 0
    it = 0
    for it in range(1, max_iter + 1):
        p = z_y - u_y
        q = z_w - u_w
        if has_rows:
            mu = cho_solve(factor, A_s @ (p + c_s / rho) - q)
            y = p + c_s / rho - A_s.T @ mu
            w = q + mu
        else:
            y = p + c_s / rho
            w = q
        y_hat = alpha * y + (1 - alpha) * z_y
        w_hat = alpha * w + (1 - alpha) * z_w

        z_y_old, z_w_old, u_w_old = z_y, z_w, u_w
        z_y = packing.project_psd(y_hat + u_y)
        z_w = np.clip(w_hat + u_w, lo_s, hi_s)
        u_y = u_y + y_hat - z_y
        u_w = u_w + w_hat - z_w

        if not np.all(np.isfinite(z_y)):
            raise SolverError(f"non-finite iterate at iteration {it}")
        if it % check_every:
            continue

        r_prim = math.sqrt(
            np.sum((y - z_y) ** 2) + np.sum((w - z_w) ** 2)
        )
        r_dual = rho * math.sqrt(
            np.sum((z_y - z_y_old) ** 2) + np.sum((z_w - z_w_old) ** 2)
        )
        scale_p = max(
            math.sqrt(np.sum(y ** 2) + np.sum(w ** 2)),
            math.sqrt(np.sum(z_y ** 2) + np.sum(z_w ** 2)),
        )
        scale_d = rho * math.sqrt(np.sum(u_y ** 2) + np.sum(u_w ** 2))
        eps_p = tol * (1.0 + scale_p)
        eps_d = tol * (1.0 + scale_d)
        if r_prim <= eps_p and r_dual <= eps_d:
            status = "optimal"
            break

        if has_rows and it >= 50:
            d = rho * (u_w - u_w_old)
            if _certifies_infeasibility(
                d, A_s, lo_s, hi_s, packing
            ) or _certifies_infeasibility(-d, A_s, lo_s, hi_s, packing):
                strikes += 1
                if strikes >= 3:
                    status = "infeasible"
                    break
            else:
                strikes = 0

        ratio = (r_prim / eps_p) / max(r_dual / eps_d, 1e-300)
        if ratio > 10.0 and rho < 1e6:
            rho *= 2.0
            u_y, u_w = u_y / 2.0, u_w / 2.0
        elif ratio < 0.1 and rho > 1e-6:
            rho /= 2.0
            u_y, u_w = u_y * 2.0, u_w * 2.0

        if it % 1000 == 0:
            logger.debug(
                "sdp iter %d: primal %.3e dual %.3e rho %.3g",
                it,
                r_prim,
                r_dual,
                rho,
            )

    blocks = packing.unpack(z_y)
    objective, _ = problem.evaluate(blocks)
    violation = problem.violation(blocks)
    if status == "max-iters":
        logger.warning(
            "sdp stopped after %d iterations (primal %.3e, dual %.3e)",
            it,
            r_prim,
            r_dual,
        )
    else:
        logger.debug("sdp %s after %d iterations", status, it)
    return SdpSolution(
        blocks=blocks,
        objective=objective,
        status=status,
        primal_residual=r_prim,
        dual_residual=r_dual,
        iterations=it,
        rho=rho,
        row_violation=violation,
    )


def is_psd(X, rel_tol=1e-7):
    w = np.linalg.eigvalsh(X)
    return w[0] >= -rel_tol * max(abs(np.trace(X).real), 1e-300)


def hermitian_to_real_embedding(X):
    """[[Re X, -Im X], [Im X, Re X]] of a Hermitian matrix."""
    X = np.asarray(X, dtype=complex)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {X.shape}")
    if np.max(np.abs(X - X.conj().T), initial=0.0) > 1e-9:
        raise ValueError("matrix is not Hermitian")
    return real_embedding(np.ascontiguousarray(X))


def embed_problem(problem):
    """
    Real symmetric problem with the same optimal value: every block is
    doubled and every matrix replaced by half its real embedding.
    """
    out = SdpProblem([2 * n for n in problem.block_sizes])
    for b, C in enumerate(problem.objective):
        if C is not None:
            out.set_objective(b, 0.5 * hermitian_to_real_embedding(C))
    for con in problem.constraints:
        out.add_constraint(
            {
                b: 0.5 * hermitian_to_real_embedding(A)
                for b, A in enumerate(con.coefficients)
                if A is not None
            },
            con.sense,
            con.rhs,
            con.label,
        )
    return out


@dataclass(frozen=True, eq=False)
class RankOneResult:
    vector: np.ndarray
    eigenvalue: float
    defect: float


def _fix_phase(v):
    k = int(np.argmax(np.abs(v)))
    return v * np.exp(-1j * np.angle(v[k]))


def rank_one_recovery(Z, tie_tol=1e-9):
    """
    z = sqrt(lambda_1) u_1 from the principal eigenpair of Z, with the
    global phase fixed so that the largest-modulus entry is real positive.
    The defect 1 - lambda_1 / Tr(Z) is zero for rank-one input.

    When the top eigenvalue is repeated, the candidate with the
    lexicographically largest first nonzero real component wins.
    """
    Z = 0.5 * (np.asarray(Z, dtype=complex) + np.asarray(Z).conj().T)
    w, V = np.linalg.eigh(Z)
    trace = float(np.sum(np.maximum(w, 0.0)))
    if w[-1] <= 0 or trace <= 0:
        raise SolverError("rank-one recovery of a zero matrix")
    top = [
        i for i in range(len(w)) if w[-1] - w[i] <= tie_tol * max(w[-1], 1)
    ]
    candidates = [_fix_phase(V[:, i]) for i in top]

    def key(v):
        re = v.real
        nz = np.flatnonzero(np.abs(re) > 1e-12)
        return re[nz[0]] if nz.size else 0.0

    u = max(candidates, key=key) if len(candidates) > 1 else candidates[0]
    lam = float(w[-1])
    return RankOneResult(
        vector=math.sqrt(lam) * u, eigenvalue=lam, defect=1.0 - lam / trace
    )


def gaussian_randomization(Z, objective, project, rng, draws=100):
    """
    Draws z ~ CN(0, Z), maps every draw through ``project`` and keeps the
    one with the largest ``objective``. Returns (best vector, best value).
    """
    Z = 0.5 * (np.asarray(Z, dtype=complex) + np.asarray(Z).conj().T)
    w, V = np.linalg.eigh(Z)
    root = V * np.sqrt(np.maximum(w, 0.0))
    best, best_value = None, -np.inf
    n = Z.shape[0]
    for _ in range(draws):
        xi = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / _SQRT2
        candidate = project(root @ xi)
        value = objective(candidate)
        if value > best_value:
            best, best_value = candidate, value
    return best, best_value


# Plain-text interchange
#
#   SDP 1
#   BLOCKS <n_1> ... <n_B>
#   OBJECTIVE
#   <block matrices>
#   CONSTRAINT <sense> <rhs> <label>
#   <block matrices>
#
# Each block matrix is a line "BLOCK <b>" or "ZERO <b>", followed for
# nonzero blocks by n rows of 2n numbers (re im pairs, row-major).


def _write_blocks(out, mats, sizes):
    for b, n in enumerate(sizes):
        A = mats[b]
        if A is None:
            out.append(f"ZERO {b}")
            continue
        out.append(f"BLOCK {b}")
        for row in A:
            out.append(
                " ".join(f"{x.real:.17g} {x.imag:.17g}" for x in row)
            )


def dump_problem(problem, path):
    out = ["SDP 1", "BLOCKS " + " ".join(map(str, problem.block_sizes))]
    out.append("OBJECTIVE")
    _write_blocks(out, problem.objective, problem.block_sizes)
    for con in problem.constraints:
        out.append(f"CONSTRAINT {con.sense} {con.rhs:.17g} {con.label}")
        _write_blocks(out, con.coefficients, problem.block_sizes)
    with open(path, "w") as f:
        f.write("\n".join(out) + "\n")


def _read_blocks(lines, pos, sizes):
    mats = {}
    for b, n in enumerate(sizes):
        tag, idx = lines[pos].split()
        pos += 1
        if int(idx) != b or tag not in ("BLOCK", "ZERO"):
            raise ValueError(f"malformed block header {lines[pos - 1]!r}")
        if tag == "ZERO":
            continue
        rows = np.array(
            [[float(x) for x in lines[pos + i].split()] for i in range(n)]
        )
        mats[b] = rows[:, 0::2] + 1j * rows[:, 1::2]
        pos += n
    return mats, pos


def load_problem(path):
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if lines[0].split() != ["SDP", "1"]:
        raise ValueError("not an SDP problem file")
    sizes = [int(x) for x in lines[1].split()[1:]]
    problem = SdpProblem(sizes)
    if lines[2] != "OBJECTIVE":
        raise ValueError("missing OBJECTIVE section")
    mats, pos = _read_blocks(lines, 3, sizes)
    for b, C in mats.items():
        problem.set_objective(b, C)
    while pos < len(lines):
        parts = lines[pos].split(maxsplit=3)
        if parts[0] != "CONSTRAINT":
            raise ValueError(f"unexpected line {lines[pos]!r}")
        label = parts[3] if len(parts) > 3 else ""
        mats, pos = _read_blocks(lines, pos + 1, sizes)
        problem.add_constraint(mats, parts[1], float(parts[2]), label)
    return problem
