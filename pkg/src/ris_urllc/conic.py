"""Small dense conic solver based on operator splitting (ADMM).

Problems take the standard form

    minimize    c^T x + offset
    subject to  b - A x = s,   s in K

where ``K`` is a Cartesian product of zero cones, nonnegative orthants,
second-order cones and (real symmetric or complex Hermitian) PSD cones.
PSD blocks are stored as scaled vectorizations (see :func:`hvec`) so the
Euclidean inner product of two vectors equals the trace inner product of
the matrices they represent.

The dual problem is

    maximize    -b^T lam + offset
    subject to  c + A^T lam = 0,   lam in K*

The iteration follows the splitting used by OSQP/COSMO: each step solves
one linear system with a cached Cholesky factor, projects onto ``K`` and
updates the multipliers. Data are Ruiz-equilibrated before iterating and
the step size ``rho`` is adapted from the primal/dual residual balance.
All linear algebra is dense, which is appropriate for the few-hundred
variable problems produced by the beamforming SCA.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from . import _kernels

SQRT2 = np.sqrt(2.0)


class ConeKind(enum.Enum):
    ZERO = "zero"
    NONNEG = "nonneg"
    SOC = "soc"
    PSD = "psd"


@dataclass(frozen=True)
class Cone:
    """One factor of the cone product.

    ``size`` is the vector length for ZERO/NONNEG/SOC and the matrix order
    for PSD.
    """

    kind: ConeKind
    size: int
    complex: bool = False

    @property
    def dim(self) -> int:
        if self.kind is ConeKind.PSD:
            n = self.size
            return n * n if self.complex else n * (n + 1) // 2
        return self.size


def zero_cone(m: int) -> Cone:
    return Cone(ConeKind.ZERO, m)


def nonneg_cone(m: int) -> Cone:
    return Cone(ConeKind.NONNEG, m)


def soc_cone(m: int) -> Cone:
    if m < 1:
        raise ValueError("second-order cone needs dimension >= 1")
    return Cone(ConeKind.SOC, m)


def psd_cone(n: int, complex: bool = True) -> Cone:
    return Cone(ConeKind.PSD, n, complex)


class Status(enum.Enum):
    OPTIMAL = "optimal"
    MAX_ITERS = "max_iters"
    INFEASIBLE = "infeasible"


# ---------------------------------------------------------------------------
# matrix <-> vector maps for PSD blocks


def hvec_dim(n: int, complex: bool = True) -> int:
    return n * n if complex else n * (n + 1) // 2


def hvec(X: np.ndarray) -> np.ndarray:
    """Scaled vectorization of a Hermitian (or real symmetric) matrix.

    Layout: the ``n`` diagonal entries, then ``sqrt(2) Re X[i, j]`` for the
    strict upper triangle in row-major order, then (complex case only)
    ``sqrt(2) Im X[i, j]`` in the same order. The scaling makes
    ``hvec(A) @ hvec(B) == Re tr(A B)`` for Hermitian ``A, B``.
    """
    X = np.asarray(X)
    n = X.shape[0]
    iu = np.triu_indices(n, 1)
    diag = np.real(np.diagonal(X))
    off = X[iu]
    if np.iscomplexobj(X):
        return np.concatenate([diag, SQRT2 * off.real, SQRT2 * off.imag])
    return np.concatenate([diag, SQRT2 * off])


def hmat(v: np.ndarray, n: int, complex: bool = True) -> np.ndarray:
    """Inverse of :func:`hvec`."""
    v = np.asarray(v, dtype=float)
    iu = np.triu_indices(n, 1)
    p = len(iu[0])
    if complex:
        X = np.zeros((n, n), dtype=np.complex128)
        off = (v[n:n + p] + 1j * v[n + p:n + 2 * p]) / SQRT2
    else:
        X = np.zeros((n, n))
        off = v[n:n + p] / SQRT2
    X[np.diag_indices(n)] = v[:n]
    X[iu] = off
    X[iu[1], iu[0]] = np.conj(off)
    return X


def hvec_basis(n: int, complex: bool = True) -> np.ndarray:
    """Matrices ``E_i`` with ``hmat(v) = sum_i v_i E_i``, shape (dim, n, n)."""
    dim = hvec_dim(n, complex)
    return np.stack([hmat(np.eye(dim)[i], n, complex) for i in range(dim)])


# ---------------------------------------------------------------------------
# projections


def psd_project(A: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix to the Hermitian part of ``A``."""
    A = np.asarray(A)
    H = 0.5 * (A + A.conj().T)
    w, U = np.linalg.eigh(H)
    return (U * np.maximum(w, 0.0)) @ U.conj().T


def soc_project(t: float, x: np.ndarray) -> tuple[float, np.ndarray]:
    """Euclidean projection of ``(t, x)`` onto ``{(t, x): ||x|| <= t}``."""
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx <= t:
        return float(t), x.copy()
    if nx <= -t:
        return 0.0, np.zeros_like(x)
    a = 0.5 * (t + nx)
    return float(a), (a / nx) * x


def _soc_project_batch(Z: np.ndarray) -> np.ndarray:
    """Row-wise SOC projection of a (count, dim) array."""
    t = Z[:, 0]
    x = Z[:, 1:]
    nx = np.linalg.norm(x, axis=1)
    out = Z.copy()
    polar = nx <= -t
    out[polar] = 0.0
    bnd = (nx > np.abs(t))
    if np.any(bnd):
        a = 0.5 * (t[bnd] + nx[bnd])
        out[bnd, 0] = a
        out[bnd, 1:] = x[bnd] * (a / nx[bnd])[:, None]
    return out


class _PsdBlock:
    def __init__(self, n: int, complex: bool):
        self.n = n
        self.complex = complex
        self.iu = np.triu_indices(n, 1)
        self.p = len(self.iu[0])
        self.di = np.diag_indices(n)

    def to_mat(self, v):
        n, p = self.n, self.p
        if self.complex:
            X = np.empty((n, n), dtype=np.complex128)
            off = (v[n:n + p] + 1j * v[n + p:]) * (1.0 / SQRT2)
        else:
            X = np.empty((n, n))
            off = v[n:] * (1.0 / SQRT2)
        X[self.di] = v[:n]
        X[self.iu] = off
        X[self.iu[1], self.iu[0]] = off.conj()
        return X

    def to_vec(self, X, out):
        n, p = self.n, self.p
        out[:n] = X[self.di].real
        off = X[self.iu]
        if self.complex:
            out[n:n + p] = SQRT2 * off.real
            out[n + p:] = SQRT2 * off.imag
        else:
            out[n:] = SQRT2 * off

    def project(self, v, out):
        X = self.to_mat(v)
        w, U = np.linalg.eigh(X)
        if w[0] >= 0.0:
            out[:] = v
            return
        self.to_vec((U * np.maximum(w, 0.0)) @ U.conj().T, out)

    def dist_dual(self, v):
        w = np.linalg.eigh(self.to_mat(v))[0]
        return float(np.linalg.norm(np.minimum(w, 0.0)))


class _ConeMap:
    """Precomputed projection plan for a cone product."""

    def __init__(self, cones: Sequence[Cone]):
        self.cones = list(cones)
        self.dim = sum(c.dim for c in self.cones)
        self.blocks = []  # (kind, start, stop, payload)
        self.zero_mask = np.zeros(self.dim, dtype=bool)
        self.nonneg_mask = np.zeros(self.dim, dtype=bool)
        pos = 0
        i = 0
        cones = self.cones
        while i < len(cones):
            c = cones[i]
            d = c.dim
            if c.kind is ConeKind.ZERO:
                self.zero_mask[pos:pos + d] = True
            elif c.kind is ConeKind.NONNEG:
                self.nonneg_mask[pos:pos + d] = True
            elif c.kind is ConeKind.SOC:
                # merge runs of equal-dimension SOCs into one batched block
                j = i
                while (j + 1 < len(cones) and cones[j + 1].kind is ConeKind.SOC
                       and cones[j + 1].size == c.size):
                    j += 1
                count = j - i + 1
                self.blocks.append(("soc", pos, pos + count * d, (count, d)))
                pos += count * d
                i = j + 1
                continue
            else:
                self.blocks.append(("psd", pos, pos + d, _PsdBlock(c.size, c.complex)))
            pos += d
            i += 1
        # flat tables for the compiled kernels
        self.kind = np.full(self.dim, 2, dtype=np.int64)
        self.kind[self.zero_mask] = 0
        self.kind[self.nonneg_mask] = 1
        soc_rows, psd_rows = [], []
        for kind, a, b, payload in self.blocks:
            if kind == "soc":
                soc_rows.append((a, payload[0], payload[1]))
            else:
                psd_rows.append((a, payload.n, int(payload.complex)))
        self.soc_table = np.array(soc_rows, dtype=np.int64).reshape(-1, 3)
        self.psd_table = np.array(psd_rows, dtype=np.int64).reshape(-1, 3)
        # rows that must share one scaling factor
        self.groups = []
        self.group_id = np.full(self.dim, -1, dtype=np.int64)
        pos = 0
        for c in self.cones:
            if c.kind in (ConeKind.SOC, ConeKind.PSD):
                self.group_id[pos:pos + c.dim] = len(self.groups)
                self.groups.append((pos, pos + c.dim))
            pos += c.dim

    def project(self, z: np.ndarray) -> np.ndarray:
        z = np.ascontiguousarray(z, dtype=float)
        out = np.empty_like(z)
        _kernels.project(z, out, self.kind, self.soc_table, self.psd_table)
        return out

    def dual_distance(self, lam: np.ndarray) -> float:
        """Distance of ``lam`` from the dual cone (zero rows are free)."""
        acc = np.sum(np.minimum(lam[self.nonneg_mask], 0.0) ** 2)
        for kind, a, b, payload in self.blocks:
            z = lam[a:b]
            if kind == "soc":
                count, d = payload
                Z = z.reshape(count, d)
                acc += np.sum((Z - _soc_project_batch(Z)) ** 2)
            else:
                acc += payload.dist_dual(z) ** 2
        return float(np.sqrt(acc))


# ---------------------------------------------------------------------------
# problem / solution containers


@dataclass
class ConicSolution:
    primal: np.ndarray
    slack: np.ndarray
    dual: np.ndarray
    objective_value: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    status: Status
    iterations: int = 0
    rho: float = 1.0  # final step size, reused by warm starts

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class ConicProblem:
    """Linear objective over ``b - A x`` constrained to a cone product."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cones: list
    offset: float = 0.0
    warm_start: Optional[ConicSolution] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        if sp.issparse(self.A):
            self.A = self.A.toarray()
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        m, n = self.A.shape
        if n != self.c.size:
            raise ValueError(f"A has {n} columns but c has length {self.c.size}")
        if m != self.b.size:
            raise ValueError(f"A has {m} rows but b has length {self.b.size}")
        total = sum(cone.dim for cone in self.cones)
        if total != m:
            raise ValueError(f"cone dimensions sum to {total}, A has {m} rows")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    @classmethod
    def from_blocks(cls, c, blocks, offset: float = 0.0, warm_start=None):
        """Stack ``(A_i, b_i, cone_i)`` constraint blocks."""
        A = np.vstack([np.atleast_2d(np.asarray(blk[0], dtype=float)) for blk in blocks])
        b = np.concatenate([np.atleast_1d(np.asarray(blk[1], dtype=float)) for blk in blocks])
        cones = [blk[2] for blk in blocks]
        return cls(c, A, b, cones, offset, warm_start)


@dataclass
class SolverSettings:
    tol: float = 1e-7
    max_iters: int = 50_000
    alpha: float = 1.6
    sigma: float = 1e-6
    rho: float = 1.0
    rho_eq_scale: float = 1e3
    adaptive_rho: bool = True
    adapt_interval: int = 25
    check_interval: int = 5
    scaling_iters: int = 25
    infeas_tol: float = 1e-6
    anderson_mem: int = 20


# ---------------------------------------------------------------------------
# equilibration


def _ruiz(A, c, cmap: _ConeMap, iters: int):
    D, E = _kernels.ruiz_scalings(np.abs(A), cmap.group_id, iters)
    Ah = (E[:, None] * A) * D[None, :]
    ch = D * c
    cnorm = np.max(np.abs(ch)) if ch.size else 0.0
    kappa = 1.0 / cnorm if cnorm > 1e-6 else 1.0
    kappa = float(np.clip(kappa, 1e-4, 1e4))
    return Ah, D, E, kappa


class _Anderson:
    """Type-II Anderson extrapolation over a ring buffer of differences."""

    def __init__(self, mem: int, dim: int):
        self.mem = mem
        self.dU = np.zeros((mem, dim))
        self.dG = np.zeros((mem, dim))
        self.gram = np.zeros((mem, mem))
        self.reset()

    def reset(self):
        self.prev = None
        self.count = 0
        self.head = 0

    def update(self, u: np.ndarray, g: np.ndarray):
        """Return the extrapolated point, or None while the memory is empty."""
        if self.prev is not None:
            pu, pg = self.prev
            j = self.head
            self.dU[j] = u - pu
            self.dG[j] = g - pg
            self.head = (j + 1) % self.mem
            self.count = min(self.count + 1, self.mem)
            row = self.dG[:self.count] @ self.dG[j]
            self.gram[j, :self.count] = row
            self.gram[:self.count, j] = row
        self.prev = (u, g)
        k = self.count
        if k == 0:
            return None
        gram = self.gram[:k, :k]
        reg = 1e-10 * max(np.trace(gram), 1e-30)
        try:
            gamma = np.linalg.solve(gram + reg * np.eye(k), self.dG[:k] @ g)
        except np.linalg.LinAlgError:
            self.reset()
            return None
        new = u + g - gamma @ (self.dU[:k] + self.dG[:k])
        if not np.all(np.isfinite(new)):
            self.reset()
            return None
        return new


# ---------------------------------------------------------------------------
# the solver


def _inf(v):
    return float(np.max(np.abs(v))) if v.size else 0.0


def solve(problem: ConicProblem, tol: float = 1e-7, max_iters: int = 50_000,
          settings: Optional[SolverSettings] = None) -> ConicSolution:
    """Solve ``problem`` to relative accuracy ``tol``.

    Convergence requires all three relative measures below ``tol``:

    * primal: ``||A x + s - b||_inf / (1 + max(||A x||, ||s||, ||b||))``
    * dual: ``||c + A^T lam||_inf / (1 + max(||A^T lam||, ||c||))``
    * gap: ``|c^T x + b^T lam| / (1 + |c^T x| + |b^T lam|)``

    Returns the last iterate with status MAX_ITERS if the budget runs
    out, or a Farkas-type certificate in ``dual`` (with ``A^T lam ~ 0``,
    ``lam`` in K*, ``b^T lam < 0``) and status INFEASIBLE.
    """
    st = settings or SolverSettings()
    st = SolverSettings(**{**st.__dict__, "tol": tol, "max_iters": max_iters})
    A, b, c = problem.A, problem.b, problem.c
    m, n = A.shape
    cmap = _ConeMap(problem.cones)

    Ah, D, E, kappa = _ruiz(A, c, cmap, st.scaling_iters)
    bh = E * b
    ch = kappa * D * c

    # warm start, mapped into scaled coordinates
    rho_base = st.rho
    ws = problem.warm_start
    if ws is not None and ws.primal.shape == (n,) and ws.slack.shape == (m,):
        x = ws.primal / D
        s = cmap.project(E * ws.slack)
        y = -kappa * ws.dual / E
        rho_base = float(np.clip(ws.rho, 1e-6, 1e6))
    else:
        x = np.zeros(n)
        s = np.zeros(m)
        y = np.zeros(m)

    eq = cmap.zero_mask

    def rho_vec(r):
        rv = np.full(m, float(r))
        rv[eq] *= st.rho_eq_scale
        return rv

    def factor(rv):
        Kmat = (Ah.T * rv) @ Ah
        Kmat[np.diag_indices(n)] += st.sigma
        fac = sla.cho_factor(Kmat, check_finite=False)
        return sla.cho_solve(fac, np.eye(n), check_finite=False)

    rv = rho_vec(rho_base)
    Kinv = factor(rv)
    alpha, sigma = st.alpha, st.sigma
    AhT = Ah.T.copy()

    use_aa = st.anderson_mem > 0
    mem = max(st.anderson_mem, 1)
    dim = n + m
    dU = np.zeros((mem, dim))
    dG = np.zeros((mem, dim))
    gram = np.zeros((mem, mem))
    prev_u = np.zeros(dim)
    prev_g = np.zeros(dim)
    meta = np.zeros(3, dtype=np.int64)  # has_prev, count, head
    safe_u = np.zeros(dim)
    safe_meta = np.zeros(2)  # valid, residual norm
    u1 = np.zeros(dim)
    y0 = np.zeros(m)
    kind, soc_tab, psd_tab = cmap.kind, cmap.soc_table, cmap.psd_table

    u = np.concatenate([x, s + y / rv])
    status = Status.MAX_ITERS
    it = 0
    res = None
    cert = None
    while it < st.max_iters:
        steps = min(st.check_interval, st.max_iters - it)
        _kernels.run_block(u, steps, n, Ah, AhT, Kinv, bh, ch, rv, sigma, alpha,
                           kind, soc_tab, psd_tab, use_aa, dU, dG, gram, prev_u,
                           prev_g, meta, safe_u, safe_meta, u1, y0)
        it += steps
        adapt = st.adaptive_rho and it % st.adapt_interval < steps

        x = u1[:n]
        s = cmap.project(u1[n:])
        y = rv * (u1[n:] - s)
        dy = y - y0
        # unscaled iterate
        xu = D * x
        su = s / E
        lam = -(E * y) / kappa
        Ax = A @ xu
        ATl = A.T @ lam
        rp = _inf(Ax + su - b)
        rd = _inf(c + ATl)
        pobj = float(c @ xu)
        dobj = float(-b @ lam)
        rp_rel = rp / (1.0 + max(_inf(Ax), _inf(su), _inf(b)))
        rd_rel = rd / (1.0 + max(_inf(ATl), _inf(c)))
        gap_rel = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        res = (xu, su, lam, pobj, dobj, rp_rel, rd_rel, gap_rel)
        if rp_rel <= st.tol and rd_rel <= st.tol and gap_rel <= st.tol:
            status = Status.OPTIMAL
            break

        # primal infeasibility: multiplier change of a plain ADMM pass
        dlam = -(E * dy) / kappa
        nd = _inf(dlam)
        if nd > 1e-12:
            d = dlam / nd
            bd = float(b @ d)
            if (bd < -st.infeas_tol
                    and _inf(A.T @ d) <= st.infeas_tol * max(1.0, -bd)
                    and cmap.dual_distance(d) <= st.infeas_tol):
                status = Status.INFEASIBLE
                cert = d
                break

        if adapt:
            Axh = Ah @ x
            ATy = AhT @ y
            num = _inf(Axh + s - bh) / max(_inf(Axh), _inf(s), _inf(bh), 1e-12)
            den = _inf(ch - ATy) / max(_inf(ATy), _inf(ch), 1e-12)
            if den > 1e-14 and num > 1e-14:
                ratio = np.sqrt(num / den)
                if ratio > 5.0 or ratio < 0.2:
                    rho_base = float(np.clip(rho_base * ratio, 1e-6, 1e6))
                    rv = rho_vec(rho_base)
                    Kinv = factor(rv)
                    # restart from the last plain iterate under the new rho
                    u = np.concatenate([x, s + y / rv])
                    meta[:] = 0
                    safe_meta[0] = 0.0

    xu, su, lam, pobj, dobj, rp_rel, rd_rel, gap_rel = res
    if status is Status.INFEASIBLE:
        lam = cert
    return ConicSolution(
        primal=xu,
        slack=su,
        dual=lam,
        objective_value=pobj + problem.offset,
        dual_objective=dobj + problem.offset,
        primal_residual=rp_rel,
        dual_residual=rd_rel,
        gap=gap_rel,
        status=status,
        iterations=it,
        rho=rho_base,
    )
