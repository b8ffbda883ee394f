"""Penalized successive convex approximation for joint AP/RIS beamforming.

The stage-one SNR of actuator ``k`` is lifted to ``tr(W R_k V R_k^H)`` with
``W = w w^H`` and ``V = v v^H``. Each iteration solves a convex program in
``(q, W, V)``:

    minimize   sum(q) + a (tr W - f_w(W)) + b (tr V - f_v(V)) + Xi(q)
    subject to 0.5 (f_k(W, V) - ||W||_F^2 - ||R_k V R_k^H||_F^2) + q_k >= gamma_th
               q >= 0,  tr W <= P_max,  W, V PSD,  diag(V) = 1

where ``f_k``, ``f_w``, ``f_v`` and the l2 part of ``Xi`` are first-order
expansions at the previous iterate. Squared Frobenius norms enter through
epigraph variables held in rotated second-order cones.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import conic
from .channel import ChannelRealization
from .conic import ConicProblem, ConicSolution, Status, hmat, hvec, hvec_basis

log = logging.getLogger(__name__)

Q_FLOOR = 1e-6
_Q_NORM_EPS = 1e-12


class SolverFailure(RuntimeError):
    pass


@dataclass
class ScaState:
    W: np.ndarray
    V: np.ndarray
    q: np.ndarray
    iteration: int = 0
    objective_trace: list = field(default_factory=list)


@dataclass
class BeamformingSolution:
    w: np.ndarray
    phases: np.ndarray
    W: np.ndarray
    V: np.ndarray
    q: np.ndarray
    snr_stage1: np.ndarray
    converged: bool
    iterations: int
    gamma_th: float = float("nan")
    objective_trace: list = field(default_factory=list)
    solver_iterations: int = 0

    @property
    def power(self) -> float:
        return float(np.real(np.trace(self.W)))


@dataclass(frozen=True)
class Affine:
    """``value(X) = const + <coef, X>`` on Hermitian matrices or vectors."""

    coef: np.ndarray
    const: float

    def __call__(self, X) -> float:
        return float(self.const + np.real(np.vdot(self.coef, X)))


@dataclass(frozen=True)
class LinearizedFk:
    """First-order expansion of ``||W + R V R^H||_F^2``."""

    coef_w: np.ndarray
    coef_v: np.ndarray
    const: float

    def __call__(self, W, V) -> float:
        return float(self.const + np.real(np.vdot(self.coef_w, W) + np.vdot(self.coef_v, V)))


# ---------------------------------------------------------------------------
# SNR forms


def build_r(channels: ChannelRealization, k: int) -> np.ndarray:
    """``R_k = [F^H diag(g_bar_k), h_bar_k]``, shape (Nt, M + 1)."""
    F, g_bar, h_bar = channels.F, channels.g_bar[k], channels.h_bar[k]
    if F.shape[0] != g_bar.shape[0] or F.shape[1] != h_bar.shape[0]:
        raise ValueError(f"inconsistent shapes F{F.shape}, g{g_bar.shape}, h{h_bar.shape}")
    return np.column_stack([F.conj().T * g_bar[None, :], h_bar])


def build_all_r(channels: ChannelRealization) -> np.ndarray:
    return np.stack([build_r(channels, k) for k in range(channels.n_act)])


def snr_trace_form(W, V, R) -> float:
    return float(np.real(np.trace(W @ R @ V @ R.conj().T)))


def snr_frobenius_form(W, V, R) -> float:
    B = R @ V @ R.conj().T
    fro2 = lambda X: float(np.real(np.vdot(X, X)))
    return 0.5 * (fro2(W + B) - fro2(W) - fro2(B))


def phase_vector(phases: np.ndarray) -> np.ndarray:
    """Lifted RIS vector ``v = [conj(phi_1), ..., conj(phi_M), 1]``."""
    return np.append(np.exp(-1j * np.asarray(phases, dtype=float)), 1.0)


def direct_snr(channels: ChannelRealization, w: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Stage-one SNRs ``|(h_bar^H + g_bar^H Phi F) w|^2`` for every actuator."""
    phi = np.exp(1j * np.asarray(phases, dtype=float))
    Fw = channels.F @ w
    eff = channels.h_bar.conj() @ w + (channels.g_bar.conj() * phi[None, :]) @ Fw
    return np.abs(eff) ** 2


# ---------------------------------------------------------------------------
# linearizations


def _top_eig(A):
    w, U = np.linalg.eigh(0.5 * (A + A.conj().T))
    return float(w[-1]), U[:, -1]


def linearize_fk(W_i, V_i, R, scale: float = 1.0) -> LinearizedFk:
    """Tangent of ``||W / s + s R V R^H||_F^2`` at ``(W_i, V_i)``.

    ``s = 1`` is the plain expansion; other values split the same inner
    product ``<W, R V R^H>`` between the two squared norms differently.
    """
    G = W_i / scale + scale * (R @ V_i @ R.conj().T)
    cw = G / scale
    cv = scale * (R.conj().T @ G @ R)
    base = float(np.real(np.vdot(G, G)))
    const = base - 2.0 * float(np.real(np.vdot(cw, W_i))) - 2.0 * float(np.real(np.vdot(cv, V_i)))
    return LinearizedFk(coef_w=2.0 * cw, coef_v=2.0 * cv, const=const)


def linearize_spectral(A_i) -> Affine:
    """Tangent of the spectral norm of a PSD matrix at ``A_i``."""
    lam, u = _top_eig(A_i)
    P = np.outer(u, u.conj())
    return Affine(coef=P, const=lam - float(np.real(np.vdot(P, A_i))))


def linearize_sparsity(q_i, eta: float) -> Affine:
    """``eta * (||q||_1 - q_i^T q / ||q_i||_2)`` as a linear map on ``q >= 0``."""
    q_i = np.asarray(q_i, dtype=float)
    nrm = np.linalg.norm(q_i)
    lin = q_i / nrm if nrm >= _Q_NORM_EPS else np.zeros_like(q_i)
    return Affine(coef=eta * (1.0 - lin), const=0.0)


def rank_gap(A) -> float:
    """``tr(A) - ||A||_2`` for a Hermitian PSD matrix."""
    w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    return float(np.sum(w) - w[-1])


def penalized_objective(q, W, V, penalties) -> float:
    """Exact penalized objective (no linearization)."""
    a, b, eta = penalties
    q = np.asarray(q, dtype=float)
    l1, l2 = float(np.sum(np.abs(q))), float(np.linalg.norm(q))
    return l1 + a * rank_gap(W) + b * rank_gap(V) + eta * (l1 - l2)


# ---------------------------------------------------------------------------
# subproblem assembly


class Layout:
    """Index ranges of ``x = [q, hvec(W), hvec(V), r0, r_1..r_K]``."""

    def __init__(self, K: int, Nt: int, M: int):
        self.K, self.Nt, self.M = K, Nt, M
        self.nW = Nt * Nt
        self.nV = (M + 1) * (M + 1)
        self.q = slice(0, K)
        self.W = slice(K, K + self.nW)
        self.V = slice(self.W.stop, self.W.stop + self.nV)
        self.r0 = self.V.stop
        self.r = slice(self.r0 + 1, self.r0 + 1 + K)
        self.n = self.r.stop


def lift_maps(R_all: np.ndarray) -> np.ndarray:
    """Linear maps ``hvec(V) -> hvec(R_k V R_k^H)``, shape (K, Nt^2, (M+1)^2)."""
    K, Nt, M1 = R_all.shape
    basis = hvec_basis(M1)
    out = np.empty((K, Nt * Nt, M1 * M1))
    for k in range(K):
        R = R_all[k]
        imgs = R[None] @ basis @ R.conj().T[None]
        out[k] = np.stack([hvec(X) for X in imgs], axis=1)
    return out


def assemble_subproblem(state: ScaState, R_all: np.ndarray, gamma_th: float,
                        penalties, p_max: float, maps: Optional[np.ndarray] = None,
                        warm_start: Optional[ConicSolution] = None,
                        scale: float = 1.0) -> ConicProblem:
    """Convex subproblem linearized at ``state``.

    Cone rows, in order: ``diag(V) = 1`` (zero); ``q >= 0``, ``P_max - tr W``,
    the K SNR rows (nonnegative); epigraphs ``r0 >= ||W||^2`` and
    ``r_k >= ||R_k V R_k^H||^2`` (rotated SOCs); ``W``, ``V`` (PSD).
    """
    K, Nt, M1 = R_all.shape
    M = M1 - 1
    if state.W.shape != (Nt, Nt) or state.V.shape != (M1, M1) or state.q.shape != (K,):
        raise ValueError("state dimensions do not match the channel matrices")
    if maps is None:
        maps = lift_maps(R_all)
    a, b, eta = penalties
    L = Layout(K, Nt, M)
    n = L.n

    fw = linearize_spectral(state.W)
    fv = linearize_spectral(state.V)
    xi = linearize_sparsity(state.q, eta)
    c = np.zeros(n)
    c[L.q] = 1.0 + xi.coef
    c[L.W] = a * hvec(np.eye(Nt) - fw.coef)
    c[L.V] = b * hvec(np.eye(M1) - fv.coef)
    offset = -a * fw.const - b * fv.const

    blocks = []
    # diag(V) = 1
    A = np.zeros((M1, n))
    A[np.arange(M1), L.V.start + np.arange(M1)] = 1.0
    blocks.append((A, np.ones(M1), conic.zero_cone(M1)))

    # q >= 0, power budget, SNR rows
    A = np.zeros((K + 1 + K, n))
    bb = np.zeros(K + 1 + K)
    A[np.arange(K), L.q.start + np.arange(K)] = -1.0
    A[K, L.W.start:L.W.start + Nt] = 1.0  # diagonal part of hvec(W)
    bb[K] = p_max
    for k in range(K):
        fk = linearize_fk(state.W, state.V, R_all[k], scale)
        row = K + 1 + k
        # 0.5 f_k - 0.5 r0 - 0.5 r_k + q_k - gamma_th >= 0
        A[row, L.q.start + k] = -1.0
        A[row, L.W] = -0.5 * hvec(fk.coef_w)
        A[row, L.V] = -0.5 * hvec(fk.coef_v)
        A[row, L.r0] = 0.5
        A[row, L.r.start + k] = 0.5
        bb[row] = 0.5 * fk.const - gamma_th
    blocks.append((A, bb, conic.nonneg_cone(2 * K + 1)))

    # ||u||^2 <= r  <=>  (r/s + s, r/s - s, 2u) in SOC for any s > 0; s is set
    # to the anchor's norm so both leading entries stay comparable
    def epigraph(r_col, u_cols, u_map, anchor):
        d = 2 + u_map.shape[0]
        A = np.zeros((d, n))
        A[0, r_col] = -1.0 / anchor
        A[1, r_col] = -1.0 / anchor
        A[2:, u_cols] = -2.0 * u_map
        bb = np.zeros(d)
        bb[0], bb[1] = anchor, -anchor
        return A, bb, conic.soc_cone(d)

    fro = lambda X: float(np.linalg.norm(X))
    blocks.append(epigraph(L.r0, L.W, np.eye(L.nW) / scale, max(fro(state.W) / scale, 1e-6)))
    for k in range(K):
        s_k = max(scale * fro(R_all[k] @ state.V @ R_all[k].conj().T), 1e-6)
        blocks.append(epigraph(L.r.start + k, L.V, scale * maps[k], s_k))

    # W, V PSD
    A = np.zeros((L.nW, n))
    A[:, L.W] = -np.eye(L.nW)
    blocks.append((A, np.zeros(L.nW), conic.psd_cone(Nt)))
    A = np.zeros((L.nV, n))
    A[:, L.V] = -np.eye(L.nV)
    blocks.append((A, np.zeros(L.nV), conic.psd_cone(M1)))

    return ConicProblem.from_blocks(c, blocks, offset=offset, warm_start=warm_start)


def unpack(sol: ConicSolution, K: int, Nt: int, M: int):
    """Read ``(q, W, V)`` from the cone slacks, which lie exactly in their cones."""
    L = Layout(K, Nt, M)
    s = sol.slack
    M1 = M + 1
    pos = M1
    q = np.maximum(s[pos:pos + K], 0.0)
    pos = M1 + 2 * K + 1 + (2 + L.nW) * (K + 1)
    W = hmat(s[pos:pos + L.nW], Nt)
    V = hmat(s[pos + L.nW:pos + L.nW + L.nV], M1)
    return q, W, V


# ---------------------------------------------------------------------------
# driver


def extract_solution(W, V):
    """Rank-one beamformer ``w`` and RIS phases in [0, 2 pi) from ``(W, V)``."""
    lam, u = _top_eig(W)
    w = np.sqrt(max(lam, 0.0)) * u
    _, v = _top_eig(V)
    if abs(v[-1]) > 1e-8:
        v = v / v[-1]
    else:
        v = V[:, -1]
    # v_m = conj(phi_m)
    phases = np.mod(-np.angle(v[:-1]), 2.0 * np.pi)
    return w, phases


def initial_state(R_all: np.ndarray, gamma_th: float, p_max: float) -> ScaState:
    K, Nt, M1 = R_all.shape
    V = np.ones((M1, M1), dtype=complex)
    W = (p_max / Nt) * np.eye(Nt, dtype=complex)
    snr = np.array([snr_trace_form(W, V, R) for R in R_all])
    q = np.maximum(gamma_th - snr, Q_FLOOR)
    return ScaState(W=W, V=V, q=q)


def run_sca(channels: ChannelRealization, cfg, gamma_th: Optional[float] = None,
            penalties=None) -> BeamformingSolution:
    """Iterate convex subproblems until the objective settles."""
    from .fbl import FblPoint, snr_threshold

    if gamma_th is None:
        gamma_th = snr_threshold(FblPoint(cfg.uses_per_stage, cfg.data_bits, cfg.eps_th))
    if penalties is None:
        penalties = (cfg.penalty_w, cfg.penalty_v, cfg.penalty_q)
    R_all = build_all_r(channels)
    K, Nt, M1 = R_all.shape
    maps = lift_maps(R_all)

    scale = cfg.frobenius_scale
    state = initial_state(R_all, gamma_th, cfg.p_max)
    delta = penalized_objective(state.q, state.W, state.V, penalties)
    state.objective_trace.append(delta)
    best = (delta, state.q, state.W, state.V)
    converged = False
    warm = None
    solver_iters = 0
    for i in range(1, cfg.sca_max_iters + 1):
        prob = assemble_subproblem(state, R_all, gamma_th, penalties, cfg.p_max,
                                   maps=maps, warm_start=warm, scale=scale)
        sol = conic.solve(prob, tol=cfg.solver_tol, max_iters=cfg.solver_max_iters)
        solver_iters += sol.iterations
        if sol.status is Status.INFEASIBLE:
            raise SolverFailure(f"subproblem {i} reported infeasible")
        if sol.status is not Status.OPTIMAL:
            log.warning("subproblem %d stopped at %s (res %.2e/%.2e/%.2e)", i,
                        sol.status.value, sol.primal_residual, sol.dual_residual, sol.gap)
        warm = sol
        q, W, V = unpack(sol, K, Nt, M1 - 1)
        new_delta = sol.objective_value
        state = ScaState(W=W, V=V, q=q, iteration=i,
                         objective_trace=state.objective_trace + [new_delta])
        if new_delta < best[0]:
            best = (new_delta, q, W, V)
        if abs(new_delta - delta) <= cfg.sca_tol:
            converged = True
            break
        delta = new_delta

    if converged:
        q, W, V = state.q, state.W, state.V
    else:
        _, q, W, V = best
    w, phases = extract_solution(W, V)
    nw2 = float(np.real(np.vdot(w, w)))
    if nw2 > cfg.p_max:
        w = w * np.sqrt(cfg.p_max / nw2)
    snr = direct_snr(channels, w, phases)
    return BeamformingSolution(
        w=w, phases=phases, W=W, V=V, q=q, snr_stage1=snr, converged=converged,
        iterations=state.iteration, gamma_th=gamma_th,
        objective_trace=state.objective_trace, solver_iterations=solver_iters,
    )
