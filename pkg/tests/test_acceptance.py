"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed at the end of the pytest run
(and immediately with ``-s``). Criteria 5 and 6 share one desk-scale sweep:
50 trials, D in {100, 300, 500, 700, 900}, all four schemes, seed 0.
"""

import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import (
    THRESHOLDS_L250_EPS1E6,
    direct_snr_loops,
    scalar_subproblem_grid,
    threshold_grid_scan,
)
from ris_urllc import conic
from ris_urllc.channel import ChannelRealization
from ris_urllc.config import SystemConfig
from ris_urllc.fbl import FblPoint, decode_error_prob, snr_threshold
from ris_urllc.sca import (
    ScaState,
    assemble_subproblem,
    build_all_r,
    build_r,
    direct_snr,
    linearize_fk,
    linearize_spectral,
    phase_vector,
    rank_gap,
    snr_frobenius_form,
    snr_trace_form,
)
from ris_urllc.sim.cli import main as cli_main
from ris_urllc.sim.experiment import draw_channels, run_sweep, trial_rng

SWEEP_BITS = (100, 300, 500, 700, 900)
SWEEP_TRIALS = 50
STAGE2_ZERO = 0.1  # "avg_stage2 ~ 0": at most 1% of K = 10 actuators per trial


def record(name, ok, detail):
    line = f"criterion {name}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _cn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# ---- 1. identities ------------------------------------------------------------------

def test_criterion_1_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    Nt, M, K = 4, 16, 10
    worst_lift = worst_fro = 0.0
    for _ in range(1000):
        ch = ChannelRealization(h=_cn(rng, K, Nt), F=_cn(rng, M, Nt), g=_cn(rng, K, M),
                                d=np.zeros((K, K)), sigma=1.0)
        w = _cn(rng, Nt)
        th = rng.uniform(0, 2 * np.pi, M)
        ref = direct_snr_loops(ch.h_bar, ch.F, ch.g_bar, w, th)
        W = np.outer(w, w.conj())
        v = phase_vector(th)
        V = np.outer(v, v.conj())
        for k in range(K):
            R = build_r(ch, k)
            tr = snr_trace_form(W, V, R)
            fr = snr_frobenius_form(W, V, R)
            worst_lift = max(worst_lift, abs(tr - ref[k]) / ref[k])
            worst_fro = max(worst_fro, abs(fr - tr) / tr)
    secs = time.perf_counter() - t0
    ok = worst_lift <= 1e-9 and worst_fro <= 1e-9 and secs < 10
    record("1 (identities)", ok,
           f"lift rel {worst_lift:.2e}, frobenius rel {worst_fro:.2e}, {secs:.1f} s")
    assert ok


# ---- 2. thresholds ------------------------------------------------------------------

def test_criterion_2_thresholds():
    g100 = snr_threshold(FblPoint(250, 100, 1e-6))
    scan = threshold_grid_scan(250, 100, 1e-6)
    rel = abs(g100 - scan) / scan
    worst = 0.0
    for D in range(100, 1000, 100):
        pt = FblPoint(250, D, 1e-6)
        worst = max(worst, abs(decode_error_prob(snr_threshold(pt), pt) - 1e-6))
    ok = abs(g100 - 0.68) < 5e-3 and rel <= 1e-6 and worst <= 1e-10
    assert THRESHOLDS_L250_EPS1E6[100] == pytest.approx(g100, rel=1e-9)
    record("2 (thresholds)", ok,
           f"gamma_th(100) = {g100:.6f}, vs grid scan rel {rel:.1e}, max |eps - 1e-6| = {worst:.1e}")
    assert ok


# ---- 3. DC bounds and the rank-one gap -----------------------------------------------------------

def _herm(rng, n):
    X = _cn(rng, n, n)
    return 0.5 * (X + X.conj().T)


def _psd(rng, n, rank):
    X = _cn(rng, n, rank)
    return X @ X.conj().T


def test_criterion_3_dc_bounds():
    rng = np.random.default_rng(103)
    Nt, M1 = 4, 17
    fro2 = lambda X: float(np.real(np.vdot(X, X)))
    worst_fk = worst_sp = 0.0
    for _ in range(500):
        R = _cn(rng, Nt, M1) / 4
        Wi, Vi = _psd(rng, Nt, Nt), _psd(rng, M1, 1) / M1
        fk = linearize_fk(Wi, Vi, R)
        W, V = Wi + _herm(rng, Nt), Vi + _herm(rng, M1) / M1
        worst_fk = max(worst_fk, fk(W, V) - fro2(W + R @ V @ R.conj().T))
    for _ in range(500):
        n = int(rng.choice([Nt, M1]))
        Ai = _psd(rng, n, int(rng.integers(1, n + 1)))
        A = Ai + _herm(rng, n)
        f = linearize_spectral(Ai)
        worst_sp = max(worst_sp, f(A) - float(np.linalg.norm(A, 2)))
    rank1 = 0.0
    for _ in range(100):
        n = int(rng.choice([Nt, M1]))
        rank1 = max(rank1, abs(rank_gap(_psd(rng, n, 1))))
    high = np.inf
    for _ in range(100):
        n = int(rng.choice([Nt, M1]))
        r = int(rng.integers(2, n + 1))
        # nonzero eigenvalues >= 0.1 apart from each other and from zero
        lam = np.sort(0.1 * (1 + np.arange(r)) + rng.uniform(0, 0.05, r))
        Q, _ = np.linalg.qr(_cn(rng, n, n))
        A = (Q[:, :r] * lam) @ Q[:, :r].conj().T
        high = min(high, rank_gap(A))
    ok = worst_fk <= 1e-8 and worst_sp <= 1e-8 and rank1 <= 1e-10 and high > 1e-3
    record("3 (DC bounds, rank-one gap)", ok,
           f"max violation f_k {worst_fk:.1e}, spectral {worst_sp:.1e}; "
           f"rank-one gap {rank1:.1e}; min rank>=2 gap {high:.3f}")
    assert ok


# ---- 4. solver oracle ----------------------------------------------------------------------

def _scalar_instance(rng):
    R = _cn(rng, 1, 1, 2)
    W_i = np.array([[rng.uniform(0.2, 1.0)]], dtype=complex)
    z = rng.uniform(0.3, 1.0) * np.exp(1j * rng.uniform(-np.pi, np.pi))
    V_i = np.array([[1, z], [np.conj(z), 1]])
    return R, W_i, V_i, np.array([rng.uniform(0, 1)]), rng.uniform(0.2, 2.0), 1.0


def _random_conic(rng):
    n = 3
    X0 = _psd(rng, n, n) + np.eye(n)
    G = rng.standard_normal((4, n * n))
    h = G @ conic.hvec(X0) + rng.uniform(0.1, 1.0, 4)
    C = _psd(rng, n, n) + 0.1 * np.eye(n)
    return conic.ConicProblem.from_blocks(conic.hvec(C), [
        (G, h, conic.nonneg_cone(4)),
        (-np.eye(n * n), np.zeros(n * n), conic.psd_cone(n))])


def test_criterion_4_solver_oracle():
    rng = np.random.default_rng(104)
    pens = (1.0, 1.0, 1.0)
    worst_obj = worst_gap = 0.0
    for _ in range(20):
        R, W_i, V_i, q_i, gth, pmax = _scalar_instance(rng)
        sol = conic.solve(assemble_subproblem(ScaState(W_i, V_i, q_i), R, gth, pens, pmax))
        ref = scalar_subproblem_grid(R[0], W_i[0, 0].real, V_i, q_i[0], gth, pmax, pens)
        worst_obj = max(worst_obj, abs(sol.objective_value - ref))
        worst_gap = max(worst_gap, sol.gap if sol.ok else np.inf)
    for _ in range(20):
        sol = conic.solve(_random_conic(rng))
        worst_gap = max(worst_gap, sol.gap if sol.ok else np.inf)
    ok = worst_obj <= 1e-3 and worst_gap <= 1e-7
    record("4 (solver oracle)", ok,
           f"max |solver - grid| {worst_obj:.1e}, max relative gap {worst_gap:.1e}")
    assert ok


# ---- shared desk-scale sweep -----------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep():
    cfg = SystemConfig(trials=SWEEP_TRIALS, bits=SWEEP_BITS, seed=0, scheme="all",
                       workers=os.cpu_count() or 1)
    t0 = time.perf_counter()
    rep = run_sweep(cfg, keep_solutions=True)
    print(f"sweep: {time.perf_counter() - t0:.0f} s")
    table = {(r.scheme, r.D): r for r in rep.results}
    return cfg, rep, table


# ---- 5. SCA behaviour ------------------------------------------------------------------------

def test_criterion_5_sca_behaviour(sweep):
    cfg, rep, _ = sweep
    sols = {t: rep.solutions[(t, 500, True)] for t in range(SWEEP_TRIALS)
            if (t, 500, True) in rep.solutions}
    c500 = cfg.replace(data_bits=500)
    worst_rise = -np.inf
    converged = 0
    checked, worst_snr = 0, 0.0
    for t, sol in sols.items():
        tr = np.asarray(sol.objective_trace)
        rise = np.diff(tr) - 1e-5 * (1 + np.abs(tr[:-1]))
        worst_rise = max(worst_rise, float(rise.max()) if rise.size else -np.inf)
        converged += sol.converged and sol.iterations <= 100
        if rank_gap(sol.W) <= 1e-3 and rank_gap(sol.V) <= 1e-3:
            ch = draw_channels(trial_rng(cfg.seed, t), c500)
            R_all = build_all_r(ch)
            lifted = np.array([snr_trace_form(sol.W, sol.V, R) for R in R_all])
            ext = direct_snr(ch, sol.w, sol.phases)
            worst_snr = max(worst_snr, float(np.max(np.abs(ext - lifted) / np.maximum(lifted, 1e-12))))
            checked += 1
    frac = converged / max(len(sols), 1)
    mono = worst_rise <= 0
    ok = len(sols) == SWEEP_TRIALS and mono and frac >= 0.9 and worst_snr <= 0.05
    record("5 (SCA behaviour)", ok,
           f"monotone {'yes' if mono else 'no'}; converged {converged}/{len(sols)} ({frac:.0%}); "
           f"extracted-vs-lifted max rel gap {worst_snr:.2e} over {checked} rank-one trials")
    assert ok


# ---- 6. protocol trends ------------------------------------------------------------------------

SCHEMES = ("ris-mrc", "ris-nomrc", "noris-mrc", "noris-nomrc")


def _col(table, scheme, attr):
    return [getattr(table[(scheme, D)], attr) for D in SWEEP_BITS]


def _fmt_curve(vals):
    return "/".join(f"{v:.2f}" for v in vals)


def test_criterion_6a_prc_nonincreasing(sweep):
    _, _, table = sweep
    bad = [s for s in SCHEMES if np.any(np.diff(_col(table, s, "prc")) > 0)]
    detail = "; ".join(f"{s} {_fmt_curve(_col(table, s, 'prc'))}" for s in SCHEMES)
    assert record("6(a) (PRC non-increasing in D)", not bad, detail)


def _largest_full(table, scheme):
    full = [D for D in SWEEP_BITS if table[(scheme, D)].prc == 1.0]
    return max(full) if full else 0


def test_criterion_6b_ris_helps(sweep):
    _, _, table = sweep
    order_ok = all(table[(f"ris-{m}", D)].prc >= table[(f"noris-{m}", D)].prc
                   for m in ("mrc", "nomrc") for D in SWEEP_BITS)
    dmax = {s: _largest_full(table, s) for s in SCHEMES}
    strict = dmax["ris-mrc"] > dmax["noris-mrc"] and dmax["ris-nomrc"] > dmax["noris-nomrc"]
    ok = order_ok and strict
    record("6(b) (RIS PRC >= no-RIS; larger D at PRC=1)", ok,
           f"ordering {'holds' if order_ok else 'violated'}; largest D with PRC=1: "
           + ", ".join(f"{s} {dmax[s]}" for s in SCHEMES))
    assert ok


def test_criterion_6c_stage2_usage(sweep):
    _, _, table = sweep
    ris_low = [table[(s, D)].avg_stage2 for s in ("ris-mrc", "ris-nomrc") for D in SWEEP_BITS if D <= 300]
    noris = [table[(s, D)].avg_stage2 for s in ("noris-mrc", "noris-nomrc") for D in SWEEP_BITS if D >= 300]
    ok = max(ris_low) <= STAGE2_ZERO and min(noris) > 0
    record("6(c) (stage-II usage)", ok,
           f"RIS D<=300 max avg_stage2 {max(ris_low):.2f} (<= {STAGE2_ZERO}); "
           f"no-RIS D>=300 min avg_stage2 {min(noris):.2f} (> 0)")
    assert ok


def test_criterion_6d_power(sweep):
    _, _, table = sweep
    mono = all(np.all(np.diff(_col(table, s, "avg_power")) >= -1e-12) for s in SCHEMES)
    cmp_ok, compared = True, 0
    for m in ("mrc", "nomrc"):
        for D in SWEEP_BITS:
            a, b = table[(f"ris-{m}", D)], table[(f"noris-{m}", D)]
            if a.prc >= 0.9 and b.prc >= 0.9:
                compared += 1
                cmp_ok &= a.avg_power <= b.avg_power
    ok = mono and cmp_ok
    record("6(d) (power trends)", ok,
           f"non-decreasing {'yes' if mono else 'no'}; RIS <= no-RIS on {compared} comparable points "
           f"{'yes' if cmp_ok else 'no'}; ris {_fmt_curve(_col(table, 'ris-mrc', 'avg_power'))} W, "
           f"noris {_fmt_curve(_col(table, 'noris-mrc', 'avg_power'))} W")
    assert ok


# ---- 7. determinism ----------------------------------------------------------------------------

def test_criterion_7_determinism(tmp_path):
    cfg = tmp_path / "det.cfg"
    cfg.write_text("trials = 2\nbits = 100,500\nsca_max_iters = 3\nseed = 42\n")
    outs = []
    for name in ("a.csv", "b.csv"):
        path = tmp_path / name
        assert cli_main(["--config", str(cfg), "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    ok = outs[0] == outs[1] and outs[0].count(b"\n") == 9
    record("7 (determinism)", ok, f"{len(outs[0])} bytes, identical: {outs[0] == outs[1]}")
    assert ok
