"""Monte-Carlo trials, aggregation over a bit sweep, and CSV output."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import sca
from ..channel import ChannelRealization, default_geometry, generate_realization
from ..config import SCHEMES, SystemConfig, parse_scheme
from ..fbl import stage_thresholds
from .protocol import stage1_indicators, stage2_indicators, stage2_snrs

log = logging.getLogger(__name__)

CSV_HEADER = "scheme,D,trials,prc,avg_stage1,avg_stage2,avg_power_w,avg_iters"


@dataclass(frozen=True)
class TrialOutcome:
    a1: np.ndarray
    a2: np.ndarray
    power_used: float
    sca_iterations: int
    converged: bool = True

    def __post_init__(self):
        if np.any(self.a1 & self.a2):
            raise ValueError("an actuator cannot succeed in both stages")

    @property
    def all_served(self) -> bool:
        return int(np.sum(self.a1) + np.sum(self.a2)) == len(self.a1)


@dataclass(frozen=True)
class ExperimentResult:
    scheme: str
    D: int
    trials: int
    prc: float
    avg_stage1: float
    avg_stage2: float
    avg_power: float
    avg_iterations: float
    failed: int = 0

    def csv_row(self) -> str:
        vals = [self.prc, self.avg_stage1, self.avg_stage2, self.avg_power, self.avg_iterations]
        return ",".join([self.scheme, str(self.D), str(self.trials)] + [_fmt(v) for v in vals])


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6g}"


# ---------------------------------------------------------------------------
# one trial


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Generator for trial ``trial`` of master seed ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def draw_channels(rng: np.random.Generator, cfg: SystemConfig) -> ChannelRealization:
    """Geometry (unless frozen) and all channels of one trial."""
    if cfg.fixed_geometry:
        geo = default_geometry(np.random.default_rng(np.random.SeedSequence([cfg.seed])),
                               cfg.n_act, cfg)
    else:
        geo = default_geometry(rng, cfg.n_act, cfg)
    return generate_realization(rng, cfg, geo)


def evaluate_protocol(sol: sca.BeamformingSolution, channels: ChannelRealization,
                      cfg: SystemConfig, mrc: bool) -> TrialOutcome:
    """Both stages for an optimized beam, given the MRC choice."""
    th = stage_thresholds(cfg.uses_per_stage, cfg.uses_per_stage, cfg.data_bits, cfg.eps_th)
    a1 = stage1_indicators(sol.snr_stage1, th.gamma_th_stage1)
    snr2 = stage2_snrs(sol.snr_stage1, a1, channels.d_bar, cfg.p_relay, mrc,
                       cfg.incoherent_relays)
    a2 = stage2_indicators(snr2, th.gamma_th_stage2, a1)
    return TrialOutcome(a1=a1, a2=a2, power_used=sol.power,
                        sca_iterations=sol.iterations, converged=sol.converged)


def optimize_trial(rng: np.random.Generator, cfg: SystemConfig, use_ris: bool):
    channels = draw_channels(rng, cfg)
    if not use_ris:
        channels = channels.without_ris()
    return channels, sca.run_sca(channels, cfg)


def run_trial(rng: np.random.Generator, cfg: SystemConfig, scheme: str) -> TrialOutcome:
    use_ris, mrc = parse_scheme(scheme)
    channels, sol = optimize_trial(rng, cfg, use_ris)
    return evaluate_protocol(sol, channels, cfg, mrc)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class _Job:
    trial: int
    D: int
    use_ris: bool


def _run_job(cfg: SystemConfig, job: _Job, mrc_flags: tuple):
    """Optimize once and score every requested MRC variant.

    Returns ``({mrc: TrialOutcome}, solution)`` or an error string.
    """
    c = cfg.replace(data_bits=job.D)
    t0 = time.perf_counter()
    try:
        channels, sol = optimize_trial(trial_rng(cfg.seed, job.trial), c, job.use_ris)
        out = {mrc: evaluate_protocol(sol, channels, c, mrc) for mrc in mrc_flags}, sol
    except (sca.SolverFailure, ArithmeticError, np.linalg.LinAlgError) as exc:
        out = f"{type(exc).__name__}: {exc}"
    return out, time.perf_counter() - t0


def aggregate(scheme: str, D: int, outcomes: list, failed: int = 0) -> ExperimentResult:
    n = len(outcomes)
    if n == 0:
        nan = float("nan")
        return ExperimentResult(scheme, D, 0, nan, nan, nan, nan, nan, failed)
    return ExperimentResult(
        scheme=scheme, D=D, trials=n,
        prc=sum(o.all_served for o in outcomes) / n,
        avg_stage1=float(np.mean([np.sum(o.a1) for o in outcomes])),
        avg_stage2=float(np.mean([np.sum(o.a2) for o in outcomes])),
        avg_power=float(np.mean([o.power_used for o in outcomes])),
        avg_iterations=float(np.mean([o.sca_iterations for o in outcomes])),
        failed=failed,
    )


@dataclass
class SweepReport:
    results: list
    failures: list = field(default_factory=list)  # (scheme, D, trial, message)
    unconverged: int = 0
    # (trial, D, use_ris) -> BeamformingSolution, filled when requested
    solutions: dict = field(default_factory=dict)
    # (D, use_ris) -> summed optimizer wall time in seconds
    wall_time: dict = field(default_factory=dict)


def run_sweep(cfg: SystemConfig, progress: Optional[callable] = None,
              keep_solutions: bool = False) -> SweepReport:
    """All schemes and bit budgets of ``cfg``.

    Trial ``t`` uses the same channel draw for every scheme and every D, and
    each (trial, D, RIS on/off) optimization is shared by the MRC and no-MRC
    variants, which see identical beams.
    """
    schemes = [s for s in SCHEMES if s in cfg.schemes]
    variants = {}
    for s in schemes:
        use_ris, mrc = parse_scheme(s)
        variants.setdefault(use_ris, []).append(mrc)
    jobs = [_Job(t, D, use_ris)
            for use_ris in sorted(variants, reverse=True)
            for D in sorted(set(cfg.bits))
            for t in range(cfg.trials)]

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_run_job, cfg, j, tuple(variants[j.use_ris])) for j in jobs]
            outputs = []
            for i, f in enumerate(futures):
                outputs.append(f.result())
                if progress:
                    progress(i + 1, len(jobs))
    else:
        outputs = []
        for i, j in enumerate(jobs):
            outputs.append(_run_job(cfg, j, tuple(variants[j.use_ris])))
            if progress:
                progress(i + 1, len(jobs))

    report = SweepReport(results=[])
    table = {}
    for job, (out, secs) in zip(jobs, outputs):
        key = (job.D, job.use_ris)
        report.wall_time[key] = report.wall_time.get(key, 0.0) + secs
        if not isinstance(out, str):
            out, sol = out
            report.unconverged += not sol.converged
            if keep_solutions:
                report.solutions[(job.trial, job.D, job.use_ris)] = sol
        for s in schemes:
            use_ris, mrc = parse_scheme(s)
            if use_ris != job.use_ris:
                continue
            bucket = table.setdefault((s, job.D), ([], []))
            if isinstance(out, str):
                bucket[1].append(job.trial)
                report.failures.append((s, job.D, job.trial, out))
            else:
                bucket[0].append(out[mrc])
    for s in schemes:
        for D in sorted(set(cfg.bits)):
            ok, bad = table.get((s, D), ([], []))
            report.results.append(aggregate(s, D, ok, len(bad)))
    for s, D, t, msg in report.failures:
        log.warning("trial %d of %s at D=%d failed: %s", t, s, D, msg)
    return report


def run_experiment(cfg: SystemConfig) -> list:
    return run_sweep(cfg).results


def format_csv(results) -> str:
    order = {s: i for i, s in enumerate(SCHEMES)}
    rows = sorted(results, key=lambda r: (order.get(r.scheme, len(order)), r.scheme, r.D))
    lines = [CSV_HEADER] + [r.csv_row() for r in rows]
    return "\n".join(lines) + "\n"


def emit_csv(results, path) -> Path:
    path = Path(path)
    try:
        path.write_text(format_csv(results))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc
    return path
