"""Orchestrated studies: quasineutral convergence, margin persistence,
instability contrast, and time-step self-convergence.

Studies are deterministic end to end: rows repeat bit-for-bit for repeated
epsilon entries (wall-clock columns aside), snapshots are written in the
binary format and the error columns are computed from the same arrays the
snapshots store.
"""

from __future__ import annotations

import csv
import json
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    GridV,
    GridX,
    PhaseField,
    density,
    save_phase_field,
)
from .errors import InvalidLevels, MissingDiagnostics, UnstableData
from .fields import FieldMode
from .penrose import ScanConfig, penrose_margin, penrose_margin_field
from .profiles import InitialDataSpec, build_initial_data, build_profile
from .solver import RunResult, SolverConfig, run

ERROR_NORMS = ("L2_f", "Linf_f", "L2_rho", "Linf_rho")


@dataclass(frozen=True)
class StudyConfig:
    initial: InitialDataSpec
    grid_x: GridX
    grid_v: GridV
    solver: SolverConfig                 # mode field is replaced per run
    epsilons: tuple
    error_norms: tuple = ERROR_NORMS
    output_dir: str | None = None
    margin_floor: float = 0.05

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if any(not 0.0 < e <= 1.0 for e in eps):
            raise ValueError("epsilons must lie in (0, 1]")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        unknown = set(self.error_norms) - set(ERROR_NORMS)
        if unknown:
            raise ValueError(f"unknown error norms {sorted(unknown)}")
        object.__setattr__(self, "epsilons", eps)


@dataclass(frozen=True)
class StudyRow:
    epsilon: float
    sup_L2_f: float
    sup_Linf_f: float
    sup_L2_rho: float
    sup_Linf_rho: float
    min_penrose_margin: float
    wall_seconds: float
    status: str

    def csv_row(self) -> list:
        return [f"{self.epsilon:.17g}", f"{self.sup_L2_f:.17g}", f"{self.sup_Linf_f:.17g}",
                f"{self.sup_L2_rho:.17g}", f"{self.sup_Linf_rho:.17g}",
                f"{self.min_penrose_margin:.17g}", f"{self.wall_seconds:.3f}", self.status]


@dataclass(frozen=True)
class StudyTable:
    rows: tuple

    CSV_HEADER = ("epsilon", "sup_L2_f", "sup_Linf_f", "sup_L2_rho", "sup_Linf_rho",
                  "min_penrose_margin", "wall_seconds", "status")

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_HEADER)
            for row in self.rows:
                w.writerow(row.csv_row())


def _phase_errors(snaps_a: list, snaps_b: list) -> dict:
    """Sup over shared sample times of the four error norms between two runs."""
    sup = dict.fromkeys(ERROR_NORMS, 0.0)
    for (ta, fa), (tb, fb) in zip(snaps_a, snaps_b):
        if abs(ta - tb) > 1e-12:
            raise ValueError("snapshot times differ between runs")
        diff = fa.values - fb.values
        dx, dv = fa.grid_x.dx, fa.grid_v.dv
        rho_a = density(fa).values
        rho_b = density(fb).values
        drho = rho_a - rho_b
        sup["L2_f"] = max(sup["L2_f"], float(np.sqrt(dx * dv * np.sum(diff**2))))
        sup["Linf_f"] = max(sup["Linf_f"], float(np.max(np.abs(diff))))
        sup["L2_rho"] = max(sup["L2_rho"], float(np.sqrt(dx * np.sum(drho**2))))
        sup["Linf_rho"] = max(sup["Linf_rho"], float(np.max(np.abs(drho))))
    return sup


def _min_margin(result: RunResult) -> float:
    margins = [r.penrose_margin for r in result.trace if r.penrose_margin is not None]
    return min(margins) if margins else float("nan")


def _dump_run(out_dir: str, tag: str, result: RunResult) -> None:
    d = os.path.join(out_dir, tag)
    os.makedirs(d, exist_ok=True)
    for i, (t, f) in enumerate(result.snapshots):
        save_phase_field(os.path.join(d, f"snap_{i:04d}"), f, t)
    with open(os.path.join(d, "margin_trace.dat"), "w") as fh:
        fh.write("# time  penrose_margin\n")
        for rec in result.trace:
            if rec.penrose_margin is not None:
                fh.write(f"{rec.time:.17g} {rec.penrose_margin:.17g}\n")


def quasineutral_study(cfg: StudyConfig) -> StudyTable:
    """Zero-Debye reference run against the epsilon family with shared data.

    The reference solution is unique for Penrose-stable data, so one
    zero-Debye run serves every epsilon row.  Runs that blow up are marked
    failed and the study continues.  Refuses Penrose-borderline data.
    """
    f0 = build_initial_data(cfg.initial, cfg.grid_x, cfg.grid_v)
    scan = cfg.solver.penrose_scan or ScanConfig(n_sphere=16)
    margin0 = penrose_margin_field(f0, scan, cfg.solver.penrose_x_samples)
    if not margin0 > cfg.margin_floor:
        raise UnstableData(
            f"initial margin {margin0:.4f} not above the floor {cfg.margin_floor:.4f}"
        )

    base = replace(cfg.solver, keep_snapshots=True)
    t0 = time.monotonic()
    ref = run(f0, replace(base, mode=FieldMode.vdb()))
    ref_wall = time.monotonic() - t0
    rows = [StudyRow(0.0, 0.0, 0.0, 0.0, 0.0, _min_margin(ref), ref_wall, "reference")]

    if cfg.output_dir:
        os.makedirs(cfg.output_dir, exist_ok=True)
        _dump_run(cfg.output_dir, "vdb", ref)

    for eps in cfg.epsilons:
        t0 = time.monotonic()
        tag = f"eps_{eps:g}"
        try:
            res = run(f0, replace(base, mode=FieldMode.vp(eps)))
        except Exception as exc:  # blowup rows keep the study alive
            rows.append(StudyRow(eps, float("nan"), float("nan"), float("nan"),
                                 float("nan"), float("nan"),
                                 time.monotonic() - t0, f"failed:{type(exc).__name__}"))
            continue
        sup = _phase_errors(res.snapshots, ref.snapshots)
        rows.append(StudyRow(eps, sup["L2_f"], sup["Linf_f"], sup["L2_rho"],
                             sup["Linf_rho"], _min_margin(res),
                             time.monotonic() - t0, "ok"))
        if cfg.output_dir:
            _dump_run(cfg.output_dir, tag, res)

    table = StudyTable(tuple(rows))
    if cfg.output_dir:
        table.write_csv(os.path.join(cfg.output_dir, "study.csv"))
        with open(os.path.join(cfg.output_dir, "err_vs_eps.dat"), "w") as fh:
            fh.write("# epsilon  sup_L2_rho\n")
            for r in table.rows[1:]:
                fh.write(f"{r.epsilon:.17g} {r.sup_L2_rho:.17g}\n")
    return table


def penrose_persistence(trace: list, c0: float) -> tuple[bool, list]:
    """True iff the recorded margins never fall below c0 / 2."""
    margins = [r.penrose_margin for r in trace if r.penrose_margin is not None]
    if not margins:
        raise MissingDiagnostics("run recorded no Penrose margins")
    return min(margins) >= 0.5 * c0, margins


# -- instability contrast ----------------------------------------------------
# The zero-Debye system amplifies unstable-profile perturbations at a rate
# proportional to the wavenumber, so the demo runs on a short torus where the
# seeded mode is fast: L = pi/8 puts mode 1 at physical wavenumber 16, giving
# an e-fold rate near 3 for the reference cold-beam profile while a
# Maxwellian at the same wavenumber simply phase-mixes.  The same growth law
# makes the grid's top modes amplify roundoff (the limit dynamics are
# ill-posed near unstable data), so n_x stays small enough that noise at the
# highest resolved wavenumber cannot reach the seeded signal within t_end.

DEMO_LENGTH = np.pi / 8.0
DEMO_NX = 16
DEMO_NV = 256
DEMO_DT = 1.0 / 64.0
DEMO_C0 = 0.1


@dataclass(frozen=True)
class InstabilityReport:
    growth_stable: float
    growth_unstable: float
    class_stable: str
    class_unstable: str
    margin_stable: float
    margin_unstable: float


def _classify(growth: float) -> str:
    if growth >= 10.0:
        return "GROWTH"
    if growth <= 3.0:
        return "QUIET"
    return "INDETERMINATE"


def _mode_amplitude(f: PhaseField, k0: int) -> float:
    rho = density(f).values
    return float(np.abs(np.fft.rfft(rho)[k0]) / rho.size)


def _demo_grid_v(spec: InitialDataSpec) -> GridV:
    # cover the profile's support: ~8 widths past the outermost feature
    base = spec.base
    if base.kind == "two_stream":
        reach = abs(base.a) + 8.0 * base.sigma_b
    elif base.kind in ("maxwellian", "bump_on_tail"):
        reach = abs(base.u) + 8.0 * np.sqrt(base.temperature)
    else:
        reach = 8.0
    return GridV(DEMO_NV, max(float(np.ceil(reach * 8.0) / 8.0), 0.5))


def instability_demo(stable: InitialDataSpec, unstable: InitialDataSpec,
                     seed_amplitude: float, t_end: float = 1.0,
                     out_dir: str | None = None) -> InstabilityReport:
    """Run both data sets through the zero-Debye dynamics with the same seed.

    Reports the growth factor of the seeded density mode
    |rho_hat_k0|(T) / |rho_hat_k0|(0) for each and classifies GROWTH (>= 10),
    QUIET (<= 3) or INDETERMINATE.  Requires the two profiles to sit on
    opposite sides of the margin threshold.
    """
    gx = GridX(DEMO_NX, DEMO_LENGTH)
    scan = ScanConfig(n_sphere=16)
    gv_s = _demo_grid_v(stable)
    gv_u = _demo_grid_v(unstable)
    m_s = penrose_margin(build_profile(stable.base, gv_s), scan).margin
    m_u = penrose_margin(build_profile(unstable.base, gv_u), scan).margin
    if not (m_s >= DEMO_C0 > m_u):
        raise UnstableData(
            f"margins {m_s:.3f} / {m_u:.3f} do not straddle the threshold {DEMO_C0}"
        )

    growths = {}
    traces = {}
    for tag, spec, gv in (("stable", stable, gv_s), ("unstable", unstable, gv_u)):
        seeded = replace(spec, perturbation_amplitude=seed_amplitude)
        f0 = build_initial_data(seeded, gx, gv)
        cfg = SolverConfig(mode=FieldMode.vdb(), dt=DEMO_DT, t_end=t_end,
                           diagnostics_every=4, keep_snapshots=True)
        if seed_amplitude == 0.0:
            growths[tag] = 1.0   # nothing to amplify
            traces[tag] = []
            continue
        res = run(f0, cfg)
        amps = [(t, _mode_amplitude(f, spec.perturbation_mode)) for t, f in res.snapshots]
        growths[tag] = amps[-1][1] / amps[0][1] if amps[0][1] > 0 else float("inf")
        traces[tag] = amps

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for tag, amps in traces.items():
            with open(os.path.join(out_dir, f"growth_{tag}.dat"), "w") as fh:
                fh.write("# time  mode_amplitude\n")
                for t, a in amps:
                    fh.write(f"{t:.17g} {a:.17g}\n")

    return InstabilityReport(
        growth_stable=growths["stable"],
        growth_unstable=growths["unstable"],
        class_stable=_classify(growths["stable"]),
        class_unstable=_classify(growths["unstable"]),
        margin_stable=m_s,
        margin_unstable=m_u,
    )


def refinement_study(f0: PhaseField, cfg: SolverConfig, levels: int) -> list:
    """Halve dt per level; report successive differences and empirical orders.

    Returns rows (dt, diff_to_next, order); order entries trail by one level
    and the last row carries the finest dt with no difference yet.
    """
    if levels < 2:
        raise InvalidLevels(f"need at least 2 levels, got {levels}")
    finals = []
    dts = []
    for lvl in range(levels + 1):
        dt = cfg.dt / 2**lvl
        res = run(f0, replace(cfg, dt=dt))
        finals.append(res.final)
        dts.append(dt)
    rows = []
    diffs = []
    for lvl in range(levels):
        diff = finals[lvl].values - finals[lvl + 1].values
        dx, dv = f0.grid_x.dx, f0.grid_v.dv
        diffs.append(float(np.sqrt(dx * dv * np.sum(diff**2))))
    for lvl in range(levels):
        order = float("nan")
        if lvl > 0 and diffs[lvl] > 0:
            order = float(np.log2(diffs[lvl - 1] / diffs[lvl]))
        rows.append({"dt": dts[lvl], "diff_l2": diffs[lvl], "order": order})
    return rows


def write_effective_config(out_dir: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.json"), "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
