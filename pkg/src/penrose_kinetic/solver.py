"""Strang-split semi-Lagrangian integrator for the scaled system and its limit.

One step is: half x-advection, field solve from the current density, full
v-advection, half x-advection.  The x sub-step multiplies Fourier modes by
exp(-i k v dt) and is exact on the grid; the v sub-step traces characteristics
backward and interpolates with cubic splines (the only dissipative piece).
A uniform dt across every epsilon is adequate because the scaled ion system
carries no 1/epsilon plasma-oscillation time scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    PhaseField,
    SpatialField,
    density,
    l2_norm_phase,
    mass,
    shift_interpolate_v,
    sobolev_norm_x,
)
from .errors import NumericalBlowup
from .fields import FieldMode, field_energy, solve_field
from .penrose import ScanConfig, penrose_margin_field

BLOWUP_FACTOR = 1e3  # deterministic abort threshold on linf growth


@dataclass(frozen=True)
class SolverConfig:
    mode: FieldMode
    dt: float
    t_end: float
    diagnostics_every: int = 1
    sobolev_orders: tuple = (0.0, 3.0)
    penrose_scan: ScanConfig | None = None
    penrose_x_samples: int = 4
    keep_snapshots: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if self.diagnostics_every < 1:
            raise ValueError("diagnostics_every must be a positive integer")

    def validate_grid(self, f: PhaseField) -> None:
        # phase-shift aliasing guard
        if self.dt * f.grid_v.v_max > f.grid_x.length / 2.0:
            raise ValueError(
                f"dt*v_max = {self.dt * f.grid_v.v_max:.3g} exceeds L/2 = "
                f"{f.grid_x.length / 2:.3g}"
            )


@dataclass(frozen=True)
class DiagnosticsRecord:
    time: float
    mass: float
    momentum: float
    total_energy: float
    l2_f: float
    linf_f: float
    min_f: float
    rho_sobolev: dict
    n_proxy: float
    penrose_margin: float | None = None

    CSV_FIELDS = ("time", "mass", "momentum", "total_energy", "l2_f", "linf_f",
                  "min_f", "rho_sobolev", "n_proxy", "penrose_margin")

    def csv_row(self) -> list:
        sob = ";".join(f"{s:g}:{v:.17g}" for s, v in sorted(self.rho_sobolev.items()))
        pm = "" if self.penrose_margin is None else f"{self.penrose_margin:.17g}"
        return [f"{self.time:.17g}", f"{self.mass:.17g}", f"{self.momentum:.17g}",
                f"{self.total_energy:.17g}", f"{self.l2_f:.17g}", f"{self.linf_f:.17g}",
                f"{self.min_f:.17g}", sob, f"{self.n_proxy:.17g}", pm]


@dataclass(frozen=True)
class RunResult:
    final: PhaseField
    trace: list
    snapshots: list  # [(time, PhaseField)] when requested


def advect_x(f: PhaseField, dt: float) -> PhaseField:
    """Exact free streaming: x-modes of each v-column gain phase e^{-i k v dt}."""
    if dt == 0.0:
        return f
    k = f.grid_x.rfft_wavenumbers
    fhat = np.fft.rfft(f.values, axis=0)
    fhat *= np.exp(-1j * dt * np.outer(k, f.grid_v.nodes))
    return PhaseField(f.grid_x, f.grid_v, np.fft.irfft(fhat, n=f.grid_x.n_x, axis=0))


def advect_v(f: PhaseField, E: SpatialField, dt: float) -> PhaseField:
    """Force sub-step: shift in v by E(x) dt along backward characteristics."""
    disp = SpatialField(f.grid_x, E.values * dt)
    return shift_interpolate_v(f, disp)


def step(state: PhaseField, cfg: SolverConfig) -> PhaseField:
    """One Strang step; second-order accurate in dt."""
    half = advect_x(state, 0.5 * cfg.dt)
    _, E = solve_field(density(half), cfg.mode)
    kicked = advect_v(half, E, cfg.dt)
    return advect_x(kicked, 0.5 * cfg.dt)


def _kinetic_energy(f: PhaseField) -> float:
    v2 = f.grid_v.nodes**2
    return float(0.5 * f.grid_x.dx * f.grid_v.dv * np.sum(f.values @ v2))


def _momentum(f: PhaseField) -> float:
    return float(f.grid_x.dx * f.grid_v.dv * np.sum(f.values @ f.grid_v.nodes))


def diagnose(f: PhaseField, t: float, cfg: SolverConfig,
             sup_l2: float, rho_hist: list) -> DiagnosticsRecord:
    rho = density(f)
    V, _ = solve_field(rho, cfg.mode)
    sob = {float(s): sobolev_norm_x(rho, float(s)) for s in cfg.sobolev_orders}
    l2f = l2_norm_phase(f)
    # N proxy: running sup of ||f||_L2 plus the L2-in-time accumulation of
    # ||rho||_{H^s} at the largest configured order (trapezoid over samples)
    s_track = max(cfg.sobolev_orders)
    rho_hist.append((t, sob[float(s_track)]))
    acc = 0.0
    for (t0, a0), (t1, a1) in zip(rho_hist, rho_hist[1:]):
        acc += 0.5 * (a0**2 + a1**2) * (t1 - t0)
    margin = None
    if cfg.penrose_scan is not None:
        margin = penrose_margin_field(f, cfg.penrose_scan, cfg.penrose_x_samples)
    return DiagnosticsRecord(
        time=t,
        mass=mass(f),
        momentum=_momentum(f),
        total_energy=_kinetic_energy(f) + field_energy(V, cfg.mode),
        l2_f=l2f,
        linf_f=float(np.max(np.abs(f.values))),
        min_f=float(np.min(f.values)),
        rho_sobolev=sob,
        n_proxy=max(sup_l2, l2f) + float(np.sqrt(acc)),
        penrose_margin=margin,
    )


def run(f0: PhaseField, cfg: SolverConfig) -> RunResult:
    """Integrate to t_end, emitting diagnostics every diagnostics_every steps.

    Raises NumericalBlowup (carrying the partial trace) when linf grows past
    BLOWUP_FACTOR times its initial value.
    """
    cfg.validate_grid(f0)
    n_steps = int(round(cfg.t_end / cfg.dt))
    trace: list = []
    snapshots: list = []
    rho_hist: list = []
    sup_l2 = 0.0
    linf0 = float(np.max(np.abs(f0.values)))

    state = f0
    rec = diagnose(state, 0.0, cfg, sup_l2, rho_hist)
    trace.append(rec)
    sup_l2 = rec.l2_f
    if cfg.keep_snapshots:
        snapshots.append((0.0, state))

    for n in range(1, n_steps + 1):
        state = step(state, cfg)
        t = n * cfg.dt
        if n % cfg.diagnostics_every == 0 or n == n_steps:
            rec = diagnose(state, t, cfg, sup_l2, rho_hist)
            trace.append(rec)
            sup_l2 = max(sup_l2, rec.l2_f)
            if cfg.keep_snapshots:
                snapshots.append((t, state))
            if rec.linf_f > BLOWUP_FACTOR * linf0:
                raise NumericalBlowup(
                    f"linf(f) = {rec.linf_f:.3e} exceeded {BLOWUP_FACTOR:g} x initial at t = {t:.3g}",
                    trace=trace,
                )
    return RunResult(final=state, trace=trace, snapshots=snapshots)


def write_trace_csv(path: str, trace: list) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DiagnosticsRecord.CSV_FIELDS)
        for rec in trace:
            w.writerow(rec.csv_row())
