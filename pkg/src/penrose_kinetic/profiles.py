"""Velocity profiles and phase-space initial data.

The zoo covers the stable class (Maxwellians, any one-bump profile) and the
canonical unstable configuration (two separated beams).  All builders
normalize the *discrete* mass: ``dv * sum(values) == density`` exactly, so
that downstream density diagnostics see a mean of exactly 1 and the field
solver's ``rho - 1`` source has a discretely zero constant mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GridV, GridX, PhaseField, VelocityProfile, density
from .errors import NegativeDistribution

PROFILE_KINDS = ("maxwellian", "two_stream", "bump_on_tail", "custom_table")
MODULATIONS = ("density", "temperature", "velocity")


@dataclass(frozen=True)
class ProfileSpec:
    """Parameters for one homogeneous velocity profile.

    kind-specific fields:
      maxwellian   -- u (mean), temperature
      two_stream   -- a (half separation), sigma_b (beam width); equal beams
      bump_on_tail -- u, temperature for the bulk plus beam_fraction,
                      beam_u, sigma_b for the tail beam
      custom_table -- table (values sampled on the target grid)
    """

    kind: str
    density: float = 1.0
    u: float = 0.0
    temperature: float = 1.0
    a: float = 1.0
    sigma_b: float = 0.1
    beam_fraction: float = 0.5
    beam_u: float = 4.0
    table: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if not self.density > 0:
            raise ValueError("density must be positive")
        if self.kind in ("maxwellian", "bump_on_tail") and not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.kind in ("two_stream", "bump_on_tail") and not self.sigma_b > 0:
            raise ValueError("sigma_b must be positive")
        if not 0.0 <= self.beam_fraction <= 1.0:
            raise ValueError("beam_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class InitialDataSpec:
    """Base profile plus a single-mode spatial modulation."""

    base: ProfileSpec
    perturbation_amplitude: float = 0.0
    perturbation_mode: int = 1
    spatial_modulation: str = "density"

    def __post_init__(self):
        if self.perturbation_mode < 1:
            raise ValueError("perturbation_mode must be a positive integer")
        if self.spatial_modulation not in MODULATIONS:
            raise ValueError(f"unknown modulation {self.spatial_modulation!r}")


def _gaussian(v: np.ndarray, u: float, temperature: float) -> np.ndarray:
    # normalized Maxwellian: mass 1, peak (2 pi T)^{-1/2} at v = u
    return np.exp(-((v - u) ** 2) / (2.0 * temperature)) / np.sqrt(2.0 * np.pi * temperature)


def _renormalize(values: np.ndarray, dv: float, target_mass: float) -> np.ndarray:
    m = dv * np.sum(values)
    if m <= 0:
        raise ValueError("profile has nonpositive discrete mass; enlarge v_max")
    return values * (target_mass / m)


def build_maxwellian(spec: ProfileSpec, grid: GridV) -> VelocityProfile:
    """Maxwellian with mean u, temperature T: density*(2 pi T)^{-1/2} exp(-(v-u)^2/(2T)).

    Discrete mass is renormalized to exactly ``density`` (the extra factor is
    O(1e-16) once v_max covers ~8 thermal widths).
    """
    if spec.kind != "maxwellian":
        raise ValueError("spec.kind must be 'maxwellian'")
    vals = spec.density * _gaussian(grid.nodes, spec.u, spec.temperature)
    return VelocityProfile(grid, _renormalize(vals, grid.dv, spec.density))


def build_two_stream(spec: ProfileSpec, grid: GridV) -> VelocityProfile:
    """Equal-mass beams at +-a with width sigma_b (temperature sigma_b^2)."""
    if spec.kind != "two_stream":
        raise ValueError("spec.kind must be 'two_stream'")
    if spec.beam_fraction != 0.5:
        raise ValueError("only equal beams are supported (beam_fraction = 0.5)")
    t = spec.sigma_b**2
    vals = 0.5 * spec.density * (
        _gaussian(grid.nodes, -spec.a, t) + _gaussian(grid.nodes, spec.a, t)
    )
    return VelocityProfile(grid, _renormalize(vals, grid.dv, spec.density))


def build_bump_on_tail(spec: ProfileSpec, grid: GridV) -> VelocityProfile:
    """Bulk Maxwellian plus a beam of mass fraction beam_fraction at beam_u."""
    if spec.kind != "bump_on_tail":
        raise ValueError("spec.kind must be 'bump_on_tail'")
    bulk = (1.0 - spec.beam_fraction) * _gaussian(grid.nodes, spec.u, spec.temperature)
    beam = spec.beam_fraction * _gaussian(grid.nodes, spec.beam_u, spec.sigma_b**2)
    vals = spec.density * (bulk + beam)
    return VelocityProfile(grid, _renormalize(vals, grid.dv, spec.density))


def build_profile(spec: ProfileSpec, grid: GridV) -> VelocityProfile:
    """Dispatch on spec.kind."""
    if spec.kind == "maxwellian":
        return build_maxwellian(spec, grid)
    if spec.kind == "two_stream":
        return build_two_stream(spec, grid)
    if spec.kind == "bump_on_tail":
        return build_bump_on_tail(spec, grid)
    vals = np.asarray(spec.table, dtype=float)
    if vals.shape != (grid.n_v,):
        raise ValueError(f"custom table length {vals.shape} != n_v {grid.n_v}")
    return VelocityProfile(grid, vals)


def build_initial_data(spec: InitialDataSpec, gx: GridX, gv: GridV) -> PhaseField:
    """Tensor initial data with a single-mode modulation, mean density exactly 1.

    density modulation:     f0 = p(v) (1 + delta cos(2 pi k0 x / L))
    temperature modulation: Maxwellian columns with T(x) = T (1 + delta cos(...))
    velocity modulation:    Maxwellian columns recentered at u + delta cos(...)

    The discrete mean density is divided out after assembly, so the constant
    Fourier mode of rho - 1 vanishes exactly.
    """
    delta = spec.perturbation_amplitude
    phase = np.cos(2.0 * np.pi * spec.perturbation_mode * gx.nodes / gx.length)
    if spec.spatial_modulation == "density":
        p = build_profile(spec.base, gv)
        values = np.outer(1.0 + delta * phase, p.values)
    else:
        if spec.base.kind != "maxwellian":
            raise ValueError(
                f"{spec.spatial_modulation} modulation requires a maxwellian base"
            )
        cols = np.empty((gx.n_x, gv.n_v))
        for j in range(gx.n_x):
            if spec.spatial_modulation == "temperature":
                t_j = spec.base.temperature * (1.0 + delta * phase[j])
                if t_j <= 0:
                    raise NegativeDistribution("temperature modulation drives T <= 0")
                cols[j] = spec.base.density * _gaussian(gv.nodes, spec.base.u, t_j)
            else:
                u_j = spec.base.u + delta * phase[j]
                cols[j] = spec.base.density * _gaussian(gv.nodes, u_j, spec.base.temperature)
        values = cols
    if np.min(values) < 0.0:
        raise NegativeDistribution(
            f"initial data reaches {np.min(values):.3e}; reduce the amplitude"
        )
    f = PhaseField(gx, gv, values)
    mean_density = float(np.mean(density(f).values))
    return PhaseField(gx, gv, values / mean_density)


def is_one_bump(p: VelocityProfile, tol: float = 1e-14) -> bool:
    """True iff the samples rise to a single peak and then fall.

    Plateaus within ``tol`` count as monotone, so constants and the zero
    profile qualify.  One-bump profiles are automatically Penrose-stable in
    one dimension.
    """
    d = np.diff(p.values)
    rise = np.where(d > tol)[0]
    fall = np.where(d < -tol)[0]
    if rise.size == 0 or fall.size == 0:
        return True
    # unimodal iff every strict rise precedes every strict fall
    return rise.max() < fall.min()
