"""Grids, fields, quadrature, Fourier transforms, interpolation and norms.

Everything downstream (profiles, Penrose scans, the solver, the kernel
operators) is built on the value objects defined here.  All types are
immutable: arrays are copied on construction and marked read-only, so
instances are safe to share across threads.

Conventions
-----------
* x lives on a periodic grid of ``n_x`` uniform nodes, ``x_j = j L / n_x``.
* v lives on a cell-centered grid, ``v_i = -v_max + (i + 1/2) dv`` with
  ``dv = 2 v_max / n_v`` — no duplicated endpoint node.
* The velocity Fourier transform carries a ``1/(2 pi)`` prefactor:
  ``F(p)(xi) = (2 pi)^{-1} * integral p(v) exp(-i xi v) dv``.  This factor
  sets the scale of the Penrose function and must not be dropped.
* Spatial Fourier coefficients are Fourier-series coefficients
  (``g = sum_k g_hat_k exp(i k x)`` with physical wavenumber
  ``k = 2 pi n / L``), so a constant field has ``g_hat_0 = c``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DisplacementTooLarge, GridMismatch, IoError


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GridX:
    """Uniform periodic spatial grid of period ``length`` (default 2*pi)."""

    n_x: int
    length: float = 2.0 * np.pi

    def __post_init__(self):
        if self.n_x <= 0 or self.n_x % 2 != 0:
            raise ValueError(f"n_x must be a positive even integer, got {self.n_x}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def dx(self) -> float:
        return self.length / self.n_x

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_x) * self.dx

    @property
    def wavenumbers(self) -> np.ndarray:
        """Physical wavenumbers 2*pi*n/length in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_x, d=self.dx)

    @property
    def rfft_wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(self.n_x, d=self.dx)


@dataclass(frozen=True)
class GridV:
    """Cell-centered velocity grid on [-v_max, v_max]."""

    n_v: int
    v_max: float = 8.0

    def __post_init__(self):
        if self.n_v <= 0:
            raise ValueError(f"n_v must be positive, got {self.n_v}")
        if not self.v_max > 0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @property
    def nodes(self) -> np.ndarray:
        return -self.v_max + (np.arange(self.n_v) + 0.5) * self.dv


@dataclass(frozen=True)
class VelocityProfile:
    """Sampled velocity profile f(v) (or a derivative of one) on a GridV."""

    grid: GridV
    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.shape != (self.grid.n_v,):
            raise ValueError(f"profile shape {vals.shape} != ({self.grid.n_v},)")
        if not np.isfinite(vals).all():
            raise ValueError("profile values must be finite")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class PhaseField:
    """Phase-space density f(x, v) on a tensor grid, x outer and v inner."""

    grid_x: GridX
    grid_v: GridV
    values: np.ndarray

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.shape != (self.grid_x.n_x, self.grid_v.n_v):
            raise ValueError(
                f"field shape {vals.shape} != ({self.grid_x.n_x}, {self.grid_v.n_v})"
            )
        if not np.isfinite(vals).all():
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def column(self, j: int) -> VelocityProfile:
        return VelocityProfile(self.grid_v, self.values[j])


@dataclass(frozen=True)
class SpatialField:
    """Real field of x alone (density, potential, electric field)."""

    grid_x: GridX
    values: np.ndarray
    meta: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        vals = _readonly(self.values)
        if vals.shape != (self.grid_x.n_x,):
            raise ValueError(f"field shape {vals.shape} != ({self.grid_x.n_x},)")
        if not np.isfinite(vals).all():
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", vals)


def density(f: PhaseField) -> SpatialField:
    """Velocity integral rho(x) = integral f(x, v) dv by the cell-centered rule.

    The summation order is fixed (numpy's deterministic pairwise sum along the
    velocity axis), so repeated calls are bit-stable.
    """
    rho = f.grid_v.dv * np.sum(f.values, axis=1)
    return SpatialField(f.grid_x, rho)


def mass(f: PhaseField) -> float:
    """Total mass dx*dv*sum(f) in a fixed reduction order."""
    return float(f.grid_x.dx * f.grid_v.dv * np.sum(f.values))


def fourier_v(p: VelocityProfile, xi: float) -> complex:
    """Velocity Fourier transform at frequency xi, with the 1/(2 pi) prefactor.

    Returns ``(2 pi)^{-1} dv sum_i p(v_i) exp(-i xi v_i)``.
    """
    if not np.isfinite(xi):
        raise ValueError("xi must be finite")
    phase = np.exp(-1j * xi * p.grid.nodes)
    return complex(p.grid.dv * np.dot(p.values, phase) / (2.0 * np.pi))


def fourier_v_many(p: VelocityProfile, xi: np.ndarray) -> np.ndarray:
    """Vectorized ``fourier_v`` over an array of frequencies."""
    xi = np.asarray(xi, dtype=float)
    phase = np.exp(-1j * np.multiply.outer(xi, p.grid.nodes))
    return p.grid.dv * (phase @ p.values) / (2.0 * np.pi)


def spatial_coefficients(g: SpatialField) -> np.ndarray:
    """Fourier-series coefficients of g in FFT order (constant c -> c at k=0)."""
    return np.fft.fft(g.values) / g.grid_x.n_x


def sobolev_norm_x(g: SpatialField, s: float) -> float:
    """Spectral Sobolev norm ``(sum_k (1+|k|^2)^s |g_hat_k|^2)^{1/2}``.

    Coefficients are series-normalized, so a constant field c has norm |c| for
    every s, and s = 0 gives the mean-square (RMS) norm of the grid values.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    ghat = spatial_coefficients(g)
    k = 2.0 * np.pi * np.fft.fftfreq(g.grid_x.n_x, d=g.grid_x.dx)
    w = (1.0 + k * k) ** s
    return float(np.sqrt(np.sum(w * np.abs(ghat) ** 2)))


def derivative_v_4th(values: np.ndarray, dv: float, axis: int = -1) -> np.ndarray:
    """Fourth-order centered d/dv, one-sided at the domain edges.

    Edge stencils are the usual fourth-order skewed formulas; they matter
    little in practice because profiles are required to be ~0 at +-v_max.
    """
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    n = v.shape[-1]
    if n < 5:
        raise ValueError("need at least 5 velocity nodes for the 4th-order stencil")
    d = np.empty_like(v)
    d[..., 2:-2] = (v[..., :-4] - 8.0 * v[..., 1:-3] + 8.0 * v[..., 3:-1] - v[..., 4:]) / (12.0 * dv)
    d[..., 0] = (-25.0 * v[..., 0] + 48.0 * v[..., 1] - 36.0 * v[..., 2] + 16.0 * v[..., 3] - 3.0 * v[..., 4]) / (12.0 * dv)
    d[..., 1] = (-3.0 * v[..., 0] - 10.0 * v[..., 1] + 18.0 * v[..., 2] - 6.0 * v[..., 3] + v[..., 4]) / (12.0 * dv)
    d[..., -2] = (3.0 * v[..., -1] + 10.0 * v[..., -2] - 18.0 * v[..., -3] + 6.0 * v[..., -4] - v[..., -5]) / (12.0 * dv)
    d[..., -1] = (25.0 * v[..., -1] - 48.0 * v[..., -2] + 36.0 * v[..., -3] - 16.0 * v[..., -4] + 3.0 * v[..., -5]) / (12.0 * dv)
    return np.moveaxis(d, -1, axis)


def shift_interpolate_v(f: PhaseField, displacement: SpatialField) -> PhaseField:
    """Shift every x-row of f in v by displacement(x), cubic-spline interpolated.

    output(x_j, v_i) = f(x_j, v_i - displacement(x_j)), with zero extension
    outside the velocity node hull.  Raises DisplacementTooLarge when any
    |displacement| exceeds v_max / 4.
    """
    if displacement.grid_x != f.grid_x:
        raise GridMismatch("displacement grid does not match the field grid")
    disp = displacement.values
    guard = f.grid_v.v_max / 4.0
    if np.max(np.abs(disp)) > guard:
        raise DisplacementTooLarge(
            f"max |displacement| = {np.max(np.abs(disp)):.3e} exceeds v_max/4 = {guard:.3e}"
        )
    v = f.grid_v.nodes
    dv = f.grid_v.dv
    spl = CubicSpline(v, f.values, axis=1, bc_type="not-a-knot")
    c = spl.c  # (4, n_v - 1, n_x)

    q = v[None, :] - disp[:, None]            # query points, (n_x, n_v)
    inside = (q >= v[0]) & (q <= v[-1])
    qc = np.clip(q, v[0], v[-1])
    cell = np.clip(((qc - v[0]) / dv).astype(int), 0, f.grid_v.n_v - 2)
    t = qc - v[cell]
    rows = np.arange(f.grid_x.n_x)[:, None]
    out = c[0][cell, rows]
    for m in range(1, 4):
        out = out * t + c[m][cell, rows]
    out = np.where(inside, out, 0.0)
    return PhaseField(f.grid_x, f.grid_v, out)


def l2_norm_phase(f: PhaseField) -> float:
    """Phase-space L2 norm sqrt(dx*dv*sum f^2)."""
    return float(np.sqrt(f.grid_x.dx * f.grid_v.dv * np.sum(f.values**2)))


def weighted_sobolev_norm(f: PhaseField, k: int, sigma: float) -> float:
    """Weighted norm with up to k mixed derivatives and weight (1+v^2)^sigma.

    x-derivatives are spectral, v-derivatives use the 4th-order stencil;
    used as an independent bound oracle for the kernel norm.
    """
    kx = 2.0 * np.pi * np.fft.fftfreq(f.grid_x.n_x, d=f.grid_x.dx)
    w = (1.0 + f.grid_v.nodes**2) ** sigma
    total = 0.0
    g_b = f.values
    for beta in range(k + 1):
        ghat = np.fft.fft(g_b, axis=0)
        for alpha in range(k + 1 - beta):
            d = np.fft.ifft(ghat * (1j * kx[:, None]) ** alpha, axis=0).real
            total += f.grid_x.dx * f.grid_v.dv * np.sum(w * d * d)
        if beta < k:
            g_b = derivative_v_4th(g_b, f.grid_v.dv, axis=1)
    return float(np.sqrt(total))


# --- binary snapshot format -------------------------------------------------
# little-endian float64, row-major (x outer, v inner), JSON sidecar with the
# grid geometry and the snapshot time.

def save_phase_field(path_base: str, f: PhaseField, time: float) -> None:
    np.asarray(f.values, dtype="<f8").tofile(path_base + ".f64")
    sidecar = {
        "n_x": f.grid_x.n_x,
        "n_v": f.grid_v.n_v,
        "length": f.grid_x.length,
        "v_max": f.grid_v.v_max,
        "time": time,
    }
    with open(path_base + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_phase_field(path_base: str) -> tuple[PhaseField, float]:
    try:
        with open(path_base + ".json") as fh:
            sc = json.load(fh)
        raw = np.fromfile(path_base + ".f64", dtype="<f8")
    except OSError as exc:
        raise IoError(f"cannot read snapshot {path_base}: {exc}") from exc
    gx = GridX(int(sc["n_x"]), float(sc["length"]))
    gv = GridV(int(sc["n_v"]), float(sc["v_max"]))
    values = raw.reshape(gx.n_x, gv.n_v)
    return PhaseField(gx, gv, values), float(sc["time"])


def save_spatial_field(path_base: str, g: SpatialField, time: float) -> None:
    np.asarray(g.values, dtype="<f8").tofile(path_base + ".f64")
    sidecar = {"n_x": g.grid_x.n_x, "length": g.grid_x.length, "time": time}
    with open(path_base + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_spatial_field(path_base: str) -> tuple[SpatialField, float]:
    try:
        with open(path_base + ".json") as fh:
            sc = json.load(fh)
        raw = np.fromfile(path_base + ".f64", dtype="<f8")
    except OSError as exc:
        raise IoError(f"cannot read snapshot {path_base}: {exc}") from exc
    gx = GridX(int(sc["n_x"]), float(sc["length"]))
    return SpatialField(gx, raw), float(sc["time"])
