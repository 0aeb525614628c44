"""Penrose stability function, margin scans and the zero-order symbol.

For a velocity profile p the stability function is

    P(gamma, tau, eta, p) = 1 - a(gamma, tau, eta) / (1 + eta^2),
    a(gamma, tau, eta)    = int_0^inf exp(-(gamma + i tau) s) *
                            (i eta) * (F_v p')(eta s) ds,

with the package's 1/(2 pi) velocity-transform convention.  The symbol a is
homogeneous of degree zero in (gamma, tau, eta), so |P| only needs to be
scanned over unit directions times a radial scale sigma:

    P_tilde(dir, sigma) = 1 - a(dir) / (1 + sigma^2 eta_dir^2),

which tends to 1 as sigma -> inf for any fixed direction with eta != 0.

Two independent evaluation routes are kept as mutual oracles:

* ``s_form`` - the Laplace-time quadrature above, computed as a composite
  trapezoid on [0, s_max].  Exchanging the s and v summations turns the
  trapezoid into an exact geometric sum per velocity node, so the cost is
  O(n_v) regardless of the number of s nodes.  s_max is capped both by the
  exp(-gamma s) envelope and by the measured decay of F_v p', which keeps
  the discrete velocity transform inside its alias-free band.
* ``v_form`` - the equivalent velocity-space representation
  P = 1 - eta/(1+eta^2) * (2 pi)^{-1} * int p'(v) / (tau + eta v - i gamma) dv,
  evaluated by integrating a refined piecewise-linear interpolant of p'
  exactly against the Cauchy kernel; at gamma = 0 the principal value plus
  the i pi residue (Sokhotski-Plemelj) closes the formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import PhaseField, VelocityProfile, derivative_v_4th
from .errors import InvalidFrequency, QuadratureNotConverged

_DEFAULT_NS = 65536
_DEFAULT_SMAX = None  # adaptive
_REFINE = 32          # v_form subgrid refinement factor
_TAIL_TOL = 1e-10     # certified s-integral tail
_DECAY_TOL = 1e-13    # relative transform level treated as fully decayed


@dataclass(frozen=True)
class FreqPoint:
    """A frequency triple (gamma, tau, eta); gamma >= 0 and eta != 0."""

    gamma: float
    tau: float
    eta: float

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidFrequency("gamma must be >= 0")
        if self.eta == 0:
            raise InvalidFrequency("eta must be nonzero")


@dataclass(frozen=True)
class SQuad:
    """s-integral quadrature: truncation point (None = adaptive) and node count."""

    s_max: float | None = _DEFAULT_SMAX
    n_s: int = _DEFAULT_NS


@dataclass(frozen=True)
class ScanConfig:
    """Resolution of the margin scan over the unit half-sphere times sigma."""

    n_sphere: int = 32
    sigma_values: tuple = field(default=())
    sigma_max: float = 64.0
    s_quad: SQuad = field(default_factory=SQuad)

    def __post_init__(self):
        if self.n_sphere < 16:
            raise ValueError("n_sphere must be at least 16")
        if not self.sigma_values:
            # geometric ladder {0} U {sigma_max 2^-j}, 25 points total
            sigmas = (0.0,) + tuple(self.sigma_max * 2.0 ** (-j) for j in range(23, -1, -1))
            object.__setattr__(self, "sigma_values", sigmas)
        if max(self.sigma_values) > self.sigma_max:
            raise ValueError("sigma_values must lie in [0, sigma_max]")


@dataclass(frozen=True)
class PenroseReport:
    """Result of a margin scan."""

    margin: float
    argmin: tuple  # (FreqPoint unit direction, sigma)
    stable_at: dict
    resolution: ScanConfig

    def to_json_dict(self) -> dict:
        d, s = self.argmin
        return {
            "margin": self.margin,
            "argmin": {"gamma": d.gamma, "tau": d.tau, "eta": d.eta, "sigma": s},
            "stable_at": {str(c): bool(v) for c, v in self.stable_at.items()},
        }


# ---------------------------------------------------------------------------
# profile-side preparation


def profile_derivative(p: VelocityProfile) -> np.ndarray:
    """p'(v) on the nodes by 4th-order centered differences."""
    return derivative_v_4th(p.values, p.grid.dv)


class _ProfileData:
    """Cached per-profile quantities shared by both evaluation engines."""

    def __init__(self, p: VelocityProfile):
        self.grid = p.grid
        self.v = p.grid.nodes
        self.dv = p.grid.dv
        self.pp = profile_derivative(p)
        # fine piecewise-linear representation of p' (spline-resampled)
        if self.pp.any():
            spline = CubicSpline(self.v, self.pp, bc_type="not-a-knot")
            n_fine = (p.grid.n_v - 1) * _REFINE + 1
            self.v_fine = np.linspace(self.v[0], self.v[-1], n_fine)
            self.pp_fine = spline(self.v_fine)
            self.spline = spline
        else:
            self.v_fine = self.v
            self.pp_fine = self.pp
            self.spline = None
        self._decay = None

    # -- s_form ingredients --------------------------------------------------

    def transform_cutoff(self) -> tuple[float, float]:
        """(xi_cut, peak): |F_v p'| has decayed below _DECAY_TOL*peak past xi_cut."""
        if self._decay is None:
            xi_band = np.linspace(0.0, np.pi / self.dv, 512)
            mag = np.abs(
                self.dv * np.exp(-1j * np.outer(xi_band, self.v)) @ self.pp
            ) / (2.0 * np.pi)
            peak = float(mag.max())
            if peak == 0.0:
                self._decay = (xi_band[-1], 0.0)
            else:
                suffix = np.maximum.accumulate(mag[::-1])[::-1]
                idx = np.searchsorted(-suffix, -_DECAY_TOL * peak)
                idx = min(idx, xi_band.size - 1)
                self._decay = (float(xi_band[idx]), peak)
        return self._decay

    def s_truncation(self, gamma: float, eta: float) -> float:
        """s_max with a certified tail: envelope decay and transform decay."""
        xi_cut, peak = self.transform_cutoff()
        if peak == 0.0:
            return 1.0
        s_decay = xi_cut / abs(eta)
        if gamma > 0:
            # tail <= |eta| peak exp(-gamma s)/gamma  < _TAIL_TOL
            s_gamma = math.log(max(abs(eta) * peak / (gamma * _TAIL_TOL), 2.0)) / gamma
            return max(min(s_gamma, s_decay), 16.0 * np.finfo(float).tiny)
        return s_decay


def _expm1c(z: np.ndarray) -> np.ndarray:
    """Complex expm1, series-corrected near zero where exp(z)-1 cancels."""
    z = np.asarray(z, dtype=complex)
    out = np.exp(z) - 1.0
    small = np.abs(z) < 1e-4
    if np.any(small):
        zs = z[small]
        out[small] = zs * (1.0 + zs / 2.0 * (1.0 + zs / 3.0 * (1.0 + zs / 4.0)))
    return out


def _geometric_trapezoid(delta: np.ndarray, n_s: int) -> np.ndarray:
    """sum_{j=0}^{n} w_j exp(-j*delta) with trapezoid endpoint weights 1/2.

    Equals the composite trapezoid of exp(-delta s / ds) sampled on j = 0..n,
    written through expm1 so the near-cancellation at small delta is stable.
    """
    q_n = np.exp(-n_s * delta)
    em1 = _expm1c(-delta)
    emn1 = _expm1c(-(n_s - 1) * delta)
    interior = np.exp(-delta) * emn1 / em1
    return 0.5 * (1.0 + q_n) + interior


def _symbol_s_form(data: _ProfileData, gamma: float, tau: float, eta: float,
                   s_quad: SQuad) -> complex:
    """Trapezoid evaluation of a(gamma, tau, eta); raises if not converged."""
    if gamma <= 0:
        raise InvalidFrequency("s_form requires gamma > 0")
    if not data.pp.any():
        return 0.0 + 0.0j
    s_max = s_quad.s_max if s_quad.s_max is not None else data.s_truncation(gamma, eta)

    def value(n_s: int) -> complex:
        ds = s_max / n_s
        delta = (gamma + 1j * (tau + eta * data.v)) * ds
        s_sum = _geometric_trapezoid(delta, n_s)
        acc = np.dot(data.pp, s_sum)
        return complex(1j * eta * ds * data.dv * acc / (2.0 * np.pi))

    coarse = value(s_quad.n_s)
    fine = value(2 * s_quad.n_s)
    if abs(fine - coarse) > 1e-8:
        raise QuadratureNotConverged(
            f"s-integral changed by {abs(fine - coarse):.3e} under doubling"
        )
    return fine


_CHUNK_ELEMS = 1 << 22  # cap on poles x cells intermediates (~64 MB complex)


def _cauchy_linear(v_fine: np.ndarray, g_fine: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Exact integral of the piecewise-linear interpolant of g against 1/(v - w).

    ``w`` is a complex array of pole locations (Im w != 0); for real poles use
    ``_cauchy_linear_pv``.  Vectorized over poles in memory-capped chunks.
    """
    a = v_fine[:-1]
    b = v_fine[1:]
    h = b - a
    beta = (g_fine[1:] - g_fine[:-1]) / h
    alpha = g_fine[:-1]
    const = float(np.dot(beta, h))
    w = np.asarray(w, dtype=complex).ravel()
    out = np.empty(w.size, dtype=complex)
    block = max(_CHUNK_ELEMS // max(a.size, 1), 1)
    for lo in range(0, w.size, block):
        W = w[lo:lo + block].reshape(-1, 1)
        logs = np.log((b - W) / (a - W))
        out[lo:lo + block] = const + ((alpha + beta * (W - a)) * logs).sum(axis=1)
    return out


def _cauchy_linear_pv(v_fine: np.ndarray, g_fine: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Principal value of the same integral for real poles w."""
    a = v_fine[:-1]
    b = v_fine[1:]
    h = b - a
    beta = (g_fine[1:] - g_fine[:-1]) / h
    alpha = g_fine[:-1]
    const = float(np.dot(beta, h))
    w = np.asarray(w, dtype=float).ravel()
    out = np.empty(w.size, dtype=float)
    block = max(_CHUNK_ELEMS // max(a.size, 1), 1)
    eps = 1e-9 * h[0]
    for lo in range(0, w.size, block):
        W = w[lo:lo + block].reshape(-1, 1)
        # nudge poles off fine-grid nodes; the PV is continuous there but the
        # per-cell log expressions are not individually finite
        near = np.abs(W - v_fine[None, :]).min(axis=1, keepdims=True) < eps
        W = np.where(near, W + 16 * eps, W)
        logs = np.log(np.abs(b - W) / np.abs(a - W))
        out[lo:lo + block] = const + ((alpha + beta * (W - a)) * logs).sum(axis=1)
    return out


def _symbol_v_form_many(data: _ProfileData, gamma: np.ndarray, tau: np.ndarray,
                        eta: np.ndarray) -> np.ndarray:
    """a(gamma, tau, eta) for arrays of frequency points via the Cauchy route.

    a = (2 pi)^{-1} * int p'(v)/(v - w) dv  with  w = (-tau + i gamma)/eta;
    gamma = 0 entries take the principal value plus i pi sign(eta) p'(w).
    """
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(eta == 0.0):
        raise InvalidFrequency("eta must be nonzero")
    if not data.pp.any():
        return np.zeros(gamma.shape, dtype=complex)
    out = np.empty(gamma.shape, dtype=complex)
    w = (-tau + 1j * gamma) / eta
    interior = gamma > 0
    if np.any(interior):
        out[interior] = _cauchy_linear(data.v_fine, data.pp_fine, w[interior])
    boundary = ~interior
    if np.any(boundary):
        wr = np.real(w[boundary])
        pv = _cauchy_linear_pv(data.v_fine, data.pp_fine, wr)
        inside = (wr >= data.v_fine[0]) & (wr <= data.v_fine[-1])
        res = np.where(inside, data.spline(np.clip(wr, data.v_fine[0], data.v_fine[-1])), 0.0)
        out[boundary] = pv + 1j * np.pi * np.sign(eta[boundary]) * res
    return out / (2.0 * np.pi)


# ---------------------------------------------------------------------------
# public operations


def symbol_a(p: VelocityProfile, z: FreqPoint, s_quad: SQuad = SQuad()) -> complex:
    """The zero-order symbol a(z) by the s-form quadrature engine (gamma > 0).

    Homogeneous of degree zero: a(lambda z) = a(z); the Penrose function is
    P = 1 - a / (1 + eta^2) with the same quadrature.
    """
    return _symbol_s_form(_ProfileData(p), z.gamma, z.tau, z.eta, s_quad)


def penrose_value(p: VelocityProfile, z: FreqPoint, mode: str = "v_form",
                  s_quad: SQuad = SQuad()) -> complex:
    """P(z, p) in either evaluation mode; the two modes are mutual oracles."""
    if mode == "s_form":
        a = _symbol_s_form(_ProfileData(p), z.gamma, z.tau, z.eta, s_quad)
    elif mode == "v_form":
        a = _symbol_v_form_many(
            _ProfileData(p), np.array([z.gamma]), np.array([z.tau]), np.array([z.eta])
        )[0]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return 1.0 + 0.0j - a / (1.0 + z.eta**2)


def _sphere_directions(n_sphere: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Grid on the half-sphere gamma^2+tau^2+eta^2 = 1, gamma >= 0, eta != 0.

    Polar angle from the gamma pole includes the equator (gamma = 0, where
    the infimum typically sits) and excludes the pole itself (eta = 0 there).
    Azimuths are offset by half a step so sin(az) never vanishes, plus the
    two exact tau = 0 azimuths: for reflection-symmetric profiles the
    minimizing direction is exactly (0, 0, +-1) and the grid should contain
    it rather than straddle it.
    """
    n_polar = max(n_sphere // 2, 8)
    theta = 0.5 * np.pi * (1.0 - np.arange(n_polar) / n_polar)  # (0, pi/2]
    az = (np.arange(n_sphere) + 0.5) * (2.0 * np.pi / n_sphere)
    az = np.concatenate([az, [0.5 * np.pi, 1.5 * np.pi]])
    T, A = np.meshgrid(theta, az, indexing="ij")
    gamma = np.cos(T).ravel()
    tau = (np.sin(T) * np.cos(A)).ravel()
    eta = (np.sin(T) * np.sin(A)).ravel()
    keep = np.abs(eta) > 1e-12
    return gamma[keep], tau[keep], eta[keep]


def _sigma_line_min(a: np.ndarray, eta: np.ndarray, sigma_max: float):
    """Exact min of |1 - a x| over x = 1/(1 + sigma^2 eta^2), sigma in [0, sigma_max].

    The sigma-dependence of P_tilde enters only through the real factor x,
    so the minimization along each sigma ray is a one-dimensional quadratic
    with closed-form solution; returns (min values, optimal sigma).
    """
    x_min = 1.0 / (1.0 + (sigma_max * eta) ** 2)
    aa = np.abs(a) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        x_star = np.where(aa > 0, np.real(a) / np.where(aa > 0, aa, 1.0), 1.0)
    x_star = np.clip(x_star, x_min, 1.0)
    vals = np.abs(1.0 - a * x_star)
    with np.errstate(divide="ignore", invalid="ignore"):
        sig = np.sqrt(np.maximum(1.0 / x_star - 1.0, 0.0)) / np.abs(eta)
    return vals, sig


def _margin_eval(data: _ProfileData, gamma, tau, eta, sigmas) -> np.ndarray:
    """|P_tilde| on directions x sigmas; one symbol evaluation per direction."""
    a = _symbol_v_form_many(data, gamma, tau, eta)
    sig = np.asarray(sigmas, dtype=float)
    coupling = 1.0 + np.multiply.outer(eta**2, sig**2)
    return np.abs(1.0 - a[:, None] / coupling)


def penrose_margin(p: VelocityProfile, cfg: ScanConfig = ScanConfig(),
                   c0_candidates: tuple = (0.05, 0.1, 0.2, 0.5)) -> PenroseReport:
    """Estimated inf |P| over the compactified frequency set.

    Scans |P_tilde| on (half-sphere directions) x (sigma ladder), sharpens
    each direction with the exact closed-form minimum over its sigma ray,
    refines once with a 4x local subdivision around the argmin direction,
    and accounts for the analytic sigma -> inf limit |P_tilde| -> 1.
    Deterministic; no stochastic optimizer.  Margins of rough tabulated
    profiles are computed on the same footing but carry no tail
    certification.
    """
    data = _ProfileData(p)
    gam, tau, eta = _sphere_directions(cfg.n_sphere)
    sigmas = np.asarray(cfg.sigma_values, dtype=float)
    a = _symbol_v_form_many(data, gam, tau, eta)
    grid_vals = np.abs(1.0 - a[:, None] / (1.0 + np.multiply.outer(eta**2, sigmas**2)))
    line_vals, line_sig = _sigma_line_min(a, eta, cfg.sigma_max)

    i_grid, j_grid = np.unravel_index(int(np.argmin(grid_vals)), grid_vals.shape)
    i_line = int(np.argmin(line_vals))
    if line_vals[i_line] <= grid_vals[i_grid, j_grid]:
        margin = float(line_vals[i_line])
        i_dir, arg_sig = i_line, float(line_sig[i_line])
    else:
        margin = float(grid_vals[i_grid, j_grid])
        i_dir, arg_sig = i_grid, float(sigmas[j_grid])
    arg_dir = FreqPoint(float(gam[i_dir]), float(tau[i_dir]), float(eta[i_dir]))

    # one local 4x subdivision around the argmin direction; sigma handled by
    # the exact line minimum at each refined direction
    theta0 = math.acos(min(gam[i_dir], 1.0))
    az0 = math.atan2(eta[i_dir], tau[i_dir]) % (2.0 * np.pi)
    n_polar = max(cfg.n_sphere // 2, 8)
    dth = 0.5 * np.pi / n_polar
    daz = 2.0 * np.pi / cfg.n_sphere
    theta_ref = np.clip(theta0 + np.linspace(-dth, dth, 9), 0.0, 0.5 * np.pi)
    az_ref = az0 + np.linspace(-daz, daz, 9)
    Tr, Ar = np.meshgrid(theta_ref, az_ref, indexing="ij")
    gr = np.cos(Tr).ravel()
    tr = (np.sin(Tr) * np.cos(Ar)).ravel()
    er = (np.sin(Tr) * np.sin(Ar)).ravel()
    keep = np.abs(er) > 1e-12
    gr, tr, er = gr[keep], tr[keep], er[keep]
    if gr.size:
        a_ref = _symbol_v_form_many(data, gr, tr, er)
        ref_vals, ref_sig = _sigma_line_min(a_ref, er, cfg.sigma_max)
        jr = int(np.argmin(ref_vals))
        if ref_vals[jr] < margin:
            margin = float(ref_vals[jr])
            arg_dir = FreqPoint(float(gr[jr]), float(tr[jr]), float(er[jr]))
            arg_sig = float(ref_sig[jr])

    # analytic tail: |P_tilde| -> 1 as sigma -> inf, so the margin never
    # exceeds 1 (attained identically for the zero profile)
    margin = min(margin, 1.0)
    stable = {c: margin >= c for c in c0_candidates}
    return PenroseReport(margin, (arg_dir, arg_sig), stable, cfg)


def penrose_margin_field(f: PhaseField, cfg: ScanConfig = ScanConfig(),
                         x_samples: int = 8) -> float:
    """min over sampled x-columns of the profile margin of f(x_j, .)."""
    if x_samples > f.grid_x.n_x:
        raise ValueError("x_samples exceeds n_x")
    cols = np.unique(np.linspace(0, f.grid_x.n_x, x_samples, endpoint=False).astype(int))
    return min(penrose_margin(f.column(int(j)), cfg).margin for j in cols)


def penrose_integral_test(p: VelocityProfile) -> tuple[float, float]:
    """Classical instability integral at the deepest interior minimum.

    Returns (I, v0) with I = int (p(v) - p(v0)) / (v - v0)^2 dv.  Under the
    package's transform normalization the profile admits an unstable mode at
    wavenumber eta iff I > 2 pi (1 + eta^2); no interior minimum means the
    test does not apply (I = -inf).
    """
    vals = p.values
    interior = np.arange(1, vals.size - 1)
    mins = interior[(vals[interior] <= vals[interior - 1]) & (vals[interior] <= vals[interior + 1])]
    # exclude flat tails: require a strictly larger sample on both sides
    true_mins = [i for i in mins
                 if vals[:i].max(initial=-np.inf) > vals[i] + 1e-13
                 and vals[i + 1:].max(initial=-np.inf) > vals[i] + 1e-13]
    if not true_mins:
        return float("-inf"), float("nan")
    i0 = min(true_mins, key=lambda i: vals[i])
    v = p.grid.nodes
    v0 = float(v[i0])
    integrand = np.empty_like(vals)
    off = v != v0
    integrand[off] = (vals[off] - vals[i0]) / (v[off] - v0) ** 2
    # finite limit p''(v0)/2 at the minimum itself
    d2 = derivative_v_4th(derivative_v_4th(vals, p.grid.dv), p.grid.dv)
    integrand[~off] = 0.5 * d2[i0]
    return float(p.grid.dv * np.sum(integrand)), v0
