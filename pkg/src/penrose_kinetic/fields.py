"""Electrostatic field solve for the scaled system and its zero-Debye limit.

vp(epsilon):  V - epsilon^2 V'' = rho - 1 solved spectrally, E = -V'.
vdb:          E = -rho' directly (V is returned as rho for diagnostics).

Both solves are exact on the grid; there is no epsilon-dependent loss of
accuracy.  The constant mode of V is set to rho_hat_0 - 1 (the elliptic
equation at k = 0), which E never sees but the field energy does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SpatialField
from .errors import ModeMismatch


@dataclass(frozen=True)
class FieldMode:
    """Field law selector: kind = 'vp' with epsilon in (0, 1], or 'vdb'."""

    kind: str
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in ("vp", "vdb"):
            raise ValueError(f"unknown field mode {self.kind!r}")
        if self.kind == "vp" and not 0.0 < self.epsilon <= 1.0:
            raise ValueError("vp mode needs epsilon in (0, 1]")

    @staticmethod
    def vp(epsilon: float) -> "FieldMode":
        return FieldMode("vp", epsilon)

    @staticmethod
    def vdb() -> "FieldMode":
        return FieldMode("vdb")


def solve_field(rho: SpatialField, mode: FieldMode) -> tuple[SpatialField, SpatialField]:
    """Return (V, E) for the given density and field law.

    Spectral: V_hat_k = rho_hat_k / (1 + eps^2 k^2) for k != 0 with
    V_hat_0 = rho_hat_0 - 1, and E_hat = -i k V_hat (Nyquist derivative
    zeroed).  k is the physical wavenumber 2 pi n / L.
    """
    n = rho.grid_x.n_x
    k = rho.grid_x.rfft_wavenumbers
    rho_hat = np.fft.rfft(rho.values) / n
    if mode.kind == "vp":
        v_hat = rho_hat / (1.0 + (mode.epsilon * k) ** 2)
        v_hat[0] = rho_hat[0] - 1.0
    else:
        v_hat = rho_hat.copy()
    e_hat = -1j * k * v_hat
    e_hat[-1] = 0.0  # unpaired Nyquist mode carries no odd derivative
    if mode.kind == "vdb":
        V = SpatialField(rho.grid_x, rho.values, meta={"mode": "vdb"})
    else:
        V = SpatialField(rho.grid_x, np.fft.irfft(v_hat * n, n=n),
                         meta={"mode": "vp", "epsilon": mode.epsilon})
    E = SpatialField(rho.grid_x, np.fft.irfft(e_hat * n, n=n), meta=V.meta)
    return V, E


def field_energy(V: SpatialField, mode: FieldMode) -> float:
    """(1/2) integral (V^2 + eps^2 V'^2) dx for vp; (1/2) integral rho^2 dx for vdb.

    Computed spectrally with the same Nyquist convention as solve_field so the
    conserved total energy is internally consistent.
    """
    if V.meta is not None and "mode" in V.meta:
        if V.meta["mode"] != mode.kind:
            raise ModeMismatch(
                f"field tagged {V.meta['mode']!r} but energy requested for {mode.kind!r}"
            )
        if mode.kind == "vp" and V.meta.get("epsilon") not in (None, mode.epsilon):
            raise ModeMismatch("field tagged with a different epsilon")
    n = V.grid_x.n_x
    L = V.grid_x.length
    v_hat = np.fft.fft(V.values) / n
    if mode.kind == "vdb":
        return float(0.5 * L * np.sum(np.abs(v_hat) ** 2))
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=V.grid_x.dx)
    k = np.where(np.abs(np.abs(k) - np.pi / V.grid_x.dx) < 1e-12, 0.0, k)
    w = 1.0 + (mode.epsilon * k) ** 2
    return float(0.5 * L * np.sum(w * np.abs(v_hat) ** 2))
