"""Stationary Gaussian kick potentials by random Fourier synthesis.

Each kick ``V_s`` is a finite Fourier sum with independent standard normal
coefficients.  Coefficients come from a Philox stream whose 128-bit key is
``(seed_root, s)``, and mode ``k`` always reads the same two slots of that
stream, so any kick can be regenerated on its own.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .field import Field, Grid

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class KickSpec:
    sigma_target: float = 0.5
    n_modes: int = 32
    cutoff: float = 8.0
    seed_root: int = 0
    # explicit amplitudes (length n_modes) bypass the Gaussian default
    amplitudes: tuple = field(default=None)

    def __post_init__(self):
        if self.sigma_target < 0:
            raise ValueError("sigma_target must be non-negative")
        if self.n_modes < 1:
            raise ValueError("n_modes must be positive")
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.amplitudes is not None:
            if len(self.amplitudes) != self.n_modes:
                raise ValueError("amplitudes must have n_modes entries")
            if min(self.amplitudes) < 0:
                raise ValueError("amplitudes must be non-negative")

    @property
    def spectral_amplitudes(self) -> np.ndarray:
        """a_k for k = 1..K, normalized so that sum a_k^2 = sigma_target^2."""
        if self.amplitudes is not None:
            return np.asarray(self.amplitudes, float)
        k = np.arange(1, self.n_modes + 1)
        raw = np.exp(-(k / self.cutoff) ** 2)
        return self.sigma_target * raw / math.sqrt(np.sum(raw ** 2))

    def to_dict(self) -> dict:
        return {"sigma_target": self.sigma_target, "n_modes": self.n_modes,
                "cutoff": self.cutoff, "seed_root": self.seed_root,
                "amplitudes": None if self.amplitudes is None else list(self.amplitudes)}


@dataclass(frozen=True)
class KickSample:
    potential: Field
    gradient: Field
    kick_index: int


def single_mode(sigma: float, k: int = 1, n_modes: int = None, seed_root: int = 0) -> KickSpec:
    n = n_modes or k
    amps = [0.0] * n
    amps[k - 1] = float(sigma)
    return KickSpec(sigma_target=float(sigma), n_modes=n, seed_root=seed_root,
                    amplitudes=tuple(amps))


def kick_rng(seed_root: int, s: int) -> np.random.Generator:
    key = (seed_root & _MASK64) | ((s & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def kick_coefficients(spec: KickSpec, s: int) -> tuple[np.ndarray, np.ndarray]:
    """(xi_k, eta_k) for k = 1..K."""
    z = kick_rng(spec.seed_root, s).standard_normal(2 * spec.n_modes)
    return z[0::2], z[1::2]


def _basis(spec: KickSpec, grid: Grid):
    k = np.arange(1, spec.n_modes + 1)
    wave = 2 * np.pi * k / grid.length
    phase = np.outer(grid.centers, wave)
    return wave, np.cos(phase), np.sin(phase)


def sample_kick(spec: KickSpec, grid: Grid, s: int, _basis_cache=None) -> KickSample:
    if grid.cells < 8 * spec.n_modes:
        raise ValueError(f"grid with {grid.cells} cells does not resolve "
                         f"{spec.n_modes} modes (need N >= 8K)")
    a = spec.spectral_amplitudes
    xi, eta = kick_coefficients(spec, s)
    wave, c, sn = _basis_cache if _basis_cache is not None else _basis(spec, grid)
    pot = c @ (a * xi) + sn @ (a * eta)
    grad = c @ (a * wave * eta) - sn @ (a * wave * xi)
    return KickSample(Field(grid, pot), Field(grid, grad), int(s))


class KickStream:
    """Kicks for one grid, with the trigonometric basis computed once."""

    def __init__(self, spec: KickSpec, grid: Grid):
        self.spec = spec
        self.grid = grid
        self._basis = _basis(spec, grid) if spec.sigma_target > 0 else None

    def __call__(self, s: int) -> KickSample:
        if self._basis is None:
            zero = Field.constant(self.grid, 0.0)
            return KickSample(zero, zero, int(s))
        return sample_kick(self.spec, self.grid, s, self._basis)


def gradient_variance(spec: KickSpec, length: float) -> float:
    """Exact E[(d/dx V_s(x))^2] = sum_k a_k^2 (2 pi k / L)^2."""
    a = spec.spectral_amplitudes
    k = np.arange(1, spec.n_modes + 1)
    return float(np.sum(a ** 2 * (2 * np.pi * k / length) ** 2))


def potential_variance(spec: KickSpec) -> float:
    return float(np.sum(spec.spectral_amplitudes ** 2))


def check_exp_moment(spec: KickSpec, grid: Grid, lam: float, n_mc: int,
                     first_index: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate of E exp(-lam * min_{[0,1]} V_s) and its standard error."""
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if n_mc < 100:
        raise ValueError("n_mc must be at least 100")
    if lam == 0 or spec.sigma_target == 0:
        return 1.0, 0.0
    x = grid.centers
    window = (x >= 0.0) & (x <= 1.0)
    if not window.any():
        raise ValueError("grid has no cell centre in [0, 1]")
    stream = KickStream(spec, grid)
    vals = np.empty(n_mc)
    for i in range(n_mc):
        s = first_index + i
        vmin = float(np.min(stream(s).potential.values[window]))
        expo = -lam * vmin
        if expo > 709.0:
            raise OverflowError(f"exp overflow for kick index {s} (min V = {vmin})")
        vals[i] = math.exp(expo)
    return float(np.mean(vals)), float(np.std(vals, ddof=1) / math.sqrt(n_mc))
