"""Kolmogorov turbulence as Zernike phase screens, plus the adaptive-optics model.

Zernike modes follow the unnormalized convention Z = R_n^|m| cos/sin (no Noll
sqrt(2(n+1)) factor), so coefficient variances carry the matching 2(n+1) (or
n+1 for m=0) rescaling of the Noll values.  The analytic variance expression is
validated against direct numerical integration of the Kolmogorov-weighted
Zernike power spectrum in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma

from .optics import FieldGrid, Grid, GridMismatchError

# Kolmogorov phase PSD constant (cycles/m convention):
# Phi(f) = KOLMOGOROV_PSD_CONST * r0^{-5/3} * f^{-11/3}, chosen so that the
# phase structure function equals 6.8839 (r/r0)^{5/3}.
KOLMOGOROV_PSD_CONST = float(
    gamma(11.0 / 6.0) ** 2
    / (2.0 * np.pi ** (11.0 / 3.0))
    * (24.0 * gamma(6.0 / 5.0) / 5.0) ** (5.0 / 6.0)
)


@dataclass(frozen=True)
class TurbulenceParams:
    """Channel and screen-generation parameters (SI units)."""

    cn2: float  # refractive-index structure constant, m^(-2/3)
    length: float  # channel length L, m
    wavelength: float  # m
    aperture: float  # receiver aperture D, m
    max_order: int = 7  # highest Zernike radial order included
    seed: int = 0
    include_m0: bool = False
    window_normalized: bool = False  # normalize rho by the window corner instead of D/2

    def __post_init__(self):
        for name in ("cn2", "length", "wavelength", "aperture"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")

    def fried(self) -> float:
        return fried_parameter(self.cn2, self.length, self.wavelength)


@dataclass(frozen=True)
class PhaseScreen:
    """A real aberration phase on a grid plus the Zernike coefficients behind it."""

    grid: Grid
    phase: np.ndarray
    coeffs: tuple[tuple[int, int, float], ...]  # (n, m, c_nm)
    aperture: float
    window_normalized: bool = False

    def __post_init__(self):
        phase = np.asarray(self.phase, dtype=float)
        if phase.shape != (self.grid.n, self.grid.n):
            raise ValueError("phase shape does not match grid")
        phase.setflags(write=False)
        object.__setattr__(self, "phase", phase)
        object.__setattr__(self, "coeffs", tuple(self.coeffs))

    def coeff_dict(self) -> dict[tuple[int, int], float]:
        return {(n, m): c for n, m, c in self.coeffs}

    def to_json(self) -> dict:
        return {
            "grid": {"n": self.grid.n, "window": self.grid.window},
            "aperture": self.aperture,
            "window_normalized": self.window_normalized,
            "coeffs": [[n, m, c] for n, m, c in self.coeffs],
        }


def screen_from_json(payload: dict) -> "PhaseScreen":
    grid = Grid(n=payload["grid"]["n"], window=payload["grid"]["window"])
    coeffs = tuple((int(n), int(m), float(c)) for n, m, c in payload["coeffs"])
    return assemble_screen(
        grid,
        coeffs,
        aperture=payload["aperture"],
        window_normalized=payload.get("window_normalized", False),
    )


def fried_parameter(cn2: float, length: float, wavelength: float) -> float:
    """Transverse coherence length r0 = 1.68 (Cn^2 L k^2)^(-3/5)."""
    if cn2 <= 0 or length <= 0 or wavelength <= 0:
        raise ValueError("cn2, length, and wavelength must be positive")
    k = 2.0 * math.pi / wavelength
    return 1.68 * (cn2 * length * k * k) ** (-3.0 / 5.0)


def zernike_radial(n: int, m_abs: int, rho) -> np.ndarray:
    """Radial polynomial R_n^|m|; identically zero when n - |m| is odd."""
    if not (n >= m_abs >= 0):
        raise ValueError(f"need n >= |m| >= 0, got n={n}, |m|={m_abs}")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) or np.any(rho > 1):
        raise ValueError("rho must lie in [0, 1]")
    if (n - m_abs) % 2:
        return np.zeros_like(rho)
    out = np.zeros_like(rho)
    for k in range((n - m_abs) // 2 + 1):
        c = (
            (-1) ** k
            * math.factorial(n - k)
            / (
                math.factorial(k)
                * math.factorial((n + m_abs) // 2 - k)
                * math.factorial((n - m_abs) // 2 - k)
            )
        )
        out = out + c * rho ** (n - 2 * k)
    return out


def zernike_mode(
    n: int,
    m: int,
    grid: Grid,
    aperture: float,
    include_m0: bool = False,
    window_normalized: bool = False,
) -> np.ndarray:
    """Zernike aberration Z_{n,m} sampled on the grid, zero outside the aperture.

    m > 0 selects the cosine mode, m < 0 the sine mode of azimuthal order |m|.
    Rotationally symmetric modes (m = 0) are rejected unless opted in.
    """
    if m == 0 and not include_m0:
        raise ValueError("m = 0 modes are excluded by default; pass include_m0=True")
    if n < abs(m):
        raise ValueError(f"need n >= |m|, got n={n}, m={m}")
    r = grid.radius
    scale = float(r.max()) if window_normalized else aperture / 2.0
    rho = r / scale
    inside = rho <= 1.0
    radial = zernike_radial(n, abs(m), np.where(inside, rho, 0.0))
    if m >= 0:
        angular = np.cos(m * grid.azimuth)
    else:
        angular = np.sin(abs(m) * grid.azimuth)
    return np.where(inside, radial * angular, 0.0)


def _noll_normalized_variance(n: int, d_over_r0: float) -> float:
    """Variance of a Noll-normalized Zernike coefficient under Kolmogorov statistics."""
    bessel_moment = (
        gamma(14.0 / 3.0)
        * gamma(n - 5.0 / 6.0)
        / (2.0 ** (14.0 / 3.0) * gamma(17.0 / 6.0) ** 2 * gamma(n + 23.0 / 6.0))
    )
    return (
        KOLMOGOROV_PSD_CONST
        * 8.0
        * np.pi ** (8.0 / 3.0)
        * (n + 1)
        * bessel_moment
        * d_over_r0 ** (5.0 / 3.0)
    )


def noll_variance(n: int, m: int, aperture: float, r0: float) -> float:
    """Variance (rad^2) of the coefficient c_{n,m} in the unnormalized-Z convention."""
    if r0 <= 0 or aperture <= 0:
        raise ValueError("aperture and r0 must be positive")
    if n < abs(m) or n < 1:
        raise ValueError(f"invalid Zernike indices n={n}, m={m}")
    if (n - abs(m)) % 2:
        return 0.0
    base = _noll_normalized_variance(n, aperture / r0)
    factor = (n + 1) if m == 0 else 2 * (n + 1)
    return factor * base


def zernike_terms(max_order: int, include_m0: bool = False) -> tuple[tuple[int, int], ...]:
    """Deterministic (n, m) enumeration used everywhere screens are built or drawn."""
    terms = []
    for n in range(1, max_order + 1):
        for m in range(-n, n + 1):
            if m == 0 and not include_m0:
                continue
            if (n - abs(m)) % 2:
                continue
            terms.append((n, m))
    return tuple(terms)


@lru_cache(maxsize=16)
def _zernike_stack(
    grid: Grid, aperture: float, max_order: int, include_m0: bool, window_normalized: bool
) -> np.ndarray:
    terms = zernike_terms(max_order, include_m0)
    stack = np.array(
        [
            zernike_mode(n, m, grid, aperture, include_m0=True, window_normalized=window_normalized)
            for n, m in terms
        ]
    )
    stack.setflags(write=False)
    return stack


def coefficient_sigmas(params: TurbulenceParams) -> np.ndarray:
    """Standard deviation of each coefficient, in zernike_terms order."""
    r0 = params.fried()
    terms = zernike_terms(params.max_order, params.include_m0)
    return np.array(
        [math.sqrt(noll_variance(n, m, params.aperture, r0)) for n, m in terms]
    )


def sample_coefficients(params: TurbulenceParams, rng: np.random.Generator) -> np.ndarray:
    """One independent zero-mean normal draw per included Zernike term."""
    sigmas = coefficient_sigmas(params)
    return rng.standard_normal(len(sigmas)) * sigmas


def assemble_screen(
    grid: Grid,
    coeffs: tuple[tuple[int, int, float], ...],
    aperture: float,
    window_normalized: bool = False,
) -> PhaseScreen:
    """Sum c_{n,m} Z_{n,m} on the grid from an explicit coefficient list."""
    if coeffs:
        max_order = max(n for n, _, _ in coeffs)
        include_m0 = any(m == 0 for _, m, _ in coeffs)
        terms = zernike_terms(max_order, include_m0)
        stack = _zernike_stack(grid, aperture, max_order, include_m0, window_normalized)
        weights = np.zeros(len(terms))
        lookup = {t: i for i, t in enumerate(terms)}
        for n, m, c in coeffs:
            weights[lookup[(n, m)]] += c
        phase = np.tensordot(weights, stack, axes=1)
    else:
        phase = np.zeros((grid.n, grid.n))
    return PhaseScreen(
        grid=grid,
        phase=phase,
        coeffs=coeffs,
        aperture=aperture,
        window_normalized=window_normalized,
    )


def sample_phase_screen(
    params: TurbulenceParams, grid: Grid, rng: np.random.Generator
) -> PhaseScreen:
    """Draw Zernike coefficients with Kolmogorov variances and assemble the screen."""
    terms = zernike_terms(params.max_order, params.include_m0)
    draws = sample_coefficients(params, rng)
    stack = _zernike_stack(
        grid, params.aperture, params.max_order, params.include_m0, params.window_normalized
    )
    phase = np.tensordot(draws, stack, axes=1)
    coeffs = tuple((n, m, float(c)) for (n, m), c in zip(terms, draws))
    return PhaseScreen(
        grid=grid,
        phase=phase,
        coeffs=coeffs,
        aperture=params.aperture,
        window_normalized=params.window_normalized,
    )


def apply_screen(f: FieldGrid, screen: PhaseScreen) -> FieldGrid:
    """Imprint the aberration: pointwise multiplication by exp(i * phase)."""
    if f.grid != screen.grid:
        raise GridMismatchError("field and screen grids differ")
    return FieldGrid(
        grid=f.grid,
        amplitudes=f.amplitudes * np.exp(1j * screen.phase),
        wavelength=f.wavelength,
        z=f.z,
        meta=dict(f.meta),
    )


def ao_correct(screen: PhaseScreen, corrected_orders: int) -> PhaseScreen:
    """Perfectly remove all Zernike content with radial order n <= corrected_orders."""
    if corrected_orders < 0:
        raise ValueError("corrected_orders must be >= 0")
    if corrected_orders == 0:
        return screen
    residual = tuple((n, m, c) for n, m, c in screen.coeffs if n > corrected_orders)
    removed = tuple((n, m, c) for n, m, c in screen.coeffs if n <= corrected_orders)
    if not removed:
        return screen
    removed_phase = assemble_screen(
        screen.grid, removed, screen.aperture, screen.window_normalized
    ).phase
    return PhaseScreen(
        grid=screen.grid,
        phase=screen.phase - removed_phase,
        coeffs=residual,
        aperture=screen.aperture,
        window_normalized=screen.window_normalized,
    )
