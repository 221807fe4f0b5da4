"""Synthetic ground truth, coil sensitivities, undersampling masks, measurements.

Everything here is a deterministic function of its arguments (and seed),
so simulated experiments are exactly reproducible.  Masks are stored in
the centered k-space convention (DC in the middle); ``SamplingMask.shifted``
returns the layout matching :func:`afbrecon.numerics.fft2` output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, ParameterError
from .numerics import fft2

MASK_KINDS = ("uniform-cartesian", "random-cartesian", "radial")

# Piecewise-constant ellipse phantom: (additive value, a, b, x0, y0, angle_deg)
# on the [-1, 1]^2 square.  Region values all land in [0, 1] with unit peak.
_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of one synthetic acquisition setup.

    size
        Side length N of the square grid, N >= 8.
    coils
        Number of receiver coils, >= 1.
    noise_sigma
        Per-component std of the complex Gaussian k-space noise, >= 0.
    seed
        Seed for the noise generator (the phantom itself is deterministic).
    """

    size: int
    coils: int = 1
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.size < 8:
            raise ParameterError(f"phantom size must be >= 8, got {self.size}")
        if self.coils < 1:
            raise ParameterError(f"coil count must be >= 1, got {self.coils}")
        if not (self.noise_sigma >= 0.0 and np.isfinite(self.noise_sigma)):
            raise ParameterError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")


@dataclass
class SamplingMask:
    """Binary k-space selection pattern in the centered convention.

    ``kept[i, j]`` is True where k-space is measured; DC sits at
    (H//2, W//2).  ``ratio_measured`` is exactly kept count / (H*W).
    """

    kept: np.ndarray
    kind: str
    seed: int | None = None
    acs_lines: int | None = None
    target_ratio: float | None = None

    def __post_init__(self):
        kept = np.asarray(self.kept, dtype=bool)
        if kept.ndim != 2:
            raise DimensionError(f"mask must be 2-D, got shape {kept.shape}")
        self.kept = kept

    @property
    def height(self) -> int:
        return self.kept.shape[0]

    @property
    def width(self) -> int:
        return self.kept.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.kept.shape

    @property
    def ratio_measured(self) -> float:
        return int(self.kept.sum()) / self.kept.size

    def shifted(self) -> np.ndarray:
        """Mask as float64 {0,1}, reordered to match fft2 output (DC at 0,0)."""
        return np.fft.ifftshift(self.kept).astype(np.float64)

    def apply(self, ksp: np.ndarray) -> np.ndarray:
        """Zero every dropped location of a k-space plane or coil stack."""
        ksp = np.asarray(ksp)
        if ksp.shape[-2:] != self.kept.shape:
            raise DimensionError(f"k-space shape {ksp.shape} does not match mask {self.kept.shape}")
        return ksp * self.shifted()


@dataclass
class CoilSet:
    """Coil sensitivity maps plus (after simulation) per-coil k-space data."""

    maps: np.ndarray
    kspace: np.ndarray | None = None

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3:
            raise DimensionError(f"maps must have shape (C, H, W), got {maps.shape}")
        self.maps = maps
        if self.kspace is not None:
            ksp = np.asarray(self.kspace, dtype=np.complex128)
            if ksp.shape != maps.shape:
                raise DimensionError(f"kspace shape {ksp.shape} does not match maps {maps.shape}")
            self.kspace = ksp

    @property
    def coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    """Deterministic piecewise-constant ellipse phantom, unit peak, zero phase."""
    n = spec.size
    half = (n - 1) / 2.0
    ys = (np.arange(n) - half) / (n / 2.0)
    xs = (np.arange(n) - half) / (n / 2.0)
    y, x = np.meshgrid(ys, xs, indexing="ij")
    img = np.zeros((n, n), dtype=np.float64)
    for value, a, b, x0, y0, ang in _ELLIPSES:
        t = np.deg2rad(ang)
        ct, st = np.cos(t), np.sin(t)
        xr = (x - x0) * ct + (y - y0) * st
        yr = -(x - x0) * st + (y - y0) * ct
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    img /= img.max()
    return img.astype(np.complex128)


def make_coil_maps(size: int, coils: int) -> CoilSet:
    """Smooth complex coil profiles with exact sum-of-squares normalization.

    One Gaussian lobe per coil, centered at equispaced angles on a circle of
    radius size/2 around the grid center, each with a gentle linear phase
    ramp along its own direction.  After normalization sum_c |S_c|^2 == 1 at
    every pixel, so the multi-coil operator built from these maps has unit
    norm under a full mask.
    """
    if coils < 1:
        raise ParameterError(f"coil count must be >= 1, got {coils}")
    half = (size - 1) / 2.0
    u = np.arange(size)[:, None] - half  # row offset from array center
    v = np.arange(size)[None, :] - half
    radius = size / 2.0
    width = 0.5 * size
    raw = np.empty((coils, size, size), dtype=np.complex128)
    for c in range(coils):
        theta = 2.0 * np.pi * c / coils
        cu, cv = radius * np.cos(theta), radius * np.sin(theta)
        d2 = (u - cu) ** 2 + (v - cv) ** 2
        mag = np.exp(-d2 / (2.0 * width**2))
        phase = (np.pi / 3.0) * (u * np.cos(theta) + v * np.sin(theta)) / size
        raw[c] = mag * np.exp(1j * phase)
    sos = np.sqrt(np.sum(np.abs(raw) ** 2, axis=0))
    return CoilSet(maps=raw / sos)


def _cartesian_rows(size: int, target_ratio: float, acs_lines: int, kind: str,
                    seed: int | None) -> np.ndarray:
    n_target = int(round(target_ratio * size))
    acs_start = size // 2 - acs_lines // 2
    acs_rows = np.arange(acs_start, acs_start + acs_lines)
    if n_target < acs_lines:
        raise ParameterError(
            f"target ratio {target_ratio} keeps {n_target} rows, below the {acs_lines}-row ACS band")
    others = np.setdiff1d(np.arange(size), acs_rows)
    n_extra = n_target - acs_lines
    if n_extra > others.size:
        n_extra = others.size
    if kind == "uniform-cartesian":
        if n_extra > 0:
            picks = others[(np.arange(n_extra) * others.size // n_extra).astype(int)]
        else:
            picks = np.empty(0, dtype=int)
    else:
        rng = np.random.default_rng(seed)
        picks = rng.choice(others, size=n_extra, replace=False)
    return np.union1d(acs_rows, picks)


def _rasterize_spokes(size: int, n_spokes: int) -> np.ndarray:
    kept = np.zeros((size, size), dtype=bool)
    ci = cj = size // 2
    tmax = size * np.sqrt(2.0) / 2.0
    ts = np.arange(-tmax, tmax + 0.25, 0.5)
    for s in range(n_spokes):
        theta = np.pi * s / n_spokes
        ii = np.rint(ci + ts * np.sin(theta)).astype(int)
        jj = np.rint(cj + ts * np.cos(theta)).astype(int)
        ok = (ii >= 0) & (ii < size) & (jj >= 0) & (jj < size)
        kept[ii[ok], jj[ok]] = True
    return kept


@lru_cache(maxsize=None)
def _radial_kept_count(size: int, n_spokes: int) -> int:
    return int(_rasterize_spokes(size, n_spokes).sum())


def make_mask(kind: str, size: int, target_ratio: float, acs_lines: int | None = None,
              seed: int | None = None) -> SamplingMask:
    """Generate a sampling mask of the requested kind and ratio.

    Parameters
    ----------
    kind
        One of "uniform-cartesian", "random-cartesian", "radial".
    size
        Grid side length (square masks only).
    target_ratio
        Requested kept fraction in (0, 1].  The measured ratio lands within
        +-0.01 of this wherever the grid's granularity permits.
    acs_lines
        Fully kept center rows (Cartesian kinds).  Defaults to size // 8,
        reduced to the ratio's whole row budget when that is smaller; an
        explicit value that alone exceeds the budget is an error.  Ignored
        for radial masks.
    seed
        RNG seed; used by random-cartesian only.
    """
    if kind not in MASK_KINDS:
        raise ParameterError(f"unknown mask kind {kind!r}; expected one of {MASK_KINDS}")
    if not (0.0 < target_ratio <= 1.0):
        raise ParameterError(f"target_ratio must lie in (0, 1], got {target_ratio}")
    if size < 2:
        raise ParameterError(f"mask size must be >= 2, got {size}")

    if kind == "radial":
        acs = None
    else:
        if acs_lines is None:
            acs = min(size // 8, int(round(target_ratio * size)))
        else:
            acs = int(acs_lines)
        if not (0 <= acs < size):
            raise ParameterError(f"acs_lines must lie in [0, size), got {acs}")

    if target_ratio == 1.0:
        kept = np.ones((size, size), dtype=bool)
        return SamplingMask(kept, kind, seed=seed, acs_lines=acs, target_ratio=target_ratio)

    if kind in ("uniform-cartesian", "random-cartesian"):
        rows = _cartesian_rows(size, target_ratio, acs, kind, seed)
        kept = np.zeros((size, size), dtype=bool)
        kept[rows, :] = True
    else:
        # Spoke counts give a discrete ratio ladder; pick the closest rung.
        best_n, best_gap = 1, np.inf
        n = 1
        while True:
            ratio = _radial_kept_count(size, n) / size**2
            gap = abs(ratio - target_ratio)
            if gap < best_gap:
                best_n, best_gap = n, gap
            if ratio >= target_ratio or n > 4 * size:
                break
            n += 1
        kept = _rasterize_spokes(size, best_n)

    return SamplingMask(kept, kind, seed=seed, acs_lines=acs, target_ratio=target_ratio)


def simulate_acquisition(truth: np.ndarray, coilset: CoilSet, mask: SamplingMask,
                         noise_sigma: float = 0.0, seed: int = 0) -> CoilSet:
    """Simulate noisy undersampled multi-coil k-space measurements.

    Per coil c: kspace_c = mask * (fft2(S_c * truth) + noise), with noise
    i.i.d. complex Gaussian (std ``noise_sigma`` per real/imag component),
    zeroed outside the mask.  Deterministic given the seed.
    """
    truth = np.asarray(truth, dtype=np.complex128)
    if truth.shape != coilset.shape:
        raise DimensionError(f"truth shape {truth.shape} does not match maps {coilset.shape}")
    if truth.shape != mask.shape:
        raise DimensionError(f"truth shape {truth.shape} does not match mask {mask.shape}")
    if not (noise_sigma >= 0.0 and np.isfinite(noise_sigma)):
        raise ParameterError(f"noise_sigma must be finite and >= 0, got {noise_sigma}")

    ksp = np.stack([fft2(coilset.maps[c] * truth) for c in range(coilset.coils)])
    if noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(ksp.shape) + 1j * rng.standard_normal(ksp.shape)
        ksp = ksp + noise_sigma * noise
    return CoilSet(maps=coilset.maps, kspace=mask.apply(ksp))
