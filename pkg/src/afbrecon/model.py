"""Multi-coil encoding operator, data fidelity, smoothed edge regularizers.

The encoding operator maps an image to per-coil k-space: multiply by each
sensitivity map, apply the unitary 2-D FFT, zero the dropped locations.
Data fidelity is half the squared distance to the measurements.  The
regularizers penalize image gradients through a smoothing parameter eta
that the solver anneals toward zero.

Gradients of real-valued functionals over complex grids follow the
convention  d/de F(x + e*d) |_{e=0} = Re inner(grad, d),  which is what a
gradient-descent update expects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import CoilSet, SamplingMask
from .errors import DimensionError, ParameterError
from .numerics import fft2, ifft2, norm2

REG_FAMILIES = ("smoothed-tv", "smoothed-log-tv")


def _forward_diffs(x):
    """Periodic forward differences along columns (h) and rows (v)."""
    dh = np.roll(x, -1, axis=1) - x
    dv = np.roll(x, -1, axis=0) - x
    return dh, dv


def _diffs_adjoint(wh, wv):
    """Adjoint of _forward_diffs: inner(D x, w) == inner(x, adjoint(w))."""
    return (np.roll(wh, 1, axis=1) - wh) + (np.roll(wv, 1, axis=0) - wv)


@dataclass
class ForwardModel:
    """Sensitivity-weighted Fourier encoding with a fixed sampling mask.

    ``maps`` has shape (C, H, W); ``measurements`` the same, already zero
    at dropped k-space locations.  forward/adjoint are exact adjoints of
    each other, which the fidelity gradient relies on.
    """

    mask: SamplingMask
    maps: np.ndarray
    measurements: np.ndarray

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 3:
            raise DimensionError(f"maps must have shape (C, H, W), got {maps.shape}")
        if maps.shape[1:] != self.mask.shape:
            raise DimensionError(
                f"maps grid {maps.shape[1:]} does not match mask {self.mask.shape}")
        meas = np.asarray(self.measurements, dtype=np.complex128)
        if meas.shape != maps.shape:
            raise DimensionError(
                f"measurements shape {meas.shape} does not match maps {maps.shape}")
        dropped = ~self.mask.kept
        leak = np.abs(np.fft.fftshift(meas, axes=(-2, -1))[:, dropped])
        if leak.size and leak.max() > 0.0:
            raise ParameterError("measurements carry energy at mask-dropped locations")
        self.maps = maps
        self.measurements = meas
        self._sel = self.mask.shifted()

    @classmethod
    def from_coilset(cls, coilset: CoilSet, mask: SamplingMask) -> "ForwardModel":
        if coilset.kspace is None:
            raise ParameterError("coil set has no k-space data; run a simulation first")
        return cls(mask=mask, maps=coilset.maps, measurements=coilset.kspace)

    @property
    def coils(self) -> int:
        return self.maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.maps.shape[1:]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Image -> masked per-coil k-space."""
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != self.shape:
            raise DimensionError(f"image shape {x.shape} does not match model {self.shape}")
        return self._sel * fft2(self.maps * x)

    def adjoint(self, ksp: np.ndarray) -> np.ndarray:
        """Per-coil k-space -> image; exact adjoint of :meth:`forward`."""
        ksp = np.asarray(ksp, dtype=np.complex128)
        if ksp.shape != self.maps.shape:
            raise DimensionError(f"k-space shape {ksp.shape} does not match model {self.maps.shape}")
        return np.sum(np.conj(self.maps) * ifft2(self._sel * ksp), axis=0)

    def zero_filled(self) -> np.ndarray:
        """Adjoint applied to the measurements: the unregularized baseline."""
        return self.adjoint(self.measurements)

    def fidelity(self, x: np.ndarray) -> float:
        """0.5 * sum_c || forward(x)_c - y_c ||^2."""
        res = self.forward(x) - self.measurements
        return 0.5 * norm2(res) ** 2

    def grad_fidelity(self, x: np.ndarray) -> np.ndarray:
        return self.adjoint(self.forward(x) - self.measurements)

    def lipschitz_estimate(self, iters: int = 50, seed: int = 0) -> float:
        """Largest eigenvalue of adjoint(forward(.)) by power iteration.

        With sum-of-squares-normalized maps and the unitary FFT the result
        never exceeds 1, so 1/L is a safe fidelity step size.
        """
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.shape) + 1j * rng.standard_normal(self.shape)
        v /= norm2(v)
        lam = 0.0
        for _ in range(iters):
            w = self.adjoint(self.forward(v))
            lam = norm2(w)
            if lam == 0.0:
                return 0.0
            v = w / lam
        return lam


@dataclass
class Regularizer:
    """Smoothed edge penalty over periodic image gradients.

    Both families are built on s = sqrt(|dh|^2 + |dv|^2 + eta^2) per pixel:

    - "smoothed-tv":      sum(s - eta); convex, approaches total variation
      as eta -> 0 (gap at most eta per pixel).
    - "smoothed-log-tv":  eta * sum(log(1 + s/eta) - log 2); nonconvex,
      saturating for large gradients, zero on constant images, and
      vanishing as eta -> 0.

    ``weight`` is the multiplier applied by :class:`Objective`; zero turns
    the penalty off.
    """

    family: str = "smoothed-tv"
    weight: float = 1e-3

    def __post_init__(self):
        family = str(self.family).lower()
        if family not in REG_FAMILIES:
            raise ParameterError(f"unknown regularizer family {self.family!r}; expected one of {REG_FAMILIES}")
        self.family = family
        if not (np.isfinite(self.weight) and self.weight >= 0.0):
            raise ParameterError(f"regularizer weight must be finite and >= 0, got {self.weight}")

    @staticmethod
    def _check_eta(eta: float) -> float:
        if not (eta > 0.0 and np.isfinite(eta)):
            raise ParameterError(f"smoothing parameter must be finite and > 0, got {eta}")
        return float(eta)

    def value(self, x: np.ndarray, eta: float) -> float:
        eta = self._check_eta(eta)
        dh, dv = _forward_diffs(np.asarray(x, dtype=np.complex128))
        s = np.sqrt(np.abs(dh) ** 2 + np.abs(dv) ** 2 + eta**2)
        if self.family == "smoothed-tv":
            return float(np.sum(s - eta))
        return float(eta * np.sum(np.log1p(s / eta) - np.log(2.0)))

    def grad(self, x: np.ndarray, eta: float) -> np.ndarray:
        eta = self._check_eta(eta)
        dh, dv = _forward_diffs(np.asarray(x, dtype=np.complex128))
        s = np.sqrt(np.abs(dh) ** 2 + np.abs(dv) ** 2 + eta**2)
        if self.family == "smoothed-tv":
            w = 1.0 / s
        else:
            w = eta / ((eta + s) * s)
        return _diffs_adjoint(w * dh, w * dv)


@dataclass
class Objective:
    """Weighted sum of data fidelity and the smoothed penalty.

    value(x, eta) = fidelity(x) + weight * penalty(x, eta).  ``reg`` may be
    None, which behaves exactly like weight 0 (pure fidelity).
    """

    model: ForwardModel
    reg: Regularizer | None = None

    @property
    def weight(self) -> float:
        return 0.0 if self.reg is None else self.reg.weight

    def value_parts(self, x: np.ndarray, eta: float) -> tuple[float, float]:
        """(fidelity part, unweighted penalty part); their weighted sum is value()."""
        fid = self.model.fidelity(x)
        if self.reg is None or self.reg.weight == 0.0:
            return fid, 0.0
        return fid, self.reg.value(x, eta)

    def penalty_part(self, x: np.ndarray, eta: float) -> float:
        if self.reg is None or self.reg.weight == 0.0:
            return 0.0
        return self.reg.value(x, eta)

    def value(self, x: np.ndarray, eta: float) -> float:
        fid, r = self.value_parts(x, eta)
        return fid + self.weight * r

    def gradient(self, x: np.ndarray, eta: float) -> np.ndarray:
        g = self.model.grad_fidelity(x)
        if self.reg is not None and self.reg.weight != 0.0:
            g = g + self.reg.weight * self.reg.grad(x, eta)
        return g
