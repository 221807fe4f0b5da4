"""Complex 2-D grids, unitary Fourier transforms, inner products and norms.

Grids are plain numpy arrays: ``complex128`` of shape (H, W) for complex
fields (images or k-space planes), ``float64`` of shape (H, W) for real
images.  All transforms are unitary (``norm="ortho"``), so the adjoint of
the Fourier transform is its inverse and Parseval holds exactly:
``norm2(fft2(x)) == norm2(x)`` up to roundoff.

The DC bin of ``fft2`` output sits at index (0, 0).  Sampling masks are
stored in the centered convention (DC in the middle of the array) and are
shifted with ``numpy.fft.ifftshift`` wherever they multiply k-space data;
see :mod:`afbrecon.acquisition`.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, ParameterError


def as_complex_grid(values) -> np.ndarray:
    """Validate and convert input to a finite 2-D complex128 array."""
    arr = np.asarray(values, dtype=np.complex128)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("grid contains non-finite values")
    return arr


def as_real_grid(values) -> np.ndarray:
    """Validate and convert input to a finite 2-D float64 array.

    Complex input is rejected rather than silently reduced; callers that
    want the modulus take it explicitly (see metrics.magnitude).
    """
    try:
        arr = np.asarray(values)
        if np.iscomplexobj(arr):
            raise TypeError("grid is complex; take the modulus first")
        arr = arr.astype(np.float64)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"expected a real-valued grid: {exc}") from None
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a 2-D grid, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError("grid contains non-finite values")
    return arr


def fft2(img: np.ndarray) -> np.ndarray:
    """Unitary 2-D DFT; preserves the l2 norm."""
    return np.fft.fft2(img, norm="ortho")


def ifft2(ksp: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`fft2`."""
    return np.fft.ifft2(ksp, norm="ortho")


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Inner product sum(conj(a) * b); inner(a, a) equals norm2(a)**2."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def norm2(a: np.ndarray) -> float:
    """Euclidean (Frobenius) norm over all entries."""
    return float(np.linalg.norm(np.asarray(a).ravel()))
