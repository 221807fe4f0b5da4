"""Image quality metrics and the composite multi-term training loss.

Quality metrics take real magnitude images; complex reconstructions are
reduced with :func:`magnitude` first, on purpose rather than implicitly.
The composite loss combines a squared synthesis error, a structural
penalty, a cross-mapping consistency error, and a squared reconstruction
error, each reported separately next to the weighted total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, ParameterError
from .numerics import as_real_grid, norm2

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


def magnitude(x) -> np.ndarray:
    """Per-pixel modulus of a (possibly complex) grid, as float64."""
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D grid, got shape {arr.shape}")
    return np.abs(arr).astype(np.float64)


def psnr(ref: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB, peak taken from the reference.

    Returns +inf when the images agree exactly.
    """
    ref = as_real_grid(ref)
    test = as_real_grid(test)
    if ref.shape != test.shape:
        raise DimensionError(f"shape mismatch: {ref.shape} vs {test.shape}")
    peak = float(ref.max())
    if peak <= 0.0:
        raise ParameterError("reference image has no positive peak")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(size: int = _SSIM_WINDOW, sigma: float = _SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    g = np.exp(-((np.arange(size) - half) ** 2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(ref: np.ndarray, test: np.ndarray, data_range: float | None = None) -> float:
    """Mean structural similarity with a Gaussian-weighted sliding window.

    11x11 window (std 1.5), stabilizers K1=0.01 and K2=0.03, windows fully
    inside the image.  ``data_range`` defaults to the reference peak; pass
    an explicit common range to make the score symmetric in its arguments.
    """
    ref = as_real_grid(ref)
    test = as_real_grid(test)
    if ref.shape != test.shape:
        raise DimensionError(f"shape mismatch: {ref.shape} vs {test.shape}")
    if min(ref.shape) < _SSIM_WINDOW:
        raise ParameterError(
            f"image {ref.shape} is smaller than the {_SSIM_WINDOW}x{_SSIM_WINDOW} window")
    if data_range is None:
        data_range = float(ref.max())
    if not (np.isfinite(data_range) and data_range > 0.0):
        raise ParameterError(f"data range must be finite and > 0, got {data_range}")

    w = _gaussian_window()
    win = (_SSIM_WINDOW, _SSIM_WINDOW)
    pa = np.lib.stride_tricks.sliding_window_view(ref, win)
    pb = np.lib.stride_tricks.sliding_window_view(test, win)
    mu_a = np.einsum("ijkl,kl->ij", pa, w)
    mu_b = np.einsum("ijkl,kl->ij", pb, w)
    e_aa = np.einsum("ijkl,kl->ij", pa * pa, w)
    e_bb = np.einsum("ijkl,kl->ij", pb * pb, w)
    e_ab = np.einsum("ijkl,kl->ij", pa * pb, w)
    var_a = e_aa - mu_a**2
    var_b = e_bb - mu_b**2
    cov = e_ab - mu_a * mu_b

    c1 = (_SSIM_K1 * data_range) ** 2
    c2 = (_SSIM_K2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def relative_error(ref: np.ndarray, test: np.ndarray) -> float:
    """l2 norm of the difference over the l2 norm of the reference."""
    ref = np.asarray(ref)
    test = np.asarray(test)
    if ref.shape != test.shape:
        raise DimensionError(f"shape mismatch: {ref.shape} vs {test.shape}")
    denom = norm2(ref)
    if denom == 0.0:
        raise ParameterError("reference has zero norm")
    return norm2(test - ref) / denom


def _json_num(v: float):
    if np.isposinf(v):
        return "inf"
    if np.isneginf(v):
        return "-inf"
    return float(v)


@dataclass(frozen=True)
class MetricReport:
    """The caption triplet: PSNR (dB), SSIM, relative error."""

    psnr_db: float
    ssim: float
    rel_err: float

    def to_dict(self) -> dict:
        return {"psnr_db": _json_num(self.psnr_db), "ssim": _json_num(self.ssim),
                "rel_err": _json_num(self.rel_err)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(psnr_db=float(d["psnr_db"]), ssim=float(d["ssim"]), rel_err=float(d["rel_err"]))


def metric_report(ref: np.ndarray, test: np.ndarray) -> MetricReport:
    """Score a reconstruction against a reference.

    PSNR and SSIM compare magnitude images; the relative error is taken on
    the raw (possibly complex) grids so phase errors count too.
    """
    mref = magnitude(ref)
    mtest = magnitude(test)
    return MetricReport(psnr_db=psnr(mref, mtest), ssim=ssim(mref, mtest),
                        rel_err=relative_error(np.asarray(ref), np.asarray(test)))


@dataclass(frozen=True)
class LossWeights:
    """Multipliers for the structural, mapping, and reconstruction terms."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = float(getattr(self, name))
            if not (np.isfinite(v) and v >= 0.0):
                raise ParameterError(f"{name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class ModalityMapping:
    """Three-stage image-to-image pipeline used by the mapping loss term.

    ``encode`` lifts the second-modality image, ``translate`` crosses
    modalities, ``decode`` brings the result back to the first modality's
    image space.  Every stage must preserve the grid shape.
    """

    encode: Callable[[np.ndarray], np.ndarray]
    translate: Callable[[np.ndarray], np.ndarray]
    decode: Callable[[np.ndarray], np.ndarray]

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = as_real_grid(x)
        out = x
        for name, stage in (("encode", self.encode), ("translate", self.translate),
                            ("decode", self.decode)):
            out = np.asarray(stage(out))
            if out.shape != x.shape:
                raise DimensionError(f"mapping stage {name!r} changed shape {x.shape} -> {out.shape}")
        return out.astype(np.float64)


def identity_mapping() -> ModalityMapping:
    ident = lambda a: a
    return ModalityMapping(encode=ident, translate=ident, decode=ident)


def affine_mapping(encode=(1.0, 0.0), translate=(1.0, 0.0), decode=(1.0, 0.0)) -> ModalityMapping:
    """Fixed per-stage pixelwise affine maps x -> scale * x + offset."""

    def stage(scale, offset):
        scale = float(scale)
        offset = float(offset)
        return lambda a: scale * a + offset

    return ModalityMapping(encode=stage(*encode), translate=stage(*translate), decode=stage(*decode))


@dataclass(frozen=True)
class CompositeLossReport:
    """Weighted total plus the four raw (unweighted) terms."""

    total: float
    synthesis_sq: float
    ssim_penalty: float
    mapping_sq: float
    recon_sq: float

    def to_dict(self) -> dict:
        return {"total": self.total, "synthesis_sq": self.synthesis_sq,
                "ssim_penalty": self.ssim_penalty, "mapping_sq": self.mapping_sq,
                "recon_sq": self.recon_sq}


def composite_loss(x0, x1, ref0, ref1, mapping: ModalityMapping,
                   weights: LossWeights) -> CompositeLossReport:
    """Joint synthesis / structure / mapping / reconstruction loss.

    total = ||x0 - ref0||^2
          + lambda1 * (1 - SSIM(x0, ref0))
          + lambda2 * ||mapping(x1) - ref0||^2
          + lambda3 * ||x1 - ref1||^2

    x0 is the synthesized first-modality image, x1 the reconstructed
    second-modality image, ref0/ref1 their references.  All inputs are
    real images of one shape, at least 11 pixels on each side.
    """
    x0 = as_real_grid(x0)
    x1 = as_real_grid(x1)
    ref0 = as_real_grid(ref0)
    ref1 = as_real_grid(ref1)
    for other in (x1, ref0, ref1):
        if other.shape != x0.shape:
            raise DimensionError(f"shape mismatch: {x0.shape} vs {other.shape}")

    synthesis_sq = norm2(x0 - ref0) ** 2
    ssim_penalty = 1.0 - ssim(ref0, x0)
    mapping_sq = norm2(mapping.apply(x1) - ref0) ** 2
    recon_sq = norm2(x1 - ref1) ** 2
    total = (synthesis_sq + weights.lambda1 * ssim_penalty
             + weights.lambda2 * mapping_sq + weights.lambda3 * recon_sq)
    return CompositeLossReport(total=total, synthesis_sq=synthesis_sq, ssim_penalty=ssim_penalty,
                               mapping_sq=mapping_sq, recon_sq=recon_sq)
