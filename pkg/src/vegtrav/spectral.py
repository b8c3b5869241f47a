"""Reflectance math: calibration, vegetation indices, spectral distances, Otsu."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import numpy.typing as npt

NDArrayF = npt.NDArray[np.float64]

REFLECTANCE_CEILING = 1.5

# 29 bands, 550-830 nm in 10 nm steps (VNIR camera band grid)
DEFAULT_WAVELENGTHS_NM = np.arange(550.0, 831.0, 10.0)


class DegenerateSpectrumWarning(UserWarning):
    """Raised as a warning when an index denominator vanishes and 0 is returned."""


def _as_wavelengths(values) -> NDArrayF:
    wl = np.asarray(values, dtype=np.float64).reshape(-1)
    if wl.size == 0:
        raise ValueError("wavelength list is empty")
    if not np.all(np.isfinite(wl)):
        raise ValueError("wavelengths must be finite")
    if wl.size > 1 and not np.all(np.diff(wl) > 0):
        raise ValueError("wavelengths must be strictly increasing")
    return wl


@dataclass(frozen=True)
class SpectrumSample:
    """Raw per-band sensor intensities."""
    wavelengths_nm: NDArrayF
    intensities: NDArrayF

    def __post_init__(self):
        wl = _as_wavelengths(self.wavelengths_nm)
        vals = np.asarray(self.intensities, dtype=np.float64).reshape(-1)
        if vals.size != wl.size:
            raise ValueError(f"{vals.size} intensities for {wl.size} wavelengths")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("intensities must be finite and >= 0")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "intensities", vals)


@dataclass(frozen=True)
class ReflectanceSpectrum:
    """Per-band reflectance in [0, 1.5]. ``clamped`` counts values clipped on creation."""
    wavelengths_nm: NDArrayF
    values: NDArrayF
    clamped: int = 0

    def __post_init__(self):
        wl = _as_wavelengths(self.wavelengths_nm)
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.size != wl.size:
            raise ValueError(f"{vals.size} reflectances for {wl.size} wavelengths")
        if not np.all(np.isfinite(vals)):
            raise ValueError("reflectance must be finite")
        if np.any(vals < 0) or np.any(vals > REFLECTANCE_CEILING):
            raise ValueError(f"reflectance must lie in [0, {REFLECTANCE_CEILING}]")
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class SpectralCalibration:
    """Linear map from n intensity channels to m reflectance bands (r = M i)."""
    matrix: NDArrayF
    output_wavelengths_nm: NDArrayF

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
            raise ValueError("calibration matrix must be 2-D with m, n >= 1")
        if not np.all(np.isfinite(mat)):
            raise ValueError("calibration matrix must be finite")
        wl = _as_wavelengths(self.output_wavelengths_nm)
        if wl.size != mat.shape[0]:
            raise ValueError(f"{wl.size} output wavelengths for {mat.shape[0]} matrix rows")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "output_wavelengths_nm", wl)

    @property
    def n_inputs(self) -> int:
        return int(self.matrix.shape[1])

    @classmethod
    def identity(cls, wavelengths_nm) -> "SpectralCalibration":
        wl = _as_wavelengths(wavelengths_nm)
        return cls(np.eye(wl.size), wl)


@dataclass(frozen=True)
class ReferenceProfile:
    class_name: str
    spectrum: ReflectanceSpectrum


class IndexKind(str, enum.Enum):
    MGRVI = "mgrvi"
    GLI = "gli"
    MPRI = "mpri"
    RGBVI = "rgbvi"
    EXG = "exg"
    EXR = "exr"
    EXGR = "exgr"
    VEG = "veg"
    EVI = "evi"
    NDVI = "ndvi"


class DistanceKind(str, enum.Enum):
    EUCLIDEAN = "ed"
    BRAY_CURTIS = "bc"
    SPECTRAL_ANGLE = "sa"


# channels each index reads
INDEX_CHANNELS = {
    IndexKind.MGRVI: ("g", "r"),
    IndexKind.GLI: ("g", "r", "b"),
    IndexKind.MPRI: ("g", "r"),
    IndexKind.RGBVI: ("g", "r", "b"),
    IndexKind.EXG: ("g", "r", "b"),
    IndexKind.EXR: ("g", "r"),
    IndexKind.EXGR: ("g", "r", "b"),
    IndexKind.VEG: ("g", "r", "b"),
    IndexKind.EVI: ("nir", "r", "b"),
    IndexKind.NDVI: ("nir", "r"),
}

# Indices where vegetation sits on the low side of the distribution.
LOW_IS_VEGETATION = frozenset({IndexKind.EXR})


@dataclass(frozen=True)
class BandConfig:
    """Which bands stand in for R, G, B and NIR.

    The VNIR camera starts at 550 nm, so true blue is unavailable: blue is the
    band closest to ``blue_nm`` among bands <= ``green_nm``, falling back to
    the green band itself.
    """
    red_nm: float = 650.0
    green_nm: float = 550.0
    blue_nm: float = 470.0
    nir_nm: float = 810.0
    tolerance_nm: float = 5.0

    def band_index(self, wavelengths_nm, target_nm: float) -> int:
        wl = np.asarray(wavelengths_nm, dtype=np.float64)
        i = int(np.argmin(np.abs(wl - target_nm)))
        if abs(wl[i] - target_nm) > self.tolerance_nm:
            raise ValueError(f"missing required band at {target_nm:g} nm")
        return i

    def blue_index(self, wavelengths_nm) -> int:
        wl = np.asarray(wavelengths_nm, dtype=np.float64)
        g = self.band_index(wl, self.green_nm)
        below = np.flatnonzero(wl <= wl[g])
        return int(below[np.argmin(np.abs(wl[below] - self.blue_nm))])

    def channel_indices(self, wavelengths_nm, channels: Sequence[str]) -> dict:
        out = {}
        for ch in channels:
            if ch == "r":
                out[ch] = self.band_index(wavelengths_nm, self.red_nm)
            elif ch == "g":
                out[ch] = self.band_index(wavelengths_nm, self.green_nm)
            elif ch == "b":
                out[ch] = self.blue_index(wavelengths_nm)
            elif ch == "nir":
                out[ch] = self.band_index(wavelengths_nm, self.nir_nm)
            else:
                raise ValueError(f"unknown channel {ch!r}")
        return out


DEFAULT_BANDS = BandConfig()


def apply_calibration(cal: SpectralCalibration, sample: SpectrumSample) -> ReflectanceSpectrum:
    """Map raw intensities to reflectance, clamping into [0, 1.5]."""
    if sample.intensities.size != cal.n_inputs:
        raise ValueError(
            f"calibration expects n={cal.n_inputs} intensity channels, got {sample.intensities.size}"
        )
    refl, clamped = calibrate_array(cal.matrix, sample.intensities[None, :])
    return ReflectanceSpectrum(cal.output_wavelengths_nm, refl[0], clamped=clamped)


def calibrate_array(matrix: NDArrayF, intensities: NDArrayF) -> tuple[NDArrayF, int]:
    """Row-wise ``M @ i`` for an (N, n) intensity array; returns (reflectance, clamp count)."""
    mat = np.asarray(matrix, dtype=np.float64)
    ints = np.asarray(intensities, dtype=np.float64)
    if ints.shape[-1] != mat.shape[1]:
        raise ValueError(f"calibration expects n={mat.shape[1]} intensity channels, got {ints.shape[-1]}")
    refl = ints @ mat.T
    out_of_range = (refl < 0) | (refl > REFLECTANCE_CEILING)
    return np.clip(refl, 0.0, REFLECTANCE_CEILING), int(out_of_range.sum())


def _safe_ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    zero = den == 0
    out = np.divide(num, np.where(zero, 1.0, den))
    return np.where(zero, 0.0, out), zero


def _index_from_channels(kind: IndexKind, ch: Mapping[str, NDArrayF]):
    g, r, b, nir = ch.get("g"), ch.get("r"), ch.get("b"), ch.get("nir")
    if kind is IndexKind.NDVI:
        return _safe_ratio(nir - r, nir + r)
    if kind is IndexKind.MGRVI:
        return _safe_ratio(g**2 - r**2, g**2 + r**2)
    if kind is IndexKind.GLI:
        return _safe_ratio(2 * g - r - b, 2 * g + r + b)
    if kind is IndexKind.MPRI:
        return _safe_ratio(g - r, g + r)
    if kind is IndexKind.RGBVI:
        return _safe_ratio(g**2 - b * r, g**2 + b * r)
    if kind is IndexKind.EXG:
        return 2 * g - r - b, np.zeros(np.shape(g), dtype=bool)
    if kind is IndexKind.EXR:
        return 1.4 * r - g, np.zeros(np.shape(g), dtype=bool)
    if kind is IndexKind.EXGR:
        return (2 * g - r - b) - (1.4 * r - g), np.zeros(np.shape(g), dtype=bool)
    if kind is IndexKind.VEG:
        return _safe_ratio(g, np.power(r, 0.667) * np.power(b, 0.333))
    if kind is IndexKind.EVI:
        return _safe_ratio(2.5 * (nir - r), nir + 6 * r - 7.5 * b + 1)
    raise ValueError(f"unknown index {kind!r}")


def compute_index(
    kind: Union[IndexKind, str],
    reflectance,
    wavelengths_nm,
    bands: BandConfig = DEFAULT_BANDS,
    return_degenerate: bool = False,
):
    """Vectorized vegetation index over an (N, B) reflectance array.

    Zero denominators yield 0; pass ``return_degenerate=True`` to also get
    the boolean mask of those entries.
    """
    kind = IndexKind(kind)
    refl = np.asarray(reflectance, dtype=np.float64)
    idx = bands.channel_indices(wavelengths_nm, INDEX_CHANNELS[kind])
    channels = {name: refl[..., i] for name, i in idx.items()}
    values, degenerate = _index_from_channels(kind, channels)
    if return_degenerate:
        return values, degenerate
    return values


def vegetation_index(
    kind: Union[IndexKind, str],
    sample: Union[ReflectanceSpectrum, Mapping[str, float]],
    bands: BandConfig = DEFAULT_BANDS,
) -> float:
    """Scalar vegetation index of one spectrum or of an explicit channel set.

    ``sample`` may be a :class:`ReflectanceSpectrum` or a mapping with keys
    among ``r``, ``g``, ``b``, ``nir``.
    """
    kind = IndexKind(kind)
    if isinstance(sample, ReflectanceSpectrum):
        values, degenerate = compute_index(
            kind, sample.values, sample.wavelengths_nm, bands, return_degenerate=True
        )
    else:
        missing = [c for c in INDEX_CHANNELS[kind] if c not in sample]
        if missing:
            raise ValueError(f"{kind.value} needs channels {missing}")
        chans = {k: np.float64(v) for k, v in sample.items()}
        values, degenerate = _index_from_channels(kind, chans)
    if bool(degenerate):
        warnings.warn(f"{kind.value}: zero denominator, returning 0", DegenerateSpectrumWarning)
    return float(values)


def distance_to_profile(kind: Union[DistanceKind, str], reflectance, profile) -> NDArrayF:
    """Distance of each row of an (N, B) array to one reference spectrum."""
    kind = DistanceKind(kind)
    x = np.atleast_2d(np.asarray(reflectance, dtype=np.float64))
    ref = np.asarray(profile, dtype=np.float64).reshape(-1)
    if x.shape[1] != ref.size:
        raise ValueError(f"band grid mismatch: {x.shape[1]} vs {ref.size} bands")
    if kind is DistanceKind.EUCLIDEAN:
        return np.sqrt(np.sum((x - ref) ** 2, axis=1))
    if kind is DistanceKind.BRAY_CURTIS:
        return _safe_ratio(np.sum(np.abs(x - ref), axis=1), np.sum(x + ref, axis=1))[0]
    norms = np.linalg.norm(x, axis=1)
    ref_norm = np.linalg.norm(ref)
    if ref_norm == 0 or np.any(norms == 0):
        raise ValueError("spectral angle undefined for a zero-norm spectrum")
    cos = (x @ ref) / (norms * ref_norm)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def spectral_distance(
    kind: Union[DistanceKind, str],
    x: ReflectanceSpectrum,
    ref: Union[ReferenceProfile, ReflectanceSpectrum],
) -> float:
    ref_spec = ref.spectrum if isinstance(ref, ReferenceProfile) else ref
    if x.wavelengths_nm.shape != ref_spec.wavelengths_nm.shape or not np.allclose(
        x.wavelengths_nm, ref_spec.wavelengths_nm
    ):
        raise ValueError("spectrum and reference are on different wavelength grids")
    return float(distance_to_profile(kind, x.values, ref_spec.values)[0])


def _histogram(values, bins: int):
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.size == 0:
        raise ValueError("otsu_threshold needs a nonempty value list")
    if not np.all(np.isfinite(vals)):
        raise ValueError("otsu_threshold needs finite values")
    if bins < 2:
        raise ValueError("bins must be >= 2")
    lo, hi = float(vals.min()), float(vals.max())
    if lo == hi:
        raise ValueError("degenerate histogram: all values equal")
    return np.histogram(vals, bins=bins, range=(lo, hi))


def otsu_threshold(values, bins: int = 256) -> float:
    """Otsu threshold over a fixed-bin histogram spanning [min, max].

    Candidate thresholds are the interior bin edges; values ``>= threshold``
    form the upper class. Ties go to the lowest edge and are resolved with
    exact integer arithmetic so the choice never depends on rounding.
    """
    counts, edges = _histogram(values, bins)
    counts = counts.astype(np.int64)
    idx = np.arange(bins, dtype=np.int64)
    n = int(counts.sum())
    n0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(counts * idx)[:-1]
    n1 = n - n0
    s1 = int((counts * idx).sum()) - s0
    valid = (n0 > 0) & (n1 > 0)

    # between-class variance up to a positive constant, in bin-index units
    a = n1.astype(np.float64) * s0 - n0.astype(np.float64) * s1
    denom = np.where(valid, n0.astype(np.float64) * n1, 1.0)
    score = np.where(valid, a * a / denom, 0.0)
    best = score.max()
    candidates = np.flatnonzero(score >= best * (1 - 1e-9))

    def exact(k: int) -> Fraction:
        nk0, nk1 = int(n0[k]), int(n1[k])
        if nk0 == 0 or nk1 == 0:
            return Fraction(0)
        ak = nk1 * int(s0[k]) - nk0 * int(s1[k])
        return Fraction(ak * ak, nk0 * nk1)

    k_best = max(candidates, key=lambda k: (exact(int(k)), -int(k)))
    return float(edges[int(k_best) + 1])


def otsu_binarize(values, bins: int = 256, low_is_positive: bool = False):
    """Threshold with Otsu and return (mask, threshold)."""
    vals = np.asarray(values, dtype=np.float64)
    t = otsu_threshold(vals, bins)
    mask = vals < t if low_is_positive else vals >= t
    return mask, t


def mean_profile(name: str, profiles: Sequence[ReferenceProfile]) -> ReferenceProfile:
    """Average several reference profiles on a shared band grid."""
    if not profiles:
        raise ValueError("no profiles to average")
    wl = profiles[0].spectrum.wavelengths_nm
    for p in profiles[1:]:
        if p.spectrum.wavelengths_nm.shape != wl.shape or not np.allclose(p.spectrum.wavelengths_nm, wl):
            raise ValueError("profiles are on different wavelength grids")
    values = np.mean([p.spectrum.values for p in profiles], axis=0)
    return ReferenceProfile(name, ReflectanceSpectrum(wl, values))
