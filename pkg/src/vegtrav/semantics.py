"""Class probabilities, expected mass density and segmentation scoring."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .spectral import (
    DEFAULT_BANDS,
    LOW_IS_VEGETATION,
    BandConfig,
    DistanceKind,
    IndexKind,
    ReferenceProfile,
    ReflectanceSpectrum,
    compute_index,
    distance_to_profile,
    mean_profile,
    otsu_binarize,
)

LABELS = ("Grass", "Track", "Vegetation", "Building", "Pedestrian", "Obstacle", "Other")
PLANTS_LABELS = frozenset({"Grass", "Vegetation"})

PLANTS_DENSITY = 20.0
NOT_PLANTS_DENSITY = 2400.0


def plants_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    unknown = set(np.unique(labels)) - set(LABELS)
    if unknown:
        raise ValueError(f"unknown labels: {sorted(unknown)}")
    return np.isin(labels, list(PLANTS_LABELS))


@dataclass(frozen=True)
class LabeledPoint:
    position: tuple
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label {self.label!r} not in {LABELS}")


def plants_probability(ndvi):
    """Affine map of ndvi onto [0, 1]; works on scalars and arrays."""
    p = np.clip((np.asarray(ndvi, dtype=np.float64) + 1.0) / 2.0, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def two_class_likelihoods(p):
    """Likelihoods ``(p, 1 - p)`` for the Plants / not-Plants pair."""
    p = np.asarray(p, dtype=np.float64)
    return np.stack([p, 1.0 - p], axis=-1)


@dataclass(frozen=True)
class ClassDensityEntry:
    class_name: str
    reference_density: float
    likelihood: Optional[Callable[[float], float]] = None


@dataclass(frozen=True)
class ClassDensityTable:
    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("density table needs at least one class")
        names = [e.class_name for e in entries]
        if len(set(names)) != len(names):
            raise ValueError("class names must be unique")
        if any(not np.isfinite(e.reference_density) or e.reference_density < 0 for e in entries):
            raise ValueError("reference densities must be finite and >= 0")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_pairs(cls, pairs) -> "ClassDensityTable":
        return cls(tuple(ClassDensityEntry(str(n), float(d)) for n, d in pairs))

    @property
    def densities(self) -> np.ndarray:
        return np.array([e.reference_density for e in self.entries])

    @property
    def names(self) -> list:
        return [e.class_name for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def likelihoods(self, measurement) -> np.ndarray:
        """Evaluate every entry's likelihood model on one semantic measurement."""
        if any(e.likelihood is None for e in self.entries):
            raise ValueError("every entry needs a likelihood model")
        return np.array([e.likelihood(measurement) for e in self.entries], dtype=np.float64)


def default_density_table(plants: float = PLANTS_DENSITY, not_plants: float = NOT_PLANTS_DENSITY) -> ClassDensityTable:
    return ClassDensityTable((
        ClassDensityEntry("Plants", plants, lambda p: p),
        ClassDensityEntry("NotPlants", not_plants, lambda p: 1.0 - p),
    ))


def expected_mass_density(table: ClassDensityTable, likelihoods):
    """Normalized likelihood-weighted mean of the class reference densities.

    ``likelihoods`` is a length-n vector, or an (N, n) array for N points.
    """
    lk = np.asarray(likelihoods, dtype=np.float64)
    if lk.shape[-1] != len(table):
        raise ValueError(f"{lk.shape[-1]} likelihoods for {len(table)} classes")
    if not np.all(np.isfinite(lk)) or np.any(lk < 0):
        raise ValueError("likelihoods must be finite and >= 0")
    total = lk.sum(axis=-1)
    if np.any(total <= 0):
        raise ValueError("uninformative measurement: all likelihoods are zero")
    out = (lk @ table.densities) / total
    # keep inside [min, max] despite rounding
    out = np.clip(out, table.densities.min(), table.densities.max())
    return float(out) if out.ndim == 0 else out


def assign_mass_density(cloud, table: Optional[ClassDensityTable] = None, bands: BandConfig = DEFAULT_BANDS):
    """Fill ``plants_probability`` and ``mass_density`` for points with a spectrum.

    Uses ndvi -> Plants probability -> two-class expected density. Points
    without reflectance keep NaN payloads. Mutates and returns ``cloud``.
    """
    table = table or default_density_table()
    if len(table) != 2:
        raise ValueError("ndvi-driven densities need a two-class (Plants, not Plants) table")
    ok = cloud.has_reflectance
    p = np.full(len(cloud), np.nan)
    d = np.full(len(cloud), np.nan)
    if ok.any():
        ndvi = compute_index(IndexKind.NDVI, cloud.reflectance[ok], cloud.wavelengths_nm, bands)
        p[ok] = plants_probability(ndvi)
        d[ok] = expected_mass_density(table, two_class_likelihoods(p[ok]))
    cloud.plants_probability = p
    cloud.mass_density = d
    return cloud


@dataclass(frozen=True)
class SegmentationReport:
    index_name: str
    iou: float
    precision: float
    recall: float
    accuracy: float
    f1: float
    specificity: float
    duration_ms: float = 0.0
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    degenerate: tuple = ()

    COLUMNS = ("IoU", "Prec.", "Rec.", "Acc.", "F1", "Spec.", "Δt [ms]")

    def row(self) -> list:
        return [self.iou, self.precision, self.recall, self.accuracy, self.f1, self.specificity, self.duration_ms]


def _ratio(num: int, den: int, name: str, flags: list) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def report_from_counts(tp: int, fp: int, fn: int, tn: int, index_name: str = "", duration_ms: float = 0.0):
    flags: list = []
    # every metric is one integer division, so each is correctly rounded;
    # 2tp / (2tp + fp + fn) is the harmonic mean of precision and recall
    return SegmentationReport(
        index_name=index_name,
        iou=_ratio(tp, tp + fp + fn, "iou", flags),
        precision=_ratio(tp, tp + fp, "precision", flags),
        recall=_ratio(tp, tp + fn, "recall", flags),
        accuracy=_ratio(tp + tn, tp + fp + fn + tn, "accuracy", flags),
        f1=_ratio(2 * tp, 2 * tp + fp + fn, "f1", flags),
        specificity=_ratio(tn, tn + fp, "specificity", flags),
        duration_ms=duration_ms,
        tp=tp, fp=fp, fn=fn, tn=tn,
        degenerate=tuple(flags),
    )


def evaluate_segmentation(predicted, truth, index_name: str = "", duration_ms: float = 0.0) -> SegmentationReport:
    """Confusion-matrix metrics with Plants as the positive class."""
    pred = np.asarray(predicted, dtype=bool).reshape(-1)
    gt = np.asarray(truth, dtype=bool).reshape(-1)
    if pred.size != gt.size:
        raise ValueError(f"mask length mismatch: {pred.size} predicted vs {gt.size} truth")
    if pred.size == 0:
        raise ValueError("empty masks")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    tn = int(pred.size - tp - fp - fn)
    return report_from_counts(tp, fp, fn, tn, index_name, duration_ms)


def class_mean_profiles(reflectance, wavelengths_nm, labels) -> list:
    """Average spectrum of every label present, plus the pooled ``Plants`` macro-class."""
    refl = np.asarray(reflectance, dtype=np.float64)
    labels = np.asarray(labels)
    out = []
    for lbl in LABELS:
        sel = labels == lbl
        if sel.any():
            out.append(ReferenceProfile(lbl, ReflectanceSpectrum(wavelengths_nm, refl[sel].mean(axis=0))))
    plants = plants_mask(labels)
    if plants.any():
        out.append(ReferenceProfile("Plants", ReflectanceSpectrum(wavelengths_nm, refl[plants].mean(axis=0))))
    return out


def plants_reference(profiles: Sequence[ReferenceProfile]) -> ReferenceProfile:
    """Reference spectrum of the Plants macro-class (mean of its member profiles)."""
    if any(p.class_name == "Plants" for p in profiles):
        return next(p for p in profiles if p.class_name == "Plants")
    members = [p for p in profiles if p.class_name in PLANTS_LABELS]
    if not members:
        raise ValueError("no Plants, Grass or Vegetation profile supplied")
    return mean_profile("Plants", members)


def benchmark_indices(
    reflectance,
    wavelengths_nm,
    labels,
    indices: Sequence = tuple(IndexKind),
    distances: Sequence = tuple(DistanceKind),
    profiles: Sequence[ReferenceProfile] = (),
    bins: int = 256,
    bands: BandConfig = DEFAULT_BANDS,
) -> list:
    """Segment Plants with each method (metric + Otsu) and score it.

    Vegetation indices are thresholded with a fixed polarity (vegetation
    high, except exr). Distances are taken to the Plants reference profile
    and the low-distance side is Plants. Timings cover metric plus
    binarization only.
    """
    refl = np.asarray(reflectance, dtype=np.float64)
    if refl.ndim != 2 or refl.shape[0] == 0:
        raise ValueError("benchmark needs a nonempty (N, bands) reflectance array")
    if np.isnan(refl).any():
        raise ValueError("every point needs a reflectance")
    truth = plants_mask(labels)
    if truth.size != refl.shape[0]:
        raise ValueError("labels and reflectance differ in length")

    reports = []
    for kind in indices:
        kind = IndexKind(kind)
        t0 = time.perf_counter()
        values = compute_index(kind, refl, wavelengths_nm, bands)
        pred, _ = otsu_binarize(values, bins, low_is_positive=kind in LOW_IS_VEGETATION)
        dt = (time.perf_counter() - t0) * 1e3
        reports.append(evaluate_segmentation(pred, truth, kind.value, dt))

    if distances:
        ref = plants_reference(profiles)
        if ref.spectrum.values.size != refl.shape[1]:
            raise ValueError("reference profile band count differs from the map")
        for kind in distances:
            kind = DistanceKind(kind)
            t0 = time.perf_counter()
            values = distance_to_profile(kind, refl, ref.spectrum.values)
            pred, _ = otsu_binarize(values, bins, low_is_positive=True)
            dt = (time.perf_counter() - t0) * 1e3
            reports.append(evaluate_segmentation(pred, truth, kind.value, dt))
    return reports


def format_report_table(reports: Sequence[SegmentationReport]) -> str:
    """Plain-text table with the IoU, Prec., Rec., Acc., F1, Spec., Δt column order."""
    header = ["Index", *SegmentationReport.COLUMNS]
    rows = [[r.index_name, *(f"{v:.2f}" for v in r.row()[:-1]), f"{r.duration_ms:.1f}"] for r in reports]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    line = lambda cells: " | ".join(str(c).ljust(w) for c, w in zip(cells, widths))
    out = [line(header), "-+-".join("-" * w for w in widths)]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"
