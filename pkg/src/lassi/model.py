"""Core data model for dynamic image sequences and k-t space measurements.

Conventions used throughout the package:

* a dynamic sequence is a complex ``(Nx, Ny, Nt)`` array of image frames,
* vectorization is always x-fastest, then y, then t (Fortran order),
* all arithmetic is done in ``complex128`` regardless of on-disk precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DynamicSequence",
    "SamplingMask",
    "KtSpaceData",
    "Decomposition",
    "MetricsTrace",
    "reshape_r1",
    "unreshape_r1",
    "nrmse",
    "per_frame_nrmse",
]


@dataclass(frozen=True)
class DynamicSequence:
    """A complex space-time volume of shape ``(Nx, Ny, Nt)``."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.complex128)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d (Nx, Ny, Nt) array, got shape {arr.shape}")
        if arr.size == 0:
            raise ValueError("sequence must have at least one voxel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sequence contains non-finite entries")
        object.__setattr__(self, "data", arr)

    @property
    def nx(self) -> int:
        return self.data.shape[0]

    @property
    def ny(self) -> int:
        return self.data.shape[1]

    @property
    def nt(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def norm(self) -> float:
        """Euclidean norm of the vectorized volume."""
        return float(np.linalg.norm(self.data))

    @classmethod
    def zeros(cls, shape: tuple[int, int, int]) -> "DynamicSequence":
        return cls(np.zeros(shape, dtype=np.complex128))


def reshape_r1(seq: DynamicSequence | np.ndarray) -> np.ndarray:
    """Matricize a sequence into its ``(Nx*Ny, Nt)`` space-time (Casorati) form.

    Column ``t`` is frame ``t`` vectorized x-fastest.  The inverse is
    :func:`unreshape_r1`; the round trip is bit exact.
    """
    data = seq.data if isinstance(seq, DynamicSequence) else np.asarray(seq)
    nx, ny, nt = data.shape
    return data.reshape(nx * ny, nt, order="F")


def unreshape_r1(mat: np.ndarray, shape: tuple[int, int, int]) -> DynamicSequence:
    """Inverse of :func:`reshape_r1` for a volume of the given shape."""
    nx, ny, nt = shape
    if mat.shape != (nx * ny, nt):
        raise ValueError(f"matrix shape {mat.shape} does not match volume shape {shape}")
    return DynamicSequence(mat.reshape(nx, ny, nt, order="F"))


@dataclass(frozen=True)
class SamplingMask:
    """Binary k-t space sampling pattern of shape ``(Nx, Ny, Nt)``."""

    mask: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.mask)
        if arr.ndim != 3:
            raise ValueError(f"expected a 3-d (Nx, Ny, Nt) mask, got shape {arr.shape}")
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("mask entries must be 0 or 1")
        arr = arr.astype(np.uint8)
        frame_counts = arr.sum(axis=(0, 1))
        if np.any(frame_counts == 0):
            empty = int(np.argmin(frame_counts))
            raise ValueError(f"frame {empty} has no sampled locations")
        object.__setattr__(self, "mask", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mask.shape

    @property
    def num_sampled(self) -> int:
        return int(self.mask.sum())

    @property
    def acceleration(self) -> float:
        """Exact achieved acceleration ``Nx*Ny*Nt / (# sampled)``."""
        return self.mask.size / self.num_sampled


@dataclass(frozen=True)
class KtSpaceData:
    """Masked multi-coil k-t space samples of shape ``(Nc, Nx, Ny, Nt)``."""

    samples: np.ndarray
    mask: SamplingMask

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4:
            raise ValueError(f"expected (Nc, Nx, Ny, Nt) samples, got shape {arr.shape}")
        if arr.shape[1:] != self.mask.shape:
            raise ValueError(
                f"samples shape {arr.shape[1:]} does not match mask shape {self.mask.shape}"
            )
        if np.any(arr[:, self.mask.mask == 0] != 0):
            raise ValueError("samples must be zero at unsampled k-t locations")
        object.__setattr__(self, "samples", arr)

    @property
    def nc(self) -> int:
        return self.samples.shape[0]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.samples.shape


@dataclass(frozen=True)
class Decomposition:
    """A low-rank plus dictionary-sparse split of a dynamic sequence."""

    xl: DynamicSequence
    xs: DynamicSequence

    def __post_init__(self):
        if self.xl.shape != self.xs.shape:
            raise ValueError(
                f"component shapes differ: {self.xl.shape} vs {self.xs.shape}"
            )

    @property
    def x(self) -> DynamicSequence:
        """The reconstruction, i.e. the entrywise sum of the components."""
        return DynamicSequence(self.xl.data + self.xs.data)

    @classmethod
    def zeros(cls, shape: tuple[int, int, int]) -> "Decomposition":
        return cls(DynamicSequence.zeros(shape), DynamicSequence.zeros(shape))


METRICS_CSV_HEADER = "iter,objective,nrmse,sparsity_pct,delta"


@dataclass
class MetricsTrace:
    """Per-outer-iteration reconstruction metrics.

    ``objective_certified`` is False for runs whose low-rank update does not
    minimize a formal cost function (the data-driven shrinkage variant); such
    traces record the objective with the low-rank penalty term omitted.
    ``inner_objectives`` holds the objective after every individual update
    (dictionary coordinate updates and proximal steps); it is not part of the
    CSV output.  ``clip_count`` reports how often the sparse-code magnitude
    bound was active over the whole run.
    """

    iters: list[int] = field(default_factory=list)
    objective: list[float] = field(default_factory=list)
    nrmse: list[float] = field(default_factory=list)
    sparsity_pct: list[float] = field(default_factory=list)
    delta: list[float] = field(default_factory=list)
    objective_certified: bool = True
    inner_objectives: list[float] = field(default_factory=list)
    clip_count: int = 0

    def append(self, it: int, objective: float, nrmse: float, sparsity_pct: float, delta: float):
        expected = self.iters[-1] + 1 if self.iters else 1
        if it != expected:
            raise ValueError(f"iterations must be contiguous: expected {expected}, got {it}")
        self.iters.append(it)
        self.objective.append(float(objective))
        self.nrmse.append(float(nrmse))
        self.sparsity_pct.append(float(sparsity_pct))
        self.delta.append(float(delta))

    def __len__(self) -> int:
        return len(self.iters)

    def to_csv(self, path) -> None:
        lines = [METRICS_CSV_HEADER]
        for i in range(len(self.iters)):
            lines.append(
                f"{self.iters[i]},{self.objective[i]!r},{self.nrmse[i]!r},"
                f"{self.sparsity_pct[i]!r},{self.delta[i]!r}"
            )
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def _roi_slices(roi, shape):
    x0, x1, y0, y1 = roi
    nx, ny = shape[0], shape[1]
    if not (0 <= x0 <= x1 < nx and 0 <= y0 <= y1 < ny):
        raise ValueError(f"ROI {roi} does not lie inside a {nx}x{ny} frame")
    return slice(x0, x1 + 1), slice(y0, y1 + 1)


def nrmse(
    recon: DynamicSequence,
    ref: DynamicSequence,
    roi: tuple[int, int, int, int] | None = None,
    magnitude: bool = False,
) -> float:
    """Normalized root mean square error ``||recon - ref|| / ||ref||``.

    ``roi`` is an inclusive axis-aligned box ``(x0, x1, y0, y1)`` applied to
    every frame.  With ``magnitude=True`` the error is computed between the
    magnitude images rather than the complex arrays.
    """
    if recon.shape != ref.shape:
        raise ValueError(f"shape mismatch: {recon.shape} vs {ref.shape}")
    a, b = recon.data, ref.data
    if roi is not None:
        sx, sy = _roi_slices(roi, ref.shape)
        a, b = a[sx, sy], b[sx, sy]
    if magnitude:
        a, b = np.abs(a), np.abs(b)
    ref_norm = np.linalg.norm(b)
    if ref_norm == 0:
        raise ValueError("reference has zero norm over the evaluation region")
    return float(np.linalg.norm(a - b) / ref_norm)


def per_frame_nrmse(
    recon: DynamicSequence,
    ref: DynamicSequence,
    roi: tuple[int, int, int, int] | None = None,
    magnitude: bool = False,
) -> np.ndarray:
    """NRMSE of each frame separately; frames with a zero-norm reference map to NaN."""
    if recon.shape != ref.shape:
        raise ValueError(f"shape mismatch: {recon.shape} vs {ref.shape}")
    a, b = recon.data, ref.data
    if roi is not None:
        sx, sy = _roi_slices(roi, ref.shape)
        a, b = a[sx, sy], b[sx, sy]
    if magnitude:
        a, b = np.abs(a), np.abs(b)
    err = np.linalg.norm((a - b).reshape(-1, a.shape[2]), axis=0)
    den = np.linalg.norm(b.reshape(-1, b.shape[2]), axis=0)
    out = np.full(a.shape[2], np.nan)
    ok = den > 0
    out[ok] = err[ok] / den[ok]
    return out
