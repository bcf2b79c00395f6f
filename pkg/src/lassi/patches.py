"""Overlapping spatiotemporal patch extraction and its adjoint.

Patch origins start at 0 and advance by the stride; when the stride does not
divide the volume size, one final origin is clamped so the last patch ends
exactly at the volume edge.  Every voxel is therefore covered by at least one
patch.  Patches never wrap around volume boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DynamicSequence

__all__ = ["PatchConfig", "extract_patches", "aggregate_patches", "count_coverage"]


def _axis_origins(size: int, width: int, stride: int) -> np.ndarray:
    if width > size:
        raise ValueError(f"patch width {width} exceeds volume size {size}")
    origins = list(range(0, size - width + 1, stride))
    if origins[-1] != size - width:
        origins.append(size - width)
    return np.asarray(origins)


@dataclass(frozen=True)
class PatchConfig:
    """Patch geometry: dims ``(mx, my, mt)`` and strides ``(sx, sy, st)``."""

    shape: tuple[int, int, int] = (8, 8, 5)
    stride: tuple[int, int, int] = (2, 2, 1)

    def __post_init__(self):
        if len(self.shape) != 3 or len(self.stride) != 3:
            raise ValueError("patch shape and stride must each have 3 entries")
        if any(s < 1 for s in self.shape) or any(s < 1 for s in self.stride):
            raise ValueError("patch dims and strides must be positive")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "stride", tuple(int(s) for s in self.stride))

    @property
    def m(self) -> int:
        """Vectorized patch length ``mx*my*mt``."""
        mx, my, mt = self.shape
        return mx * my * mt

    @property
    def reshape_dims(self) -> tuple[int, int]:
        """Space-by-time shape ``(mx*my, mt)`` of a reshaped patch or atom."""
        mx, my, mt = self.shape
        return mx * my, mt

    def origins(self, volume_shape) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            _axis_origins(n, w, s)
            for n, w, s in zip(volume_shape, self.shape, self.stride)
        )

    def num_patches(self, volume_shape) -> int:
        return int(np.prod([len(o) for o in self.origins(volume_shape)]))


def extract_patches(x: DynamicSequence | np.ndarray, cfg: PatchConfig) -> np.ndarray:
    """Gather all patches of ``x`` as columns of an ``(m, M)`` matrix.

    Column ``j`` is patch ``j`` vectorized x-fastest; patch origins are
    enumerated x-fastest as well.
    """
    data = x.data if isinstance(x, DynamicSequence) else np.asarray(x)
    ox, oy, ot = cfg.origins(data.shape)
    windows = np.lib.stride_tricks.sliding_window_view(data, cfg.shape)
    sub = windows[np.ix_(ox, oy, ot)]
    m = cfg.m
    n_patches = len(ox) * len(oy) * len(ot)
    return sub.transpose(3, 4, 5, 0, 1, 2).reshape(m, n_patches, order="F")


def aggregate_patches(q: np.ndarray, cfg: PatchConfig, shape) -> DynamicSequence:
    """Adjoint of :func:`extract_patches`: add each column back in place.

    Returns the sum over patches of the column scattered to its source
    voxels; overlapping contributions accumulate.
    """
    ox, oy, ot = cfg.origins(shape)
    n_patches = len(ox) * len(oy) * len(ot)
    mx, my, mt = cfg.shape
    if q.shape != (cfg.m, n_patches):
        raise ValueError(f"expected a ({cfg.m}, {n_patches}) matrix, got {q.shape}")
    blocks = q.reshape(mx, my, mt, len(ox), len(oy), len(ot), order="F")
    out = np.zeros(shape, dtype=np.complex128)
    # Origins along one axis are distinct, so for a fixed in-patch offset the
    # target voxels are distinct and a fancy-indexed += is collision free.
    for pt in range(mt):
        for py in range(my):
            for px in range(mx):
                out[np.ix_(ox + px, oy + py, ot + pt)] += blocks[px, py, pt]
    return DynamicSequence(out)


def count_coverage(cfg: PatchConfig, shape) -> np.ndarray:
    """Number of patches covering each voxel (all entries >= 1)."""
    ones = np.ones((cfg.m, cfg.num_patches(shape)), dtype=np.complex128)
    counts = aggregate_patches(ones, cfg, shape).data.real
    return np.rint(counts).astype(np.int64)
