"""The k-t space encoding operator and sampling pattern generators.

The forward model applies per-frame coil weighting, a unitary centered 2D
FFT, and the binary sampling mask.  With unit (or sum-of-squares normalized)
coil maps the fully-sampled operator has norm exactly 1, so the masked
operator norm never exceeds 1.  DC sits at index ``(Nx//2, Ny//2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DynamicSequence, KtSpaceData, SamplingMask

__all__ = [
    "SensingOperator",
    "make_operator",
    "estimate_norm",
    "make_cartesian_mask",
    "make_pseudoradial_mask",
    "zerofill_baseline",
    "PowerIterationError",
]


class PowerIterationError(RuntimeError):
    pass


def _fft2c(x: np.ndarray) -> np.ndarray:
    axes = (-3, -2)
    return np.fft.fftshift(
        np.fft.fft2(np.fft.ifftshift(x, axes=axes), axes=axes, norm="ortho"), axes=axes
    )


def _ifft2c(x: np.ndarray) -> np.ndarray:
    axes = (-3, -2)
    return np.fft.fftshift(
        np.fft.ifft2(np.fft.ifftshift(x, axes=axes), axes=axes, norm="ortho"), axes=axes
    )


@dataclass(frozen=True)
class SensingOperator:
    """Masked per-frame Fourier encoding, optionally with coil weighting.

    Build instances through :func:`make_operator`, which computes the
    normalization ``scale`` from the fully-sampled operator norm.
    """

    mask: SamplingMask
    coil_maps: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.coil_maps is not None:
            maps = np.asarray(self.coil_maps, dtype=np.complex128)
            if maps.ndim != 3 or maps.shape[1:] != self.mask.shape[:2]:
                raise ValueError(
                    f"coil maps shape {maps.shape} does not match mask "
                    f"spatial shape {self.mask.shape[:2]}"
                )
            object.__setattr__(self, "coil_maps", maps)

    @property
    def nc(self) -> int:
        return 1 if self.coil_maps is None else self.coil_maps.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.mask.shape

    def _weighted(self, x: np.ndarray) -> np.ndarray:
        if self.coil_maps is None:
            return x[None]
        return self.coil_maps[:, :, :, None] * x[None]

    def forward(self, x: DynamicSequence) -> KtSpaceData:
        """Apply the encoding operator: masked FFT of the coil-weighted frames."""
        if x.shape != self.mask.shape:
            raise ValueError(f"shape mismatch: {x.shape} vs operator {self.mask.shape}")
        ksp = _fft2c(self._weighted(x.data))
        ksp *= self.mask.mask[None]
        ksp *= self.scale
        return KtSpaceData(ksp, self.mask)

    def adjoint(self, d: KtSpaceData | np.ndarray) -> DynamicSequence:
        """Exact adjoint of :meth:`forward` under the complex inner product."""
        samples = d.samples if isinstance(d, KtSpaceData) else np.asarray(d)
        if samples.ndim == 3:
            samples = samples[None]
        if samples.shape != (self.nc, *self.mask.shape):
            raise ValueError(
                f"samples shape {samples.shape} does not match operator "
                f"({self.nc}, {self.mask.shape})"
            )
        imgs = _ifft2c(samples * self.mask.mask[None])
        if self.coil_maps is None:
            out = imgs[0]
        else:
            out = np.sum(np.conj(self.coil_maps)[:, :, :, None] * imgs, axis=0)
        return DynamicSequence(out * self.scale)

    def with_full_mask(self) -> "SensingOperator":
        """Same coils and scale, but sampling everywhere."""
        full = SamplingMask(np.ones(self.mask.shape, dtype=np.uint8))
        return SensingOperator(full, self.coil_maps, self.scale)


def estimate_norm(
    op: SensingOperator, seed: int = 0, rtol: float = 1e-6, max_iters: int = 500
) -> float:
    """Operator norm ``||A||_2`` by power iteration on ``A^H A``.

    Deterministic for a given seed.  Raises :class:`PowerIterationError` with
    the iteration count if the Rayleigh quotient has not stabilized to
    ``rtol`` within ``max_iters`` iterations.
    """
    rng = np.random.default_rng(seed)
    shape = op.mask.shape
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    x /= np.linalg.norm(x)
    prev = 0.0
    for it in range(1, max_iters + 1):
        y = op.adjoint(op.forward(DynamicSequence(x))).data
        lam = float(np.real(np.vdot(x, y)))
        norm_y = np.linalg.norm(y)
        if norm_y == 0:
            return 0.0
        x = y / norm_y
        if it > 1 and abs(lam - prev) <= rtol * max(lam, 1e-300):
            return float(np.sqrt(max(lam, 0.0)))
        prev = lam
    raise PowerIterationError(
        f"power iteration did not converge after {max_iters} iterations"
    )


def make_operator(
    mask: SamplingMask, coil_maps: np.ndarray | None = None
) -> SensingOperator:
    """Build a sensing operator normalized so the full-mask version has norm 1."""
    unscaled = SensingOperator(mask, coil_maps, 1.0).with_full_mask()
    norm = estimate_norm(unscaled)
    if norm == 0:
        raise ValueError("degenerate operator: zero norm under full sampling")
    return SensingOperator(mask, coil_maps, 1.0 / norm)


def make_cartesian_mask(
    nx: int, ny: int, nt: int, accel: float, seed: int = 0
) -> SamplingMask:
    """Variable-density random Cartesian pattern, one line set per frame.

    Each frame samples ``ceil(Ny/accel)`` full phase-encode lines along y,
    drawn without replacement from a center-peaked density proportional to
    ``(1 + |j - center|/Ny)^(-2)``; the center line is always included and
    frames are drawn independently.  Deterministic for a given seed.
    """
    if accel < 1:
        raise ValueError("acceleration must be >= 1")
    if accel > ny:
        raise ValueError(f"acceleration {accel} exceeds the number of lines {ny}")
    n_lines = int(np.ceil(ny / accel))
    center = ny // 2
    weights = (1.0 + np.abs(np.arange(ny) - center) / ny) ** -2.0
    weights[center] = 0.0
    rng = np.random.default_rng(seed)
    mask = np.zeros((nx, ny, nt), dtype=np.uint8)
    others = np.flatnonzero(np.arange(ny) != center)
    probs = weights[others] / weights[others].sum()
    for t in range(nt):
        lines = [center]
        if n_lines > 1:
            lines.extend(rng.choice(others, size=n_lines - 1, replace=False, p=probs))
        mask[:, np.asarray(lines), t] = 1
    return SamplingMask(mask)


def make_pseudoradial_mask(
    nx: int, ny: int, nt: int, num_spokes: int, seed: int = 0, jitter: bool = True
) -> SamplingMask:
    """Radial spokes rasterized onto the Cartesian grid, rotated per frame.

    Spokes sit at angles ``pi*k/num_spokes`` plus a per-frame random offset
    in ``[0, pi/num_spokes)`` (disabled with ``jitter=False``); each spoke
    marks the nearest grid sample along its length.  Deterministic for a
    given seed.
    """
    if num_spokes < 1:
        raise ValueError("need at least one spoke")
    rng = np.random.default_rng(seed)
    cx, cy = nx // 2, ny // 2
    rmax = 0.5 * float(np.hypot(nx, ny))
    radii = np.arange(-rmax, rmax + 0.25, 0.25)
    mask = np.zeros((nx, ny, nt), dtype=np.uint8)
    for t in range(nt):
        offset = rng.uniform(0.0, np.pi / num_spokes) if jitter else 0.0
        for k in range(num_spokes):
            theta = np.pi * k / num_spokes + offset
            ii = np.rint(cx + radii * np.cos(theta)).astype(int)
            jj = np.rint(cy + radii * np.sin(theta)).astype(int)
            keep = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
            mask[ii[keep], jj[keep], t] = 1
    return SamplingMask(mask)


def _nearest_fill(samples: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Fill unsampled frames with the temporally nearest sampled value.

    Ties break toward the earlier frame; locations never sampled stay zero.
    """
    nt = mask.shape[-1]
    t_idx = np.arange(nt)
    big = 2 * nt
    prev = np.where(mask.astype(bool), t_idx, -1)
    prev = np.maximum.accumulate(prev, axis=-1)
    nxt = np.where(mask.astype(bool), t_idx, big)
    nxt = np.minimum.accumulate(nxt[..., ::-1], axis=-1)[..., ::-1]
    dist_prev = np.where(prev >= 0, t_idx - prev, big)
    dist_next = np.where(nxt < nt, nxt - t_idx, big)
    choose = np.where(dist_prev <= dist_next, prev, nxt)
    never = (prev < 0) & (nxt >= nt)
    choose = np.clip(choose, 0, nt - 1)
    filled = np.take_along_axis(samples, choose[None], axis=-1)
    filled[:, never] = 0
    return filled


def zerofill_baseline(d: KtSpaceData, op: SensingOperator) -> DynamicSequence:
    """Nearest-frame temporal fill of k-t space, then the fully-sampled adjoint."""
    filled = _nearest_fill(d.samples, d.mask.mask)
    return op.with_full_mask().adjoint(filled)
