"""Deterministic synthetic dynamic phantoms and simulated coil maps.

Phantoms are built from anti-aliased ellipses: a static background (low-rank
in the space-time matricization) plus moving/brightening ellipses that add
genuinely dynamic content, with an optional gamma-variate contrast curve
mimicking a perfusion bolus.  The final volume is normalized to unit peak
magnitude.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .model import DynamicSequence

__all__ = [
    "Ellipse",
    "PhantomSpec",
    "make_phantom",
    "make_coil_maps",
    "default_acceptance_spec",
    "load_phantom_spec",
    "save_phantom_spec",
]

_ANTIALIAS = 4  # subpixel samples per axis


@dataclass(frozen=True)
class Ellipse:
    """One ellipse with optional per-frame motion and intensity dynamics.

    ``center`` and ``semi_axes`` are in pixels, ``angle`` in radians.
    ``motion`` is one of
      - ``{"kind": "none"}``
      - ``{"kind": "orbit", "radius": r, "cycles": c}`` (circular path)
      - ``{"kind": "linear", "velocity": [vx, vy]}`` (pixels per frame)
    and ``intensity_curve`` one of
      - ``{"kind": "constant"}``
      - ``{"kind": "cosine", "amplitude": a, "cycles": c}``
      - ``{"kind": "gamma", "onset": t0, "peak_delay": tp, "alpha": a}``
        (gamma-variate bolus, peak value 1 at frame ``t0 + peak_delay``).
    """

    center: tuple[float, float]
    semi_axes: tuple[float, float]
    intensity: float = 1.0
    angle: float = 0.0
    motion: dict = field(default_factory=lambda: {"kind": "none"})
    intensity_curve: dict = field(default_factory=lambda: {"kind": "constant"})

    def center_at(self, t: int) -> tuple[float, float]:
        kind = self.motion.get("kind", "none")
        cx, cy = self.center
        if kind == "none":
            return cx, cy
        if kind == "orbit":
            phase = 2.0 * np.pi * self.motion["cycles"] * t / max(
                self.motion.get("frames", 1), 1
            )
            r = self.motion["radius"]
            return cx + r * np.cos(phase), cy + r * np.sin(phase)
        if kind == "linear":
            vx, vy = self.motion["velocity"]
            return cx + vx * t, cy + vy * t
        raise ValueError(f"unknown motion kind {kind!r}")

    def intensity_at(self, t: int) -> float:
        kind = self.intensity_curve.get("kind", "constant")
        if kind == "constant":
            return self.intensity
        if kind == "cosine":
            amp = self.intensity_curve["amplitude"]
            cycles = self.intensity_curve["cycles"]
            frames = max(self.intensity_curve.get("frames", 1), 1)
            return self.intensity * (1.0 + amp * np.cos(2.0 * np.pi * cycles * t / frames))
        if kind == "gamma":
            t0 = self.intensity_curve["onset"]
            tp = self.intensity_curve["peak_delay"]
            alpha = self.intensity_curve["alpha"]
            if t <= t0:
                return 0.0
            u = (t - t0) / tp
            return self.intensity * float(u**alpha * np.exp(alpha * (1.0 - u)))
        raise ValueError(f"unknown intensity curve {kind!r}")


@dataclass(frozen=True)
class PhantomSpec:
    shape: tuple[int, int, int]
    static_ellipses: tuple[Ellipse, ...] = ()
    dynamic_ellipses: tuple[Ellipse, ...] = ()
    noise_level: float = 0.0
    seed: int = 0

    def all_ellipses(self) -> tuple[Ellipse, ...]:
        return tuple(self.static_ellipses) + tuple(self.dynamic_ellipses)


def _coverage(ellipse: Ellipse, nx: int, ny: int, t: int) -> np.ndarray:
    """Fraction of each pixel covered by the ellipse at frame ``t``."""
    cx, cy = ellipse.center_at(t)
    a, b = ellipse.semi_axes
    sub = (np.arange(_ANTIALIAS) + 0.5) / _ANTIALIAS - 0.5
    xs = np.arange(nx)[:, None] + sub[None, :]  # (nx, s)
    ys = np.arange(ny)[:, None] + sub[None, :]  # (ny, s)
    dx = (xs - cx).reshape(nx, 1, _ANTIALIAS, 1)
    dy = (ys - cy).reshape(1, ny, 1, _ANTIALIAS)
    cos_t, sin_t = np.cos(ellipse.angle), np.sin(ellipse.angle)
    u = (dx * cos_t + dy * sin_t) / a
    v = (-dx * sin_t + dy * cos_t) / b
    inside = (u * u + v * v) <= 1.0
    return inside.mean(axis=(2, 3))


def _check_in_fov(ellipse: Ellipse, nx: int, ny: int, nt: int) -> None:
    reach = max(ellipse.semi_axes)
    for t in range(nt):
        cx, cy = ellipse.center_at(t)
        if not (0 <= cx - reach and cx + reach <= nx - 1 and 0 <= cy - reach and cy + reach <= ny - 1):
            raise ValueError(
                f"ellipse centered at ({cx:.1f}, {cy:.1f}) leaves the "
                f"{nx}x{ny} field of view at frame {t}"
            )


def make_phantom(spec: PhantomSpec) -> DynamicSequence:
    """Render the phantom described by ``spec``; bit-reproducible."""
    nx, ny, nt = spec.shape
    for ell in spec.all_ellipses():
        _check_in_fov(ell, nx, ny, nt)
    vol = np.zeros((nx, ny, nt), dtype=np.complex128)
    for ell in spec.static_ellipses:
        cov = _coverage(ell, nx, ny, 0)
        for t in range(nt):
            vol[:, :, t] += ell.intensity_at(t) * cov
    for ell in spec.dynamic_ellipses:
        for t in range(nt):
            vol[:, :, t] += ell.intensity_at(t) * _coverage(ell, nx, ny, t)
    if spec.noise_level > 0:
        rng = np.random.default_rng(spec.seed)
        noise = rng.standard_normal(vol.shape) + 1j * rng.standard_normal(vol.shape)
        vol += spec.noise_level * noise / np.sqrt(2.0)
    peak = np.max(np.abs(vol))
    if peak > 0:
        vol /= peak
    return DynamicSequence(vol)


def make_coil_maps(nx: int, ny: int, nc: int, seed: int = 0) -> np.ndarray:
    """Smooth simulated coil sensitivities, sum-of-squares normalized.

    Gaussian magnitude profiles centered on a ring around the volume with
    small seeded linear phase ramps; at every pixel the squared magnitudes
    sum to exactly 1 (so ``Nc = 1`` gives an all-ones map).
    """
    if nc < 1:
        raise ValueError("need at least one coil")
    rng = np.random.default_rng(seed)
    xs = np.arange(nx)[:, None]
    ys = np.arange(ny)[None, :]
    maps = np.empty((nc, nx, ny), dtype=np.complex128)
    radius = 0.6 * max(nx, ny)
    width = 0.8 * max(nx, ny)
    for c in range(nc):
        theta = 2.0 * np.pi * c / nc + rng.uniform(0, 0.2)
        cx = nx / 2 + radius * np.cos(theta)
        cy = ny / 2 + radius * np.sin(theta)
        mag = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * width**2))
        ramp = rng.uniform(-np.pi, np.pi, size=2)
        phase = np.exp(1j * (ramp[0] * xs / nx + ramp[1] * ys / ny))
        maps[c] = mag * phase
    sos = np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))
    return maps / sos[None]


def default_acceptance_spec() -> PhantomSpec:
    """The 64x64x16 phantom used by the end-to-end checks.

    Two static structures, one orbiting ellipse, and one drifting ellipse
    carrying a gamma-variate contrast bolus; the space-time matricization
    has effective rank well above the static background's.
    """
    nt = 16
    return PhantomSpec(
        shape=(64, 64, nt),
        static_ellipses=(
            Ellipse(center=(32.0, 32.0), semi_axes=(26.0, 22.0), intensity=0.8),
            Ellipse(
                center=(22.0, 26.0),
                semi_axes=(7.0, 5.0),
                intensity=0.5,
                angle=0.5,
            ),
        ),
        dynamic_ellipses=(
            Ellipse(
                center=(40.0, 38.0),
                semi_axes=(5.0, 4.0),
                intensity=0.9,
                motion={"kind": "orbit", "radius": 4.0, "cycles": 1.0, "frames": nt},
            ),
            Ellipse(
                center=(30.0, 44.0),
                semi_axes=(4.0, 4.0),
                intensity=1.0,
                motion={"kind": "linear", "velocity": [0.4, -0.3]},
                intensity_curve={"kind": "gamma", "onset": 1, "peak_delay": 5, "alpha": 2.0},
            ),
        ),
        noise_level=0.0,
        seed=0,
    )


def save_phantom_spec(spec: PhantomSpec, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(asdict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_phantom_spec(path) -> PhantomSpec:
    with open(path, "r", encoding="ascii") as fh:
        raw = json.load(fh)
    return PhantomSpec(
        shape=tuple(raw["shape"]),
        static_ellipses=tuple(Ellipse(**_ellipse_kwargs(e)) for e in raw.get("static_ellipses", ())),
        dynamic_ellipses=tuple(Ellipse(**_ellipse_kwargs(e)) for e in raw.get("dynamic_ellipses", ())),
        noise_level=raw.get("noise_level", 0.0),
        seed=raw.get("seed", 0),
    )


def _ellipse_kwargs(raw: dict) -> dict:
    kwargs = dict(raw)
    kwargs["center"] = tuple(kwargs["center"])
    kwargs["semi_axes"] = tuple(kwargs["semi_axes"])
    return kwargs
