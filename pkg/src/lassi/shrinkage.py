"""Singular value shrinkage estimators for the low-rank component update.

Four variants are supported: soft thresholding of singular values (the
proximal operator of the nuclear norm), hard thresholding (prox of the rank
penalty), the Schatten p-norm prox for p in {1/2, 2/3} (closed-form roots of
the scalar stationarity polynomial), and the data-driven estimator that
shrinks the leading singular values according to the D-transform of the
empirical distribution of the trailing ("noise") singular values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ShrinkageSpec",
    "svt",
    "hard_sv_threshold",
    "schatten_prox",
    "schatten_scalar_prox",
    "optshrink",
    "apply_shrinkage",
]

SCHATTEN_P_VALUES = (0.5, 2.0 / 3.0)


@dataclass(frozen=True)
class ShrinkageSpec:
    """Selected shrinkage variant with its resolved parameters.

    ``tau`` is the effective threshold (already multiplied by the gradient
    step where applicable); ``rank_l`` is the output rank of the data-driven
    variant.
    """

    kind: str
    tau: float = 0.0
    p: float | None = None
    rank_l: int | None = None

    def __post_init__(self):
        if self.kind not in ("svt", "hard", "schatten", "optshrink"):
            raise ValueError(f"unknown shrinkage kind {self.kind!r}")
        if self.kind != "optshrink" and self.tau < 0:
            raise ValueError("threshold must be nonnegative")
        if self.kind == "schatten":
            if self.p is None or not any(
                abs(self.p - v) < 1e-12 for v in SCHATTEN_P_VALUES
            ):
                raise ValueError("schatten shrinkage requires p in {1/2, 2/3}")
        if self.kind == "optshrink":
            if self.rank_l is None or self.rank_l < 1:
                raise ValueError("optshrink requires a positive rank")

    @classmethod
    def svt(cls, tau: float) -> "ShrinkageSpec":
        return cls("svt", tau=tau)

    @classmethod
    def hard(cls, tau: float) -> "ShrinkageSpec":
        return cls("hard", tau=tau)

    @classmethod
    def schatten(cls, p: float, tau: float) -> "ShrinkageSpec":
        return cls("schatten", tau=tau, p=p)

    @classmethod
    def optshrink(cls, rank_l: int) -> "ShrinkageSpec":
        return cls("optshrink", rank_l=rank_l)


def _svd(y: np.ndarray):
    try:
        return np.linalg.svd(y, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD failed on a {y.shape} matrix during shrinkage: {exc}"
        ) from exc


def svt(y: np.ndarray, tau: float) -> np.ndarray:
    """Soft-threshold the singular values: sum_i (sigma_i - tau)^+ u_i v_i^H."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    u, s, vh = _svd(y)
    shrunk = np.maximum(s - tau, 0.0)
    return (u * shrunk) @ vh


def hard_sv_threshold(y: np.ndarray, tau: float) -> np.ndarray:
    """Zero the singular values below ``tau``; keep the others unchanged."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    u, s, vh = _svd(y)
    kept = np.where(s >= tau, s, 0.0)
    return (u * kept) @ vh


def schatten_scalar_prox(sigma: float, p: float, tau: float) -> float:
    """Minimizer over w >= 0 of ``0.5*(w - sigma)^2 + tau*w^p``.

    Stationary points solve a cubic (p = 1/2, via w = b^2) or quartic
    (p = 2/3, via w = b^3); the candidate with the smallest objective wins,
    with ties resolved toward 0.
    """
    if tau == 0:
        return max(float(sigma), 0.0)
    if abs(p - 0.5) < 1e-12:
        roots = np.roots([2.0, 0.0, -2.0 * sigma, tau])
        candidates = [b.real**2 for b in roots if abs(b.imag) < 1e-9 and b.real > 0]
    else:
        roots = np.roots([1.0, 0.0, 0.0, -sigma, 2.0 * tau / 3.0])
        candidates = [b.real**3 for b in roots if abs(b.imag) < 1e-9 and b.real > 0]

    def objective(w):
        return 0.5 * (w - sigma) ** 2 + tau * w**p

    best_w, best_obj = 0.0, objective(0.0)
    for w in candidates:
        obj = objective(w)
        if obj < best_obj:
            best_w, best_obj = w, obj
    return float(best_w)


def schatten_prox(y: np.ndarray, p: float, tau: float) -> np.ndarray:
    """Apply the scalar Schatten-p prox to each singular value of ``y``."""
    if not any(abs(p - v) < 1e-12 for v in SCHATTEN_P_VALUES):
        raise ValueError("p must be 1/2 or 2/3")
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    u, s, vh = _svd(y)
    shrunk = np.array([schatten_scalar_prox(si, p, tau) for si in s])
    return (u * shrunk) @ vh


def optshrink(y: np.ndarray, rank_l: int) -> np.ndarray:
    """Data-driven shrinkage of the leading ``rank_l`` singular values.

    The trailing singular values form an empirical mass function mu; each
    leading value sigma_i is replaced by the weight ``-2 D(sigma_i)/D'(sigma_i)``
    where, with c = m/n,

        D(z) = [mean_t z/(z^2-t^2)] * [c * mean_t z/(z^2-t^2) + (1-c)/z].

    The output has rank at most ``rank_l`` exactly.
    """
    m, n = y.shape
    q = min(m, n)
    if not 1 <= rank_l < q:
        raise ValueError(f"rank {rank_l} must satisfy 1 <= rank < min(m, n) = {q}")
    if q - rank_l < 2:
        raise ValueError(
            f"need at least 2 noise singular values; rank {rank_l} leaves {q - rank_l}"
        )
    u, s, vh = _svd(y)
    noise = s[rank_l:]
    c = m / n
    noise_sq = noise**2
    weights = np.empty(rank_l)
    for i in range(rank_l):
        z = s[i]
        denom = z**2 - noise_sq
        if np.any(denom == 0):
            j = rank_l + int(np.argmax(denom == 0))
            raise ValueError(
                f"signal singular value {i} coincides with noise singular value {j}"
            )
        phi = np.mean(z / denom)
        phi_d = np.mean(-(z**2 + noise_sq) / denom**2)
        second = c * phi + (1.0 - c) / z
        d_val = phi * second
        d_der = phi_d * second + phi * (c * phi_d - (1.0 - c) / z**2)
        weights[i] = -2.0 * d_val / d_der
    return (u[:, :rank_l] * weights) @ vh[:rank_l]


def apply_shrinkage(y: np.ndarray, spec: ShrinkageSpec) -> np.ndarray:
    if spec.kind == "svt":
        return svt(y, spec.tau)
    if spec.kind == "hard":
        return hard_sv_threshold(y, spec.tau)
    if spec.kind == "schatten":
        return schatten_prox(y, spec.p, spec.tau)
    return optshrink(y, spec.rank_l)
