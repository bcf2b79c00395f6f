"""Dynamic image reconstruction drivers.

``run_lassi`` alternates a dictionary learning step (block coordinate
descent on the patches of the sparse component) with an image update step
(proximal gradient on the decomposition, with pluggable singular value
shrinkage for the low-rank block and a diagonal normal-equation solve for
the dictionary-sparse block).  ``run_dinokat`` is the special case with the
low-rank component pinned to zero; ``run_lps_baseline`` is the
fixed-transform low-rank plus sparse method with a unitary temporal Fourier
transform.  For the svt/hard/schatten shrinkage variants the recorded
objective is non-increasing across every inner and outer step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .dictlearn import Dictionary, SparseCodeMatrix, init_dictionary, soup_bcd
from .model import (
    Decomposition,
    DynamicSequence,
    KtSpaceData,
    MetricsTrace,
    nrmse,
    reshape_r1,
    unreshape_r1,
)
from .patches import PatchConfig, aggregate_patches, count_coverage, extract_patches
from .sensing import SensingOperator, estimate_norm, zerofill_baseline
from .shrinkage import ShrinkageSpec, apply_shrinkage

__all__ = [
    "ReconConfig",
    "LassiResult",
    "DinokatResult",
    "gradient",
    "prox_xl",
    "prox_xs",
    "prox_gradient_p4",
    "run_lassi",
    "run_dinokat",
    "run_lps_baseline",
    "resolve_step",
    "resolve_shrinkage",
]


@dataclass(frozen=True)
class ReconConfig:
    """All scalars of the reconstruction formulations.

    ``a`` is the sparse-code magnitude bound; when None it is set to 1e6
    times the peak patch magnitude of the initialization so the constraint
    is inactive in normal runs (clips are counted on the trace).  ``step``
    defaults to ``0.99 / ||A||^2``, inside the stability bound ``t < 2/l``
    with ``l = 2 ||A||^2``.
    """

    lam_l: float = 0.35
    lam_s: float = 0.04
    lam_z: float = 0.03
    a: float | None = None
    atom_rank: int = 1
    shrinkage: ShrinkageSpec = field(default_factory=lambda: ShrinkageSpec.svt(0.0))
    penalty: str = "l0"
    step: float | None = None
    outer_iters: int = 50
    dict_sweeps: int = 1
    prox_iters: int = 5
    seed: int = 0
    patch: PatchConfig = field(default_factory=PatchConfig)
    n_atoms: int = 320

    def __post_init__(self):
        if min(self.lam_l, self.lam_s, self.lam_z) < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.penalty not in ("l0", "l1"):
            raise ValueError(f"unknown penalty {self.penalty!r}")
        if min(self.outer_iters, self.dict_sweeps, self.prox_iters) < 0:
            raise ValueError("iteration counts must be nonnegative")
        if self.a is not None and self.a <= 0:
            raise ValueError("magnitude bound a must be positive")
        rows, cols = self.patch.reshape_dims
        if not 1 <= self.atom_rank <= min(rows, cols):
            raise ValueError(f"atom rank {self.atom_rank} outside [1, {min(rows, cols)}]")


class LassiResult(NamedTuple):
    decomposition: Decomposition
    dictionary: Dictionary
    codes: SparseCodeMatrix
    trace: MetricsTrace


class DinokatResult(NamedTuple):
    x: DynamicSequence
    dictionary: Dictionary
    codes: SparseCodeMatrix
    trace: MetricsTrace


def resolve_step(step: float | None, op_norm: float) -> float:
    """Default the gradient step and enforce ``t < 2/l`` with ``l = 2||A||^2``."""
    bound = 1.0 / op_norm**2
    t = 0.99 * bound if step is None else float(step)
    if not 0 < t < bound:
        raise ValueError(
            f"step {t} violates t < 2/l = {bound} (operator norm {op_norm})"
        )
    return t


def resolve_shrinkage(spec: ShrinkageSpec, t: float, lam_l: float) -> ShrinkageSpec:
    """Fill in the effective threshold for the chosen shrinkage variant."""
    if spec.kind == "svt":
        return ShrinkageSpec.svt(t * lam_l)
    if spec.kind == "hard":
        return ShrinkageSpec.hard(float(np.sqrt(2.0 * t * lam_l)))
    if spec.kind == "schatten":
        return ShrinkageSpec.schatten(spec.p, t * lam_l)
    return spec


def gradient(
    op: SensingOperator, xl: DynamicSequence, xs: DynamicSequence, d: KtSpaceData
) -> DynamicSequence:
    """Shared gradient ``A^H A (xl + xs) - A^H d`` of the data-fidelity term."""
    residual = op.forward(DynamicSequence(xl.data + xs.data)).samples - d.samples
    return op.adjoint(residual)


def prox_xl(xl_tilde: DynamicSequence, spec: ShrinkageSpec) -> DynamicSequence:
    """Shrink the singular values of the space-time matricization."""
    shrunk = apply_shrinkage(reshape_r1(xl_tilde), spec)
    return unreshape_r1(shrunk, xl_tilde.shape)


def prox_xs(
    xs_tilde: DynamicSequence,
    dictionary: Dictionary,
    z: np.ndarray,
    cfg: PatchConfig,
    t: float,
    lam_s: float,
) -> DynamicSequence:
    """Solve ``(I + 2 t lam_s sum_j Pj^T Pj) x = xs_tilde + 2 t lam_s sum_j Pj^T D z_j``.

    The system matrix is diagonal (the coverage counts), so the solve is an
    entrywise division.
    """
    if lam_s == 0:
        return xs_tilde
    dz = dictionary.atoms @ (z.z if isinstance(z, SparseCodeMatrix) else np.asarray(z))
    agg = aggregate_patches(dz, cfg, xs_tilde.shape).data
    counts = count_coverage(cfg, xs_tilde.shape)
    return _prox_xs_cached(xs_tilde, agg, counts, t, lam_s)


def _prox_xs_cached(xs_tilde, agg, counts, t, lam_s) -> DynamicSequence:
    w = 2.0 * t * lam_s
    return DynamicSequence((xs_tilde.data + w * agg) / (1.0 + w * counts))


def _soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    mag = np.abs(v)
    scale = np.maximum(mag - tau, 0.0) / np.where(mag > 0, mag, 1.0)
    return v * scale


def _fidelity(op, x: DynamicSequence, d: KtSpaceData) -> float:
    return 0.5 * float(np.linalg.norm(op.forward(x).samples - d.samples) ** 2)


def _lowrank_term(xl: DynamicSequence, spec: ShrinkageSpec, lam_l: float) -> float:
    """Low-rank penalty value; zero for the non-variational variant."""
    if lam_l == 0 or spec.kind == "optshrink":
        return 0.0
    s = np.linalg.svd(reshape_r1(xl), compute_uv=False)
    if spec.kind == "svt":
        return lam_l * float(s.sum())
    if spec.kind == "schatten":
        return lam_l * float(np.sum(s**spec.p))
    # rank penalty; iterates produced by hard thresholding have exact rank,
    # so counting above half the threshold is robust to SVD rounding
    return lam_l * int(np.count_nonzero(s > 0.5 * spec.tau))


def _code_penalty(z: SparseCodeMatrix, lam_z: float, penalty: str) -> float:
    if penalty == "l0":
        return lam_z**2 * z.n_nonzero
    return lam_z * float(np.sum(np.abs(z.z)))


def prox_gradient_p4(
    xl0: DynamicSequence,
    xs0: DynamicSequence,
    dictionary: Dictionary | None,
    z: SparseCodeMatrix | None,
    op: SensingOperator,
    d: KtSpaceData,
    cfg: PatchConfig,
    n_iters: int,
    t: float,
    spec: ShrinkageSpec,
    lam_s: float,
) -> Decomposition:
    """Proximal gradient iterations for the decomposition subproblem.

    Both blocks step against the shared gradient evaluated at the previous
    iterate, then apply their proximal maps.
    """
    if n_iters == 0:
        return Decomposition(xl0, xs0)
    shape = xl0.shape
    if lam_s > 0:
        if dictionary is None or z is None:
            raise ValueError("dictionary and codes are required when lam_s > 0")
        dz = dictionary.atoms @ z.z
        agg = aggregate_patches(dz, cfg, shape).data
        counts = count_coverage(cfg, shape)
    else:
        agg = counts = None
    xl, xs = xl0, xs0
    for _ in range(n_iters):
        g = gradient(op, xl, xs, d).data
        xl = prox_xl(DynamicSequence(xl.data - t * g), spec)
        xs_tilde = DynamicSequence(xs.data - t * g)
        xs = xs_tilde if lam_s == 0 else _prox_xs_cached(xs_tilde, agg, counts, t, lam_s)
    return Decomposition(xl, xs)


def _resolve_bound(a: float | None, peak: float, lam_z: float) -> float:
    if a is not None:
        return a
    bound = 1e6 * peak if peak > 0 else 1e6
    if bound <= lam_z:
        bound = 1e6 * lam_z
    return bound


def run_lassi(
    d: KtSpaceData,
    op: SensingOperator,
    cfg: ReconConfig,
    init: Decomposition | None = None,
    d0: Dictionary | None = None,
    z0: SparseCodeMatrix | None = None,
    ref: DynamicSequence | None = None,
    track_inner: bool = False,
) -> LassiResult:
    """Alternate dictionary learning and image reconstruction steps.

    Defaults: the sparse component is initialized with the zero-fill
    baseline and the low-rank component with zero; the dictionary starts
    from the rank-projected DCT (plus normalized patches of the
    initialization when overcomplete) and the codes from zero.
    """
    shape = op.mask.shape
    op_norm = estimate_norm(op, seed=cfg.seed)
    t = resolve_step(cfg.step, op_norm)
    spec = resolve_shrinkage(cfg.shrinkage, t, cfg.lam_l)
    if init is None:
        init = Decomposition(DynamicSequence.zeros(shape), zerofill_baseline(d, op))
    xl, xs = init.xl, init.xs

    patch_cfg = cfg.patch
    m = patch_cfg.m
    counts = count_coverage(patch_cfg, shape)
    p0 = extract_patches(xs, patch_cfg)
    bound = _resolve_bound(cfg.a, float(np.max(np.abs(p0))) if p0.size else 0.0, cfg.lam_z)
    if d0 is None:
        d0 = init_dictionary(
            m, cfg.n_atoms, patch_cfg.reshape_dims, cfg.atom_rank, cfg.seed, patch_pool=p0
        )
    dictionary = d0
    z = z0 if z0 is not None else SparseCodeMatrix(
        np.zeros((dictionary.n_atoms, p0.shape[1]), dtype=np.complex128), bound
    )

    trace = MetricsTrace(objective_certified=spec.kind != "optshrink")
    if cfg.outer_iters == 0:
        return LassiResult(Decomposition(xl, xs), dictionary, z, trace)

    ref_norm = ref.norm() if ref is not None else init.x.norm()
    if ref_norm == 0:
        ref_norm = 1.0
    x_prev = init.x.data

    fid = _fidelity(op, init.x, d)
    lr = _lowrank_term(xl, spec, cfg.lam_l)
    sparse_fit = None  # fit + code penalty, carried between steps
    clip_count = 0

    for it in range(1, cfg.outer_iters + 1):
        p_mat = extract_patches(xs, patch_cfg)
        if sparse_fit is None:
            if z.n_nonzero == 0:
                sparse_fit = float(np.linalg.norm(p_mat) ** 2)
            else:
                resid = p_mat - dictionary.atoms @ z.z
                resid_sq = float(np.linalg.norm(resid) ** 2)
                sparse_fit = resid_sq + _code_penalty(z, cfg.lam_z, cfg.penalty)

        soup = soup_bcd(
            p_mat,
            dictionary,
            z,
            cfg.lam_z,
            bound,
            penalty=cfg.penalty,
            sweeps=cfg.dict_sweeps,
            initial_fit=sparse_fit,
        )
        dictionary, z = soup.dictionary, soup.codes
        clip_count += soup.clip_count
        if track_inner:
            trace.inner_objectives.extend(
                fid + lr + cfg.lam_s * v for v in soup.objective_trace
            )
        sparse_fit = soup.objective_trace[-1] if soup.objective_trace else sparse_fit

        dz = dictionary.atoms @ z.z
        agg = aggregate_patches(dz, patch_cfg, shape).data
        pen = _code_penalty(z, cfg.lam_z, cfg.penalty)
        for _ in range(cfg.prox_iters):
            g = gradient(op, xl, xs, d).data
            xl = prox_xl(DynamicSequence(xl.data - t * g), spec)
            xs_tilde = DynamicSequence(xs.data - t * g)
            xs = (
                xs_tilde
                if cfg.lam_s == 0
                else _prox_xs_cached(xs_tilde, agg, counts, t, cfg.lam_s)
            )
            if track_inner:
                fid = _fidelity(op, DynamicSequence(xl.data + xs.data), d)
                lr = _lowrank_term(xl, spec, cfg.lam_l)
                fit = float(np.linalg.norm(extract_patches(xs, patch_cfg) - dz) ** 2)
                trace.inner_objectives.append(fid + lr + cfg.lam_s * (fit + pen))
        x_cur = DynamicSequence(xl.data + xs.data)
        fid = _fidelity(op, x_cur, d)
        lr = _lowrank_term(xl, spec, cfg.lam_l)
        fit = float(np.linalg.norm(extract_patches(xs, patch_cfg) - dz) ** 2)
        sparse_fit = fit + pen
        objective = fid + lr + cfg.lam_s * sparse_fit
        err = nrmse(x_cur, ref) if ref is not None else float("nan")
        delta = float(np.linalg.norm(x_cur.data - x_prev)) / ref_norm
        trace.append(it, objective, err, 100.0 * z.sparsity, delta)
        x_prev = x_cur.data

    trace.clip_count = clip_count
    return LassiResult(Decomposition(xl, xs), dictionary, z, trace)


def run_dinokat(
    d: KtSpaceData,
    op: SensingOperator,
    cfg: ReconConfig,
    x0: DynamicSequence | None = None,
    d0: Dictionary | None = None,
    z0: SparseCodeMatrix | None = None,
    ref: DynamicSequence | None = None,
    track_inner: bool = False,
) -> DinokatResult:
    """Dictionary-blind reconstruction: the same loop with ``x_L = 0``."""
    shape = op.mask.shape
    op_norm = estimate_norm(op, seed=cfg.seed)
    t = resolve_step(cfg.step, op_norm)
    if x0 is None:
        x0 = zerofill_baseline(d, op)
    x = x0

    patch_cfg = cfg.patch
    counts = count_coverage(patch_cfg, shape)
    p0 = extract_patches(x, patch_cfg)
    bound = _resolve_bound(cfg.a, float(np.max(np.abs(p0))) if p0.size else 0.0, cfg.lam_z)
    if d0 is None:
        d0 = init_dictionary(
            patch_cfg.m, cfg.n_atoms, patch_cfg.reshape_dims, cfg.atom_rank, cfg.seed,
            patch_pool=p0,
        )
    dictionary = d0
    z = z0 if z0 is not None else SparseCodeMatrix(
        np.zeros((dictionary.n_atoms, p0.shape[1]), dtype=np.complex128), bound
    )

    trace = MetricsTrace()
    if cfg.outer_iters == 0:
        return DinokatResult(x, dictionary, z, trace)

    ref_norm = ref.norm() if ref is not None else x0.norm()
    if ref_norm == 0:
        ref_norm = 1.0
    x_prev = x.data

    fid = _fidelity(op, x, d)
    sparse_fit = None
    clip_count = 0

    for it in range(1, cfg.outer_iters + 1):
        p_mat = extract_patches(x, patch_cfg)
        if sparse_fit is None:
            if z.n_nonzero == 0:
                sparse_fit = float(np.linalg.norm(p_mat) ** 2)
            else:
                resid = p_mat - dictionary.atoms @ z.z
                sparse_fit = float(np.linalg.norm(resid) ** 2) + _code_penalty(
                    z, cfg.lam_z, cfg.penalty
                )

        soup = soup_bcd(
            p_mat, dictionary, z, cfg.lam_z, bound,
            penalty=cfg.penalty, sweeps=cfg.dict_sweeps, initial_fit=sparse_fit,
        )
        dictionary, z = soup.dictionary, soup.codes
        clip_count += soup.clip_count
        if track_inner:
            trace.inner_objectives.extend(
                fid + cfg.lam_s * v for v in soup.objective_trace
            )
        sparse_fit = soup.objective_trace[-1] if soup.objective_trace else sparse_fit

        dz = dictionary.atoms @ z.z
        agg = aggregate_patches(dz, patch_cfg, shape).data
        pen = _code_penalty(z, cfg.lam_z, cfg.penalty)
        for _ in range(cfg.prox_iters):
            g = op.adjoint(op.forward(x).samples - d.samples).data
            x_tilde = DynamicSequence(x.data - t * g)
            x = (
                x_tilde
                if cfg.lam_s == 0
                else _prox_xs_cached(x_tilde, agg, counts, t, cfg.lam_s)
            )
            if track_inner:
                fid = _fidelity(op, x, d)
                fit = float(np.linalg.norm(extract_patches(x, patch_cfg) - dz) ** 2)
                trace.inner_objectives.append(fid + cfg.lam_s * (fit + pen))
        fid = _fidelity(op, x, d)
        fit = float(np.linalg.norm(extract_patches(x, patch_cfg) - dz) ** 2)
        sparse_fit = fit + pen
        objective = fid + cfg.lam_s * sparse_fit
        err = nrmse(x, ref) if ref is not None else float("nan")
        delta = float(np.linalg.norm(x.data - x_prev)) / ref_norm
        trace.append(it, objective, err, 100.0 * z.sparsity, delta)
        x_prev = x.data

    trace.clip_count = clip_count
    return DinokatResult(x, dictionary, z, trace)


def run_lps_baseline(
    d: KtSpaceData,
    op: SensingOperator,
    lam_l: float,
    lam_s: float,
    n_iters: int,
    step: float | None = None,
    init: Decomposition | None = None,
    ref: DynamicSequence | None = None,
    return_trace: bool = False,
):
    """Proximal gradient for the fixed-transform low-rank plus sparse model.

    The sparsifying transform is the unitary Fourier transform along time:
    the low-rank block applies singular value soft thresholding and the
    sparse block soft-thresholds its temporal spectrum.  The low-rank
    component is initialized with the zero-fill baseline and the sparse
    component with zero.  With ``return_trace=True`` returns
    ``(Decomposition, MetricsTrace)`` with one record per iteration; the
    sparsity column reports the nonzero fraction of the thresholded
    temporal spectrum.
    """
    op_norm = estimate_norm(op)
    t = resolve_step(step, op_norm)
    if init is None:
        init = Decomposition(
            zerofill_baseline(d, op), DynamicSequence.zeros(op.mask.shape)
        )
    xl, xs = init.xl, init.xs
    spec = ShrinkageSpec.svt(t * lam_l)

    trace = MetricsTrace()
    ref_norm = ref.norm() if ref is not None else init.x.norm()
    if ref_norm == 0:
        ref_norm = 1.0
    x_prev = init.x.data

    for it in range(1, n_iters + 1):
        g = gradient(op, xl, xs, d).data
        xl = prox_xl(DynamicSequence(xl.data - t * g), spec)
        spectrum = np.fft.fft(xs.data - t * g, axis=-1, norm="ortho")
        spectrum = _soft_threshold(spectrum, t * lam_s)
        xs = DynamicSequence(np.fft.ifft(spectrum, axis=-1, norm="ortho"))

        x_cur = DynamicSequence(xl.data + xs.data)
        objective = (
            _fidelity(op, x_cur, d)
            + lam_l * float(np.linalg.svd(reshape_r1(xl), compute_uv=False).sum())
            + lam_s * float(np.sum(np.abs(spectrum)))
        )
        trace.inner_objectives.append(objective)
        err = nrmse(x_cur, ref) if ref is not None else float("nan")
        delta = float(np.linalg.norm(x_cur.data - x_prev)) / ref_norm
        sparsity = 100.0 * np.count_nonzero(spectrum) / spectrum.size
        trace.append(it, objective, err, sparsity, delta)
        x_prev = x_cur.data

    decomp = Decomposition(xl, xs)
    if return_trace:
        return decomp, trace
    return decomp
