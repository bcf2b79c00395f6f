"""Sparsity-penalized dictionary learning by block coordinate descent.

The factorization ``D C^H`` is treated as a sum of outer products; sparse
code columns ``c_i`` and atoms ``d_i`` are updated sequentially in closed
form.  Reshaped atoms (space-by-time matrices) are constrained to rank at
most ``r`` and unit norm.  The residual matrices ``E_i`` are never formed:
the products ``E_i^H d_i`` and ``E_i c_i`` are assembled from ``P``, ``D``
and ``C`` with rank-1 corrections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .containers import ContainerError, read_raw, write_tensor

__all__ = [
    "Dictionary",
    "SparseCodeMatrix",
    "SoupResult",
    "sparse_code_l0",
    "sparse_code_l1",
    "atom_update",
    "soup_bcd",
    "nsre",
    "init_dictionary",
    "save_dictionary",
    "load_dictionary",
]

UNIT_NORM_TOL = 1e-10
RANK_TOL = 1e-10


@dataclass(frozen=True)
class Dictionary:
    """An ``m x K`` complex dictionary with unit-norm, low-rank-reshaped atoms.

    ``reshape_dims`` gives the space-by-time shape ``(mx*my, mt)`` of a
    reshaped atom; every reshaped atom has rank at most ``atom_rank``.
    """

    atoms: np.ndarray
    atom_rank: int
    reshape_dims: tuple[int, int]

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.complex128)
        rows, cols = self.reshape_dims
        if atoms.ndim != 2 or atoms.shape[0] != rows * cols:
            raise ValueError(
                f"atoms shape {atoms.shape} inconsistent with reshape dims "
                f"{self.reshape_dims}"
            )
        if not 1 <= self.atom_rank <= min(rows, cols):
            raise ValueError(
                f"atom rank {self.atom_rank} outside [1, {min(rows, cols)}]"
            )
        norms = np.linalg.norm(atoms, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"atom {worst} has norm {norms[worst]!r}, expected 1")
        if self.atom_rank < min(rows, cols):
            for i in range(atoms.shape[1]):
                s = np.linalg.svd(
                    atoms[:, i].reshape(rows, cols, order="F"), compute_uv=False
                )
                if np.any(s[self.atom_rank :] > RANK_TOL):
                    raise ValueError(
                        f"reshaped atom {i} exceeds rank {self.atom_rank}: "
                        f"trailing singular value {s[self.atom_rank]:.3e}"
                    )
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "reshape_dims", tuple(self.reshape_dims))

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[1]


@dataclass(frozen=True)
class SparseCodeMatrix:
    """Sparse coefficients ``Z`` (atoms by patches) with magnitude bound ``a``."""

    z: np.ndarray
    bound: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.complex128)
        if z.ndim != 2:
            raise ValueError(f"expected a 2-d coefficient matrix, got shape {z.shape}")
        if self.bound <= 0:
            raise ValueError("magnitude bound must be positive")
        peak = np.max(np.abs(z)) if z.size else 0.0
        if peak > self.bound * (1.0 + 1e-9):
            raise ValueError(f"entry magnitude {peak} exceeds bound {self.bound}")
        object.__setattr__(self, "z", z)

    @property
    def c(self) -> np.ndarray:
        """The conjugate-transpose (patches by atoms) view used by the learner."""
        return self.z.conj().T

    @property
    def n_nonzero(self) -> int:
        return int(np.count_nonzero(self.z))

    @property
    def sparsity(self) -> float:
        """Exact fraction of nonzero entries."""
        return self.n_nonzero / self.z.size


def sparse_code_l0(products: np.ndarray, lam_z: float, bound: float) -> np.ndarray:
    """Closed-form hard-thresholding update of one sparse code column.

    ``products`` is ``E_i^H d_i``.  Entries with magnitude below ``lam_z``
    are zeroed; entries at or above the threshold keep their phase and have
    their magnitude clipped at ``bound``.  Requires ``bound > lam_z`` so the
    thresholded value is always feasible.
    """
    if bound <= lam_z:
        raise ValueError(f"bound a={bound} must exceed the threshold {lam_z}")
    mag = np.abs(products)
    safe = np.where(mag > 0, mag, 1.0)
    clipped = products * (np.minimum(mag, bound) / safe)
    return np.where(mag >= lam_z, clipped, 0.0 + 0.0j)


def sparse_code_l1(products: np.ndarray, lam_z: float, bound: float) -> np.ndarray:
    """Soft-thresholding update: magnitudes shrink by ``lam_z/2``, clip at ``bound``."""
    if bound <= 0:
        raise ValueError("bound a must be positive")
    mag = np.abs(products)
    shrunk = np.minimum(np.maximum(mag - 0.5 * lam_z, 0.0), bound)
    safe = np.where(mag > 0, mag, 1.0)
    return products * (shrunk / safe)


def _reset_atom(m: int) -> np.ndarray:
    atom = np.zeros(m, dtype=np.complex128)
    atom[0] = 1.0
    return atom


def _fix_svd_phases(u: np.ndarray, vh: np.ndarray, k: int):
    """Rotate each singular pair so the largest entry of u_i is real positive."""
    for i in range(k):
        idx = int(np.argmax(np.abs(u[:, i])))
        pivot = u[idx, i]
        if pivot != 0:
            phase = pivot / abs(pivot)
            u[:, i] *= np.conj(phase)
            vh[i, :] *= phase
    return u, vh


def atom_update(
    ei_ci: np.ndarray,
    reshape_dims: tuple[int, int],
    rank: int,
    ci_is_zero: bool,
) -> np.ndarray:
    """Closed-form atom update: normalized rank-``rank`` approximation of
    the reshaped product ``E_i c_i``.

    When the sparse code is zero the atom resets to the first identity
    column.  When ``rank`` equals the smaller reshape dimension no SVD is
    needed and the product is simply normalized.
    """
    rows, cols = reshape_dims
    m = rows * cols
    if ei_ci.shape != (m,):
        raise ValueError(f"expected a length-{m} vector, got shape {ei_ci.shape}")
    if not 1 <= rank <= min(rows, cols):
        raise ValueError(f"rank {rank} outside [1, {min(rows, cols)}]")
    if ci_is_zero:
        return _reset_atom(m)
    nrm = np.linalg.norm(ei_ci)
    if nrm == 0:
        # Only reachable for inputs that did not come from a sparse coding
        # step (there E_i c_i = 0 implies c_i = 0).
        return _reset_atom(m)
    if rank == min(rows, cols):
        return ei_ci / nrm
    try:
        u, s, vh = np.linalg.svd(
            ei_ci.reshape(rows, cols, order="F"), full_matrices=False
        )
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"SVD failed during the update of a {rows}x{cols} reshaped atom: {exc}"
        ) from exc
    u, vh = _fix_svd_phases(u, vh, rank)
    truncated = (u[:, :rank] * s[:rank]) @ vh[:rank]
    return (truncated / np.linalg.norm(s[:rank])).ravel(order="F")


@dataclass
class SoupResult:
    dictionary: Dictionary
    codes: SparseCodeMatrix
    objective_trace: list[float] = field(default_factory=list)
    clip_count: int = 0


def _penalty(c: np.ndarray, lam_z: float, penalty: str) -> float:
    if penalty == "l0":
        return lam_z**2 * np.count_nonzero(c)
    return lam_z * float(np.sum(np.abs(c)))


def soup_bcd(
    p_mat: np.ndarray,
    d0: Dictionary,
    c0: SparseCodeMatrix | None,
    lam_z: float,
    bound: float,
    penalty: str = "l0",
    sweeps: int = 1,
    initial_fit: float | None = None,
) -> SoupResult:
    """Run ``sweeps`` full passes of sparse-code and atom updates.

    ``p_mat`` holds the training patches as columns.  ``initial_fit`` may
    pass in the already-known starting objective (fit plus sparsity penalty)
    to avoid recomputing the residual; the per-update objective trace is
    maintained through closed-form increments.  The objective is
    non-increasing across every individual update.
    """
    if penalty not in ("l0", "l1"):
        raise ValueError(f"unknown penalty {penalty!r}")
    m, n_patches = p_mat.shape
    if d0.m != m:
        raise ValueError(f"dictionary length {d0.m} does not match patches {m}")
    n_atoms = d0.n_atoms
    d_mat = np.array(d0.atoms, copy=True)
    if c0 is None:
        c_mat = np.zeros((n_patches, n_atoms), dtype=np.complex128)
    else:
        if c0.z.shape != (n_atoms, n_patches):
            raise ValueError(
                f"codes shape {c0.z.shape} does not match ({n_atoms}, {n_patches})"
            )
        c_mat = np.ascontiguousarray(c0.z.conj().T)
    p_mat = np.asfortranarray(p_mat, dtype=np.complex128)

    if initial_fit is not None:
        objective = float(initial_fit)
    elif c0 is None or not np.any(c_mat):
        objective = float(np.linalg.norm(p_mat) ** 2)
    else:
        resid = p_mat - d_mat @ c_mat.conj().T
        objective = float(np.linalg.norm(resid) ** 2) + _penalty(c_mat, lam_z, penalty)

    code_fn = sparse_code_l0 if penalty == "l0" else sparse_code_l1
    shift = 0.5 * lam_z if penalty == "l1" else 0.0
    trace: list[float] = []
    clips = 0

    for _ in range(sweeps):
        ptd = p_mat.conj().T @ d_mat
        for i in range(n_atoms):
            d_i = d_mat[:, i]
            c_old = c_mat[:, i]
            gram = d_mat.conj().T @ d_i
            b = ptd[:, i] - c_mat @ gram + c_old

            c_new = code_fn(b, lam_z, bound)
            clips += int(np.count_nonzero((np.abs(b) - shift > bound) & (c_new != 0)))
            objective += (
                float(np.linalg.norm(c_new) ** 2 - np.linalg.norm(c_old) ** 2)
                - 2.0 * float(np.real(np.vdot(b, c_new) - np.vdot(b, c_old)))
                + _penalty(c_new, lam_z, penalty)
                - _penalty(c_old, lam_z, penalty)
            )
            trace.append(objective)
            c_mat[:, i] = c_new

            nz = np.flatnonzero(c_new)
            if nz.size == 0:
                d_new = _reset_atom(m)
            else:
                c_nz = c_new[nz]
                h = (
                    p_mat[:, nz] @ c_nz
                    - d_mat @ (c_mat[nz, :].conj().T @ c_nz)
                    + d_i * np.vdot(c_new, c_new)
                )
                d_new = atom_update(h, d0.reshape_dims, d0.atom_rank, False)
                objective += -2.0 * float(np.real(np.vdot(d_new - d_i, h)))
            trace.append(objective)
            d_mat[:, i] = d_new

    return SoupResult(
        dictionary=Dictionary(d_mat, d0.atom_rank, d0.reshape_dims),
        codes=SparseCodeMatrix(c_mat.conj().T, bound),
        objective_trace=trace,
        clip_count=clips,
    )


def nsre(p_mat: np.ndarray, dictionary, codes) -> float:
    """Normalized representation error ``||P - D C^H||_F / ||P||_F``."""
    d_mat = dictionary.atoms if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    c_mat = codes.c if isinstance(codes, SparseCodeMatrix) else np.asarray(codes)
    p_norm = np.linalg.norm(p_mat)
    if p_norm == 0:
        raise ValueError("training matrix has zero norm")
    return float(np.linalg.norm(p_mat - d_mat @ c_mat.conj().T) / p_norm)


def _truncate_atom_rank(atom: np.ndarray, reshape_dims, rank: int) -> np.ndarray:
    rows, cols = reshape_dims
    if rank >= min(rows, cols):
        return atom / np.linalg.norm(atom)
    u, s, vh = np.linalg.svd(atom.reshape(rows, cols, order="F"), full_matrices=False)
    u, vh = _fix_svd_phases(u, vh, rank)
    truncated = (u[:, :rank] * s[:rank]) @ vh[:rank]
    return (truncated / np.linalg.norm(s[:rank])).ravel(order="F")


def init_dictionary(
    m: int,
    n_atoms: int,
    reshape_dims: tuple[int, int],
    atom_rank: int,
    seed: int = 0,
    patch_pool: np.ndarray | None = None,
) -> Dictionary:
    """Deterministic starting dictionary.

    The square case is the orthonormal 1D DCT matrix of size ``m``; the
    overcomplete case appends normalized patches drawn from seeded random
    columns of ``patch_pool`` (random unit vectors where the pool is missing
    or a drawn patch is zero).  Atoms are projected to the rank constraint.
    """
    if n_atoms < m:
        raise ValueError(f"need at least {m} atoms, got {n_atoms}")
    base = scipy.fft.dct(np.eye(m), axis=0, norm="ortho").astype(np.complex128)
    rng = np.random.default_rng(seed)
    if n_atoms > m:
        extras = np.empty((m, n_atoms - m), dtype=np.complex128)
        pool_cols = 0 if patch_pool is None else patch_pool.shape[1]
        for k in range(n_atoms - m):
            col = None
            if pool_cols:
                col = np.asarray(
                    patch_pool[:, int(rng.integers(pool_cols))], dtype=np.complex128
                )
                if np.linalg.norm(col) == 0:
                    col = None
            if col is None:
                col = rng.standard_normal(m) + 1j * rng.standard_normal(m)
            extras[:, k] = col / np.linalg.norm(col)
        atoms = np.concatenate([base, extras], axis=1)
    else:
        atoms = base
    for i in range(n_atoms):
        atoms[:, i] = _truncate_atom_rank(atoms[:, i], reshape_dims, atom_rank)
    return Dictionary(atoms, atom_rank, reshape_dims)


def save_dictionary(dictionary: Dictionary, path) -> None:
    write_tensor(
        dictionary.atoms,
        path,
        kind="dictionary",
        extra={
            "atom_rank": dictionary.atom_rank,
            "reshape_dims": list(dictionary.reshape_dims),
        },
    )


def load_dictionary(path) -> Dictionary:
    arr, header = read_raw(path)
    if header.get("kind") != "dictionary" or "atom_rank" not in header:
        raise ContainerError(f"{path} does not hold a dictionary")
    return Dictionary(
        arr.astype(np.complex128),
        int(header["atom_rank"]),
        tuple(int(v) for v in header["reshape_dims"]),
    )
