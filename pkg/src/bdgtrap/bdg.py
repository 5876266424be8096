"""Per-l BdG blocks in the oscillator basis and the fields they generate.

Each angular-momentum block l is the symmetric 2N_l x 2N_l matrix

    [[ diag(eps - mu_up) + H_up,   D            ],
     [ D,                         -diag(eps - mu_down) - H_down ]]

with D_nn' = int R_nl Delta R_n'l r^2 dr. Fields are built from full spectra
(both signs of E) with the Fermi function f(E) = 1 / (exp(E/T) + 1).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

import numpy as np
import scipy.linalg
from scipy.special import expit

from .basis import BasisTable

FOUR_PI = 4.0 * math.pi

T = TypeVar("T")


class EigenSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class RadialField:
    """A real function of r sampled on the grid nodes."""

    values: np.ndarray
    label: str = ""

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class LBlockSpectrum:
    l: int
    eigenvalues: np.ndarray
    u_coeffs: np.ndarray  # (2 N_l, N_l): row j is the u-sector of eigenvector j
    v_coeffs: np.ndarray

    @property
    def degeneracy(self) -> int:
        return 2 * self.l + 1

    def shifted(self, delta_e: float) -> "LBlockSpectrum":
        """Same eigenvectors with all eigenvalues moved by ``delta_e``.

        A change of (mu_up - mu_down)/2 at fixed (mu_up + mu_down)/2 shifts the
        whole block by a multiple of the identity.
        """
        return LBlockSpectrum(self.l, self.eigenvalues + delta_e, self.u_coeffs, self.v_coeffs)


def fermi_occupation(E, T: float):
    """Fermi function 1/(exp(E/T)+1); a step (1/2 at E=0) when T == 0."""
    if T < 0:
        raise ValueError("temperature must be non-negative")
    E = np.asarray(E, dtype=float)
    if T == 0:
        out = np.where(E < 0, 1.0, np.where(E > 0, 0.0, 0.5))
    else:
        out = expit(-E / T)
    return out if out.ndim else float(out)


def pair_occupation(E, T: float):
    """f(E) f(-E); zero at T == 0 except exactly at E == 0."""
    return fermi_occupation(E, T) * fermi_occupation(-np.asarray(E, dtype=float), T)


def assemble_lblock(
    l: int,
    pairing,
    mu_up: float,
    mu_down: float,
    basis: BasisTable,
    hartree: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Dense symmetric BdG matrix of block ``l``.

    ``hartree``, when given, is the pair of radial potentials
    (U n_down(r), U n_up(r)) added to the up and down diagonal blocks.
    """
    n_l = basis.states_per_l[l]
    if n_l < 1:
        raise ValueError(f"block l={l} has no states")
    delta = np.asarray(pairing, dtype=float)
    if delta.shape != basis.grid.nodes.shape:
        raise ValueError(f"pairing field has {delta.shape}, grid has {basis.grid.nodes.shape}")
    eps = basis.energies[l]
    H = np.zeros((2 * n_l, 2 * n_l))
    H[:n_l, :n_l] = np.diag(eps - mu_up)
    H[n_l:, n_l:] = -np.diag(eps - mu_down)
    if hartree is not None:
        pot_up, pot_down = (np.asarray(p, dtype=float) for p in hartree)
        H[:n_l, :n_l] += basis.matrix_elements(l, pot_up)
        H[n_l:, n_l:] -= basis.matrix_elements(l, pot_down)
    if np.any(delta):
        D = basis.matrix_elements(l, delta)
        H[:n_l, n_l:] = D
        H[n_l:, :n_l] = D.T
    return H


def diagonalize(matrix: np.ndarray, l: int = -1) -> LBlockSpectrum:
    """Full eigendecomposition of a symmetric block, eigenvalues ascending."""
    matrix = np.asarray(matrix, dtype=float)
    if not np.array_equal(matrix, matrix.T):
        raise ValueError("BdG block must be exactly symmetric")
    diag = np.diag(matrix)
    if not np.all(np.isfinite(diag)):
        raise EigenSolverError(f"eigensolver failed for block l={l}: non-finite entries")
    if np.count_nonzero(matrix - np.diag(diag)) == 0:
        # unpaired block without Hartree terms: already diagonal
        order = np.argsort(diag, kind="stable")
        w, vecs = diag[order], np.eye(len(diag))[:, order]
    else:
        try:
            w, vecs = scipy.linalg.eigh(matrix, check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigenSolverError(f"eigensolver failed for block l={l}: {exc}") from exc
    n_l = matrix.shape[0] // 2
    return LBlockSpectrum(
        l=l,
        eigenvalues=w,
        u_coeffs=np.ascontiguousarray(vecs[:n_l, :].T),
        v_coeffs=np.ascontiguousarray(vecs[n_l:, :].T),
    )


def map_blocks(func: Callable[[int], T], n_blocks: int, threads: int = 1) -> list[T]:
    """Evaluate ``func(l)`` for every block, returned in ascending l."""
    if threads <= 1 or n_blocks <= 1:
        return [func(l) for l in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, range(n_blocks)))


def solve_blocks(
    basis: BasisTable,
    pairing,
    mu_up: float,
    mu_down: float,
    hartree: tuple[np.ndarray, np.ndarray] | None = None,
    threads: int = 1,
) -> list[LBlockSpectrum]:
    def one(l: int) -> LBlockSpectrum:
        return diagonalize(assemble_lblock(l, pairing, mu_up, mu_down, basis, hartree), l)

    return map_blocks(one, basis.n_blocks, threads)


def particle_numbers(spectra: Sequence[LBlockSpectrum], T: float, shift: float = 0.0) -> tuple[float, float]:
    """(N_up, N_down) from the trace identity, with eigenvalues moved by ``shift``."""
    n_up = n_down = 0.0
    for s in spectra:
        E = s.eigenvalues + shift
        a = np.einsum("jn,jn->j", s.u_coeffs, s.u_coeffs)
        b = np.einsum("jn,jn->j", s.v_coeffs, s.v_coeffs)
        n_up += s.degeneracy * float(np.dot(a, fermi_occupation(E, T)))
        n_down += s.degeneracy * float(np.dot(b, fermi_occupation(-E, T)))
    return n_up, n_down


@dataclass(frozen=True)
class SpectrumWeights:
    """Flattened eigenvalues with their u- and v-sector norms times (2l+1).

    Lets N_sigma be re-evaluated for many eigenvalue shifts without touching
    the eigenvectors.
    """

    eigenvalues: np.ndarray
    up_weights: np.ndarray
    down_weights: np.ndarray

    @classmethod
    def from_spectra(cls, spectra: Sequence[LBlockSpectrum]) -> "SpectrumWeights":
        E, a, b = [], [], []
        for s in spectra:
            E.append(s.eigenvalues)
            a.append(s.degeneracy * np.einsum("jn,jn->j", s.u_coeffs, s.u_coeffs))
            b.append(s.degeneracy * np.einsum("jn,jn->j", s.v_coeffs, s.v_coeffs))
        return cls(np.concatenate(E), np.concatenate(a), np.concatenate(b))

    def numbers(self, T: float, shift: float = 0.0) -> tuple[float, float]:
        E = self.eigenvalues + shift
        return (
            float(np.dot(self.up_weights, fermi_occupation(E, T))),
            float(np.dot(self.down_weights, fermi_occupation(-E, T))),
        )


def _quadratic_form(R: np.ndarray, M: np.ndarray) -> np.ndarray:
    """sum_nn' R_n(r) M_nn' R_n'(r) at every grid node."""
    return np.einsum("nr,nr->r", R, M @ R)


def block_fields(s: LBlockSpectrum, basis: BasisTable, T: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contribution of one block to (pair amplitude, n_up, n_down), without the coupling."""
    R = basis.values[s.l]
    fp = fermi_occupation(s.eigenvalues, T)
    fm = fermi_occupation(-s.eigenvalues, T)
    U, V = s.u_coeffs, s.v_coeffs
    rho_up = (U.T * fp) @ U
    rho_down = (V.T * fm) @ V
    kappa = (U.T * fp) @ V
    kappa = 0.5 * (kappa + kappa.T)
    g = s.degeneracy / FOUR_PI
    return (
        g * _quadratic_form(R, kappa),
        g * _quadratic_form(R, rho_up),
        g * _quadratic_form(R, rho_down),
    )


def compute_fields(
    spectra: Sequence[LBlockSpectrum],
    basis: BasisTable,
    coupling,
    T: float,
    threads: int = 1,
) -> tuple[RadialField, RadialField, RadialField]:
    """Below-cutoff pairing field and the two spin densities.

    n_up(r)   = sum_jl (2l+1)/(4 pi) u_jl(r)^2 f(E_jl)
    n_down(r) = sum_jl (2l+1)/(4 pi) v_jl(r)^2 f(-E_jl)
    Delta(r)  = Utilde(r) sum_jl (2l+1)/(4 pi) u_jl(r) v_jl(r) f(E_jl)
    """
    coupling = np.asarray(coupling, dtype=float)
    if coupling.shape != basis.grid.nodes.shape:
        raise ValueError("coupling field does not match the grid")
    parts = map_blocks(lambda i: block_fields(spectra[i], basis, T), len(spectra), threads)
    G = len(basis.grid)
    pair = np.zeros(G)
    n_up = np.zeros(G)
    n_down = np.zeros(G)
    for p, a, b in parts:  # ascending l, fixed order
        pair += p
        n_up += a
        n_down += b
    return (
        RadialField(coupling * pair, "pairing"),
        RadialField(n_up, "density_up"),
        RadialField(n_down, "density_down"),
    )


def radial_amplitudes(s: LBlockSpectrum, basis: BasisTable) -> tuple[np.ndarray, np.ndarray]:
    """u_jl(r) and v_jl(r) for every eigenvector j, shape (2 N_l, grid)."""
    R = basis.values[s.l]
    return s.u_coeffs @ R, s.v_coeffs @ R
