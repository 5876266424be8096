"""Radial quadrature grid and normalized 3D oscillator radial functions.

All lengths are in oscillator lengths and energies in units of hbar*omega.
The radial functions are

    R_nl(r) = sqrt(2 n! / Gamma(n + l + 3/2)) r^l L_n^{l+1/2}(r^2) exp(-r^2/2)

normalized so that int_0^inf R_nl(r)^2 r^2 dr = 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln


class BasisError(ValueError):
    """Raised when the tabulated basis is not orthonormal on the grid."""


@dataclass(frozen=True)
class RadialGrid:
    nodes: np.ndarray
    weights: np.ndarray
    r_max: float

    def __len__(self) -> int:
        return len(self.nodes)

    def integrate(self, values: np.ndarray) -> float:
        """Return int_0^r_max g(r) dr for samples g(r_i)."""
        return float(np.dot(self.weights, values))

    def integrate_r2(self, values: np.ndarray) -> float:
        """Return int_0^r_max g(r) r^2 dr."""
        return float(np.dot(self.weights * self.nodes**2, values))


def build_grid(grid_points: int, r_max: float) -> RadialGrid:
    """Gauss-Legendre nodes and weights mapped onto (0, r_max)."""
    if r_max <= 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if grid_points < 2:
        raise ValueError(f"grid_points must be >= 2, got {grid_points}")
    x, w = np.polynomial.legendre.leggauss(int(grid_points))
    nodes = 0.5 * r_max * (x + 1.0)
    weights = 0.5 * r_max * w
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return RadialGrid(nodes=nodes, weights=weights, r_max=float(r_max))


def states_per_l(cutoff_Ec: float, l: int) -> int:
    """Number of radial states n with 2n + l + 3/2 < cutoff_Ec."""
    if l < 0:
        raise ValueError("l must be non-negative")
    top = (cutoff_Ec - l - 1.5) / 2.0
    if top <= 0:
        return 0
    count = int(np.floor(top)) + 1
    # strict inequality: drop a state sitting exactly on the cutoff
    if 2 * (count - 1) + l + 1.5 >= cutoff_Ec:
        count -= 1
    return count


def max_angular_momentum(cutoff_Ec: float) -> int:
    """Largest l with at least one state below the cutoff (-1 if none)."""
    l = int(np.ceil(cutoff_Ec - 1.5))
    while l >= 0 and states_per_l(cutoff_Ec, l) == 0:
        l -= 1
    return l


def radial_functions(n_states: int, l: int, r: np.ndarray) -> np.ndarray:
    """Tabulate R_nl(r) for n = 0..n_states-1 as an (n_states, len(r)) array.

    Uses the three-term Laguerre recurrence on the normalized functions
    phi_n = sqrt(n!/Gamma(n+a+1)) L_n^a with a = l + 1/2:

        sqrt((n+1)(n+a+1)) phi_{n+1} = (2n+1+a-x) phi_n - sqrt(n(n+a)) phi_{n-1}

    The envelope sqrt(2) r^l exp(-r^2/2) / sqrt(Gamma(a+1)) is folded into the
    seed in log space, so no factorial is ever formed.
    """
    r = np.asarray(r, dtype=float)
    out = np.zeros((n_states, r.size))
    if n_states == 0:
        return out
    a = l + 0.5
    x = r * r
    with np.errstate(divide="ignore"):
        log_seed = 0.5 * np.log(2.0) + l * np.log(r) - 0.5 * x - 0.5 * gammaln(a + 1.0)
    prev = np.zeros_like(r)
    cur = np.exp(log_seed)
    out[0] = cur
    for n in range(n_states - 1):
        nxt = ((2 * n + 1 + a - x) * cur - np.sqrt(n * (n + a)) * prev) / np.sqrt(
            (n + 1) * (n + a + 1)
        )
        out[n + 1] = nxt
        prev, cur = cur, nxt
    return out


def oscillator_energy(n, l):
    return 2 * np.asarray(n) + l + 1.5


@dataclass(frozen=True)
class BasisTable:
    cutoff_Ec: float
    grid: RadialGrid
    states_per_l: tuple[int, ...]
    values: tuple[np.ndarray, ...]
    energies: tuple[np.ndarray, ...]

    @property
    def l_max(self) -> int:
        return len(self.states_per_l) - 1

    @property
    def n_blocks(self) -> int:
        return len(self.states_per_l)

    def overlap(self, l: int) -> np.ndarray:
        """Overlap matrix int R_nl R_n'l r^2 dr of block l on the grid."""
        R = self.values[l]
        return (R * (self.grid.weights * self.grid.nodes**2)) @ R.T

    def matrix_elements(self, l: int, field: np.ndarray) -> np.ndarray:
        """Matrix int R_nl(r) g(r) R_n'l(r) r^2 dr for a radial field g."""
        R = self.values[l]
        M = (R * (self.grid.weights * self.grid.nodes**2 * field)) @ R.T
        return 0.5 * (M + M.T)

    def orthonormality_error(self) -> float:
        worst = 0.0
        for l in range(self.n_blocks):
            S = self.overlap(l)
            worst = max(worst, float(np.max(np.abs(S - np.eye(len(S))))))
        return worst


def tabulate_basis(grid: RadialGrid, cutoff_Ec: float, tolerance: float = 1e-6) -> BasisTable:
    """Tabulate every R_nl with 2n + l + 3/2 < cutoff_Ec on the grid.

    Raises BasisError if any overlap deviates from the identity by more than
    ``tolerance``; that means the grid is too short or too coarse.
    """
    l_max = max_angular_momentum(cutoff_Ec)
    if l_max < 0:
        raise ValueError(f"no basis states below cutoff {cutoff_Ec}")
    counts, values, energies = [], [], []
    for l in range(l_max + 1):
        n_l = states_per_l(cutoff_Ec, l)
        R = radial_functions(n_l, l, grid.nodes)
        R.setflags(write=False)
        counts.append(n_l)
        values.append(R)
        energies.append(oscillator_energy(np.arange(n_l), l).astype(float))
    table = BasisTable(
        cutoff_Ec=float(cutoff_Ec),
        grid=grid,
        states_per_l=tuple(counts),
        values=tuple(values),
        energies=tuple(energies),
    )
    err = table.orthonormality_error()
    if err > tolerance:
        raise BasisError(
            f"basis overlap deviates from identity by {err:.3e} "
            f"(r_max={grid.r_max}, points={len(grid)}); enlarge or refine the grid"
        )
    return table
