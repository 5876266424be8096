"""Self-consistency loop at fixed (N_up, N_down)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .basis import BasisTable, build_grid, tabulate_basis
from .bdg import (
    LBlockSpectrum,
    RadialField,
    SpectrumWeights,
    compute_fields,
    solve_blocks,
)
from .config import DerivedScales, SolverConfig, derive_scales
from .regularization import hybrid_gap, lda_gap_tail, local_momenta, regularized_coupling

log = logging.getLogger(__name__)

UNDER_RELAXED_THETA = 0.2


class BracketError(RuntimeError):
    pass


@dataclass
class Problem:
    """Everything fixed for a run: config, scales, grid and basis."""

    config: SolverConfig
    scales: DerivedScales
    basis: BasisTable

    @classmethod
    def from_config(cls, config: SolverConfig) -> "Problem":
        grid = build_grid(config.grid_points, config.r_max)
        return cls(config, derive_scales(config), tabulate_basis(grid, config.cutoff_Ec))

    @property
    def r(self) -> np.ndarray:
        return self.basis.grid.nodes

    @property
    def temperature(self) -> float:
        """Temperature in hbar*omega/k_B."""
        return self.config.temperature * self.scales.fermi_temperature


@dataclass(frozen=True)
class JournalEntry:
    iteration: int
    residual_pairing: float
    residual_numbers: float
    mu_up: float
    mu_down: float
    delta_at_origin: float


@dataclass
class ScfState:
    mu_up: float
    mu_down: float
    pairing: RadialField
    n_up: RadialField
    n_down: RadialField
    pair_amplitude: np.ndarray  # sum (2l+1)/4pi u v f(E), before the coupling
    spectra: list[LBlockSpectrum]
    iteration: int = 0
    residual_pairing: float = math.inf
    residual_numbers: float = math.inf
    converged: bool = False
    theta: float = 0.5
    journal: list[JournalEntry] = field(default_factory=list)


# --------------------------------------------------------------------------
# chemical potentials
# --------------------------------------------------------------------------


class _Found(Exception):
    def __init__(self, x):
        self.x = x


def _monotone_root(func: Callable[[float], float], x0: float, slope: float, tol: float, what: str,
                   max_expand: int = 80) -> float:
    """Root of an increasing function, starting from x0 with a slope estimate.

    Evaluations are cached so the bracketing probes are reused by Brent's
    method; iteration stops as soon as |func| <= tol.
    """
    cache: dict[float, float] = {}

    def g(x: float) -> float:
        if x not in cache:
            cache[x] = func(x)
        v = cache[x]
        if abs(v) <= tol:
            raise _Found(x)
        return v

    a = x0
    try:
        va = g(x0)
        direction = -1.0 if va > 0 else 1.0
        h = max(1.1 * abs(va) / slope, 1e-12 * (1.0 + abs(x0)))
        for _ in range(max_expand):
            b = a + direction * h
            vb = g(b)
            if (vb > 0) != (va > 0):
                lo, hi = (a, b) if a < b else (b, a)
                brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
                # converged in x without reaching |f| <= tol: take the best probe
                return min(cache, key=lambda x: abs(cache[x]))
            s = (vb - va) / (b - a)
            if s > 0 and math.isfinite(s):
                h = min(max(1.1 * abs(vb) / s, 1e-12 * (1.0 + abs(b))), 4 * h)
            else:
                h *= 2
            a, va = b, vb
    except _Found as hit:
        return hit.x
    raise BracketError(f"could not bracket {what}: scanned from {x0} to {a} with no sign change")


@dataclass
class ChemicalPotentials:
    mu_up: float
    mu_down: float
    spectra: list[LBlockSpectrum]
    numbers_at_start: tuple[float, float]
    evaluations: int


def solve_chemical_potentials(
    problem: Problem,
    pairing,
    targets: tuple[float, float],
    guess: tuple[float, float],
    hartree: tuple[np.ndarray, np.ndarray] | None = None,
) -> ChemicalPotentials:
    """Adjust (mu_up, mu_down) at frozen Delta until N_sigma hits the targets.

    Outer search on mu = (mu_up + mu_down)/2, each probe diagonalizing all
    l-blocks; inner search on dmu = (mu_up - mu_down)/2, which only shifts
    every eigenvalue by -dmu and needs no new diagonalization. A balanced
    target keeps dmu = 0 exactly.
    """
    cfg = problem.config
    T = problem.temperature
    n_up_t, n_down_t = targets
    n_tot = n_up_t + n_down_t
    balanced = n_up_t == n_down_t
    tol = cfg.number_tolerance * max(min(n_up_t, n_down_t), 1.0)
    mu0 = 0.5 * (guess[0] + guess[1])
    h0 = 0.0 if balanced else 0.5 * (guess[0] - guess[1])
    probes: dict[float, tuple[list[LBlockSpectrum], float]] = {}
    first: list[tuple[float, float]] = []

    def inner(weights: SpectrumWeights) -> float:
        if balanced:
            return h0
        target = n_up_t - n_down_t

        def diff(h: float) -> float:
            a, b = weights.numbers(T, h0 - h)
            return (a - b) - target

        # d(N_up - N_down)/d(dmu) of the trapped ideal gas is about mu^2
        return _monotone_root(diff, h0, max(mu0 * mu0, 1.0), tol, "the chemical-potential difference")

    def total(mu: float) -> float:
        spectra = solve_blocks(problem.basis, pairing, mu + h0, mu - h0, hartree, cfg.threads)
        weights = SpectrumWeights.from_spectra(spectra)
        if not first:
            first.append(weights.numbers(T))
        h = inner(weights)
        probes[mu] = (spectra, h)
        a, b = weights.numbers(T, h0 - h)
        return (a + b) - n_tot

    # dN/dmu of the trapped ideal gas is mu^2 (both spins)
    mu = _monotone_root(total, mu0, max(mu0 * mu0, 1.0), tol, "the mean chemical potential")
    spectra, h = probes[mu]
    spectra = [s.shifted(h0 - h) for s in spectra] if h != h0 else spectra
    return ChemicalPotentials(mu + h, mu - h, spectra, first[0], len(probes))


# --------------------------------------------------------------------------
# SCF
# --------------------------------------------------------------------------


def _coupling(problem: Problem, mu_up: float, mu_down: float):
    mom = local_momenta(problem.r, mu_up, mu_down, problem.config.cutoff_Ec)
    return mom, regularized_coupling(mom, problem.config.interaction_U)


def _hartree(problem: Problem, n_up, n_down):
    if not problem.config.include_hartree:
        return None
    U = problem.config.interaction_U
    return U * np.asarray(n_down), U * np.asarray(n_up)


def _norm(problem: Problem, values: np.ndarray) -> float:
    w = problem.basis.grid.weights * problem.r**2
    return math.sqrt(float(np.dot(w, values * values)))


def _refresh_fields(problem: Problem, state: ScfState) -> None:
    T = problem.temperature
    ones = np.ones(len(problem.r))
    amp, n_up, n_down = compute_fields(state.spectra, problem.basis, ones, T, problem.config.threads)
    state.pair_amplitude = amp.values
    state.n_up, state.n_down = n_up, n_down


def initial_state(problem: Problem, pairing: np.ndarray | None = None,
                  mu_guess: tuple[float, float] | None = None) -> ScfState:
    """Cold start: Gaussian seed for Delta and LDA ideal-gas chemical potentials."""
    cfg, sc = problem.config, problem.scales
    if pairing is None:
        if cfg.interaction_U == 0 or cfg.n_down == 0:
            pairing = np.zeros(len(problem.r))
        else:
            pairing = cfg.seed_amplitude * sc.fermi_energy * np.exp(
                -problem.r**2 / sc.thomas_fermi_radius**2
            )
    if mu_guess is None:
        mu_guess = ((6.0 * cfg.n_up) ** (1 / 3), (6.0 * cfg.n_down) ** (1 / 3))
        if cfg.n_up == cfg.n_down:
            mu_guess = (mu_guess[0], mu_guess[0])
    pairing = np.asarray(pairing, dtype=float)
    cp = solve_chemical_potentials(problem, pairing, (cfg.n_up, cfg.n_down), mu_guess)
    G = len(problem.r)
    state = ScfState(
        mu_up=cp.mu_up,
        mu_down=cp.mu_down,
        pairing=RadialField(pairing.copy(), "pairing"),
        n_up=RadialField(np.zeros(G), "density_up"),
        n_down=RadialField(np.zeros(G), "density_down"),
        pair_amplitude=np.zeros(G),
        spectra=cp.spectra,
        theta=cfg.mixing_theta,
    )
    _refresh_fields(problem, state)
    return state


def scf_step(problem: Problem, state: ScfState) -> ScfState:
    """One cycle: new Delta from the current spectra, mix, re-solve mu, re-diagonalize."""
    cfg, sc = problem.config, problem.scales
    T = problem.temperature
    old = state.pairing.values
    mom, coupling = _coupling(problem, state.mu_up, state.mu_down)
    bdg_part = coupling.values * state.pair_amplitude
    lda_part = lda_gap_tail(old, mom, cfg.interaction_U, T)
    calc = hybrid_gap(bdg_part, lda_part).values
    new = state.theta * calc + (1.0 - state.theta) * old

    res_pair = _norm(problem, new - old) / max(_norm(problem, old), sc.fermi_energy * 1e-6)
    hartree = _hartree(problem, state.n_up, state.n_down)
    cp = solve_chemical_potentials(
        problem, new, (cfg.n_up, cfg.n_down), (state.mu_up, state.mu_down), hartree
    )
    n0_up, n0_down = cp.numbers_at_start
    res_num = max(
        abs(n0_up - cfg.n_up) / max(cfg.n_up, 1.0),
        abs(n0_down - cfg.n_down) / max(cfg.n_down, 1.0),
    )

    out = replace(
        state,
        mu_up=cp.mu_up,
        mu_down=cp.mu_down,
        pairing=RadialField(new, "pairing"),
        spectra=cp.spectra,
        iteration=state.iteration + 1,
        residual_pairing=res_pair,
        residual_numbers=res_num,
        journal=list(state.journal),
    )
    _refresh_fields(problem, out)
    out.converged = res_pair <= cfg.scf_tolerance and res_num <= cfg.scf_tolerance
    out.journal.append(
        JournalEntry(out.iteration, res_pair, res_num, cp.mu_up, cp.mu_down, float(new[0]))
    )
    # under-relax after three consecutive residual increases
    j = out.journal
    if (
        out.theta > UNDER_RELAXED_THETA
        and len(j) >= 4
        and all(j[-k].residual_pairing > j[-k - 1].residual_pairing for k in (1, 2, 3))
    ):
        log.info("residual rising for 3 steps; mixing reduced to %.2f", UNDER_RELAXED_THETA)
        out.theta = UNDER_RELAXED_THETA
    return out


def run_scf(
    problem: Problem,
    state: ScfState | None = None,
    callback: Callable[[ScfState], None] | None = None,
) -> ScfState:
    """Iterate to convergence or ``max_iterations``; never raises on non-convergence."""
    if state is None:
        state = initial_state(problem)
    for _ in range(problem.config.max_iterations):
        state = scf_step(problem, state)
        log.debug(
            "iter %d  dDelta=%.3e  dN=%.3e  mu=(%.6f, %.6f)  Delta0=%.6f",
            state.iteration, state.residual_pairing, state.residual_numbers,
            state.mu_up, state.mu_down, state.pairing.values[0],
        )
        if callback is not None:
            callback(state)
        if state.converged:
            break
    return state


def coupling_field(problem: Problem, state: ScfState) -> RadialField:
    return _coupling(problem, state.mu_up, state.mu_down)[1]


# --------------------------------------------------------------------------
# FFLO detection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FFLOResult:
    classification: str  # none | edge_oscillation | bulk_oscillation | core_oscillation
    node_radii: tuple[float, ...]

    @property
    def has_oscillation(self) -> bool:
        return self.classification != "none"


def detect_fflo(pairing, r, thomas_fermi_radius: float, delta_floor: float) -> FFLOResult:
    """Locate sign changes of Delta(r) inside 1.2 R_TF and classify them.

    Points with |Delta| <= delta_floor are skipped, so noise around a vanishing
    tail is not counted. Node radii are linear interpolations between the
    two significant samples bracketing each sign change.
    """
    d = np.asarray(pairing, dtype=float)
    r = np.asarray(r, dtype=float)
    keep = (r < 1.2 * thomas_fermi_radius) & (np.abs(d) > delta_floor)
    rs, ds = r[keep], d[keep]
    nodes = []
    for i in np.nonzero(np.sign(ds[1:]) != np.sign(ds[:-1]))[0]:
        r0, r1, d0, d1 = rs[i], rs[i + 1], ds[i], ds[i + 1]
        nodes.append(float(r0 - d0 * (r1 - r0) / (d1 - d0)))
    if not nodes:
        return FFLOResult("none", ())
    inner = nodes[0] / thomas_fermi_radius
    if inner < 0.2:
        kind = "core_oscillation"
    elif inner > 0.5:
        kind = "edge_oscillation"
    else:
        kind = "bulk_oscillation"
    return FFLOResult(kind, tuple(nodes))
