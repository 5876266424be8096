"""Named scenarios and their CSV outputs."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
from threadpoolctl import threadpool_limits

from .config import DerivedScales, SolverConfig, validate_config
from .fluctuations import FluctuationProfile, fluctuation_profile
from .scf import FFLOResult, JournalEntry, Problem, ScfState, coupling_field, detect_fflo, run_scf

log = logging.getLogger(__name__)

PROFILE_COLUMNS = (
    "r", "r_over_rtf", "delta", "delta_over_ef", "n_up", "n_down",
    "pairing_fluc", "f", "valid_mask",
)
JOURNAL_COLUMNS = (
    "iteration", "residual_pairing", "residual_numbers", "mu_up", "mu_down", "delta_at_origin",
)
SUMMARY_COLUMNS = (
    "point", "temperature_tf", "polarization", "n_up", "n_down", "converged", "iterations",
    "residual_pairing", "residual_numbers", "mu_up", "mu_down", "delta0_over_ef",
    "max_f", "core_mean_f", "verdict", "fflo", "node_radii_over_rtf",
)

_REFERENCE_BASE = {"n_total": 1e5, "interaction_U": -5.0, "cutoff_Ec": 180.0}

SCENARIOS: dict[str, tuple[dict[str, Any], tuple[tuple[float, float], ...]]] = {
    "fig1-balanced": (_REFERENCE_BASE, ((0.01, 0.0), (0.05, 0.0), (0.1, 0.0))),
    "fig1-imbalanced": (_REFERENCE_BASE, ((0.01, 0.5), (0.05, 0.5), (0.1, 0.5))),
    "fig2-core": (_REFERENCE_BASE, ((0.01, 0.895), (0.05, 0.874), (0.1, 0.841))),
    "custom": ({}, ()),
}


@dataclass
class ScenarioResult:
    config: SolverConfig
    scales: DerivedScales
    state: ScfState
    fluctuations: FluctuationProfile
    fflo: FFLOResult
    profiles: np.ndarray  # (grid, len(PROFILE_COLUMNS))
    wall_time: float = 0.0
    name: str = ""

    @property
    def journal(self) -> list[JournalEntry]:
        return self.state.journal

    @property
    def converged(self) -> bool:
        return self.state.converged

    def column(self, name: str) -> np.ndarray:
        return self.profiles[:, PROFILE_COLUMNS.index(name)]

    @property
    def max_f(self) -> float:
        f = self.fluctuations.relative_f.values
        return float(np.nanmax(f)) if np.any(np.isfinite(f)) else math.nan

    @property
    def verdict(self) -> str:
        # fluctuations are a lower bound: f >= 1 is conclusive, f < 1 is not
        mf = self.max_f
        if math.isnan(mf):
            return "no_pairing"
        return "breakdown" if mf >= 1.0 else "valid_conditional"


def gauge_fixed(delta: np.ndarray) -> np.ndarray:
    """Flip the global sign so the innermost significant value is non-negative."""
    nz = np.flatnonzero(delta)
    if nz.size and delta[nz[0]] < 0:
        return -delta
    return delta


def run_point(config: SolverConfig, name: str = "") -> ScenarioResult:
    """Solve one (T, P) point and evaluate the fluctuation diagnostics."""
    t0 = time.perf_counter()
    # one BLAS thread so results do not depend on the worker count
    with threadpool_limits(limits=1, user_api="blas"):
        problem = Problem.from_config(config)
        state = run_scf(problem)
        coupling = coupling_field(problem, state)
        fluc = fluctuation_profile(
            state.spectra, problem.basis, coupling, state.pairing, problem.temperature,
            config.delta_floor, problem.scales.thomas_fermi_radius,
            prefactor=config.fluc_prefactor, threads=config.threads,
        )
    sc = problem.scales
    delta = gauge_fixed(state.pairing.values)
    fflo = detect_fflo(delta, problem.r, sc.thomas_fermi_radius, config.delta_floor)
    profiles = np.column_stack([
        problem.r,
        problem.r / sc.thomas_fermi_radius,
        delta,
        delta / sc.fermi_energy,
        state.n_up.values,
        state.n_down.values,
        fluc.pairing_fluc.values,
        fluc.relative_f.values,
        fluc.valid_mask.astype(float),
    ])
    wall = time.perf_counter() - t0
    log.info("%s: converged=%s after %d iterations in %.1f s", name or "point",
             state.converged, state.iteration, wall)
    return ScenarioResult(config, sc, state, fluc, fflo, profiles, wall, name)


def scenario_configs(name: str, overrides: Mapping[str, Any] | None = None) -> list[tuple[str, SolverConfig]]:
    """Resolve a scenario into labelled configs.

    ``overrides`` replace the scenario's base parameters and the per-point
    temperature or polarization. Points that become identical are merged, so
    overriding the temperature of a fixed-polarization sweep leaves one point.
    """
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    base, points = SCENARIOS[name]
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    out = []
    if name == "custom":
        cfg = validate_config(overrides)
        out.append((_label(name, cfg), cfg))
        return out
    for t, p in points:
        raw = dict(base)
        raw.update({"temperature": t, "temperature_unit": "tf", "polarization": p})
        if "n_up" in overrides or "n_down" in overrides:
            raw.pop("n_total", None)
            raw.pop("polarization", None)
        if "temperature" in overrides:
            raw.pop("temperature_unit", None)
        raw.update(overrides)
        cfg = validate_config(raw)
        label = _label(name, cfg)
        if label not in {lbl for lbl, _ in out}:
            out.append((label, cfg))
    return out


def _label(name: str, cfg: SolverConfig) -> str:
    p = (cfg.n_up - cfg.n_down) / cfg.n_total
    return f"{name}_T{cfg.temperature:.4g}_P{p:.4g}"


def _fmt(x: float) -> str:
    return repr(float(x)) if not math.isfinite(x) else f"{x:.17e}"


def _config_header(cfg: SolverConfig) -> list[str]:
    # the worker count is an execution detail; leaving it out keeps outputs byte-identical
    lines = [f"# {k} = {v!r}" for k, v in cfg.as_dict().items() if k != "threads"]
    lines.append("# n_up = round(N (1 + P) / 2) when a polarization is given")
    return lines


def emit_profiles(result: ScenarioResult, path: str | Path) -> Path:
    """Write the radial profile table with the resolved config as comments."""
    path = Path(path)
    sc = result.scales
    head = _config_header(result.config) + [
        f"# fermi_energy = {sc.fermi_energy!r}",
        f"# thomas_fermi_radius = {sc.thomas_fermi_radius!r}",
        f"# converged = {result.converged}",
        "# f and valid_mask are defined only where |delta| > delta_floor;",
        "# pairing_fluc is a lower bound, so valid_mask = 1 is a conditional verdict",
    ]
    try:
        with path.open("w", newline="") as fh:
            fh.write("\n".join(head) + "\n")
            fh.write(",".join(PROFILE_COLUMNS) + "\n")
            for row in result.profiles:
                fh.write(",".join(_fmt(x) for x in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write profiles to {path}: {exc}") from exc
    return path


def read_profiles(path: str | Path) -> np.ndarray:
    rows = []
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    header = lines[0].strip().split(",")
    if tuple(header) != PROFILE_COLUMNS:
        raise ValueError(f"unexpected columns in {path}: {header}")
    for ln in lines[1:]:
        rows.append([float(x) for x in ln.strip().split(",")])
    return np.array(rows, dtype=float).reshape(-1, len(PROFILE_COLUMNS))


def emit_journal(result: ScenarioResult, path: str | Path) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write("\n".join(_config_header(result.config)) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(JOURNAL_COLUMNS)
            for e in result.journal:
                w.writerow([e.iteration] + [_fmt(x) for x in (
                    e.residual_pairing, e.residual_numbers, e.mu_up, e.mu_down, e.delta_at_origin)])
    except OSError as exc:
        raise OSError(f"cannot write journal to {path}: {exc}") from exc
    return path


def summary_row(label: str, res: ScenarioResult) -> list[str]:
    cfg, st = res.config, res.state
    d0 = res.column("delta")[0] if len(res.profiles) else math.nan
    return [
        label,
        _fmt(cfg.temperature),
        _fmt((cfg.n_up - cfg.n_down) / cfg.n_total),
        _fmt(cfg.n_up),
        _fmt(cfg.n_down),
        str(st.converged),
        str(st.iteration),
        _fmt(st.residual_pairing),
        _fmt(st.residual_numbers),
        _fmt(st.mu_up),
        _fmt(st.mu_down),
        _fmt(d0 / res.scales.fermi_energy),
        _fmt(res.max_f),
        _fmt(res.fluctuations.core_average),
        res.verdict,
        res.fflo.classification,
        " ".join(f"{x / res.scales.thomas_fermi_radius:.6f}" for x in res.fflo.node_radii),
    ]


def emit_summary(rows: Iterable[list[str]], path: str | Path, scenario: str) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(f"# scenario = {scenario}\n")
            fh.write("# verdict: breakdown means max f >= 1 (conclusive); valid_conditional\n")
            fh.write("# means f < 1 everywhere, conditional because fluctuations are a lower bound\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_COLUMNS)
            for row in rows:
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write summary to {path}: {exc}") from exc
    return path


@dataclass
class ScenarioRun:
    name: str
    results: dict[str, ScenarioResult] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)

    @property
    def all_converged(self) -> bool:
        return not self.failures and all(r.converged for r in self.results.values())


def run_scenario(
    name: str,
    overrides: Mapping[str, Any] | None = None,
    out_dir: str | Path | None = None,
) -> ScenarioRun:
    """Run every (T, P) point of a scenario; write CSVs when ``out_dir`` is given.

    Points are solved one after another. A failing point is recorded and the
    remaining points still run, so partial outputs are always written.
    """
    configs = scenario_configs(name, overrides)
    run = ScenarioRun(name)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    for label, cfg in configs:
        try:
            res = run_point(cfg, label)
        except (RuntimeError, ValueError) as exc:
            log.error("%s failed: %s", label, exc)
            run.failures[label] = str(exc)
            rows.append([label] + [""] * (len(SUMMARY_COLUMNS) - 3) + ["error", str(exc)])
            continue
        run.results[label] = res
        rows.append(summary_row(label, res))
        if out is not None:
            emit_profiles(res, out / f"{label}.csv")
            emit_journal(res, out / f"{label}_journal.csv")
    if out is not None:
        emit_summary(rows, out / f"{name}_summary.csv", name)
    return run
