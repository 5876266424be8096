"""Solve trapped-gas BdG scenarios and write radial profiles as CSV.

    bdgtrap --scenario fig1-balanced --out-dir out/
    bdgtrap --scenario custom --n-total 2000 --polarization 0.5 --temperature 0.05tf

Exit status is 0 when every requested point converged, 2 otherwise, and 1
for an invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, read_config_file
from .runner import SCENARIOS, run_scenario

log = logging.getLogger("bdgtrap")

# flag -> config key
_FLAGS = {
    "n_up": "n_up",
    "n_down": "n_down",
    "n_total": "n_total",
    "polarization": "polarization",
    "temperature": "temperature",
    "interaction": "interaction_U",
    "cutoff": "cutoff_Ec",
    "grid_points": "grid_points",
    "r_max": "r_max",
    "mixing": "mixing_theta",
    "tol": "scf_tolerance",
    "max_iter": "max_iterations",
    "hartree": "include_hartree",
    "delta_floor": "delta_floor",
    "fluc_prefactor": "fluc_prefactor",
    "threads": "threads",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bdgtrap", description=__doc__.split("\n")[0])
    p.add_argument("--scenario", default="custom", choices=sorted(SCENARIOS))
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--n-up", type=float)
    p.add_argument("--n-down", type=float)
    p.add_argument("--n-total", type=float, help="total N, used with --polarization")
    p.add_argument("--polarization", type=float, help="P = (N_up - N_down)/N, alternative to --n-down")
    p.add_argument("--temperature", help="with unit suffix: 0.05tf (T_F units) or 0.7ho (hbar omega/k_B)")
    p.add_argument("--interaction", type=float, help="bare coupling U in trap units")
    p.add_argument("--cutoff", type=float, help="energy cutoff E_c in hbar omega")
    p.add_argument("--grid-points", type=int)
    p.add_argument("--r-max", type=float)
    p.add_argument("--mixing", type=float, help="linear mixing weight theta in (0, 1]")
    p.add_argument("--tol", type=float, help="SCF relative-change tolerance")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--hartree", action="store_true", default=None, help="include Hartree terms")
    p.add_argument("--delta-floor", type=float)
    p.add_argument("--fluc-prefactor", type=float)
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir", default="bdg_out")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def overrides_from_args(args: argparse.Namespace) -> dict:
    raw: dict = {}
    if args.config:
        raw.update(read_config_file(args.config))
    for flag, key in _FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            raw[key] = val
    return raw


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        run = run_scenario(args.scenario, overrides_from_args(args), args.out_dir)
    except ConfigError as exc:
        print(f"bdgtrap: invalid configuration: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"bdgtrap: {exc}", file=sys.stderr)
        return 1
    for label, res in run.results.items():
        print(
            f"{label}: converged={res.converged} iterations={res.state.iteration} "
            f"delta0/E_F={res.column('delta')[0] / res.scales.fermi_energy:.6f} "
            f"max_f={res.max_f:.4g} fflo={res.fflo.classification} wall={res.wall_time:.1f}s"
        )
    for label, msg in run.failures.items():
        print(f"{label}: FAILED {msg}", file=sys.stderr)
    return 0 if run.all_converged else 2


if __name__ == "__main__":
    sys.exit(main())
