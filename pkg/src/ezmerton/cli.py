"""Scenario-driven command line: parse a JSON scenario, dispatch, emit CSV/JSON.

Subcommands
-----------
run       execute the scenario's experiment, write <name>_<id>.csv/.json plus a
          run manifest; identical (scenario, seed) produce byte-identical CSVs
list      print the experiment catalog (sorted; --json for machine use)
validate  check a scenario file against the schema and print its digest

Exit codes: 0 success, 2 parse/validation error, 3 numeric failure, 4 I/O
error.  Errors are emitted as one JSON object on stderr.

Scenario schema (version 1)::

    {
      "schema_version": 1,
      "id": "p1m1-candidate",
      "preferences": {"b": 1.0, "delta": 0.03, "R": 2.0, "S": 2.5},
      "market": {"r": 0.02, "mu": 0.07, "sigma": 0.2},
      "lattice": {"dt": 0.01, "n_steps": 500, "tail": "proportional"},
      "solver": {"epsilon": 0.0, "tol": 1e-8, "max_iter": 200},
      "experiment": {"name": "candidate_policy", "params": {}},
      "seed": 42
    }

lattice and solver are optional (defaults above); CSV numbers are written with
17 significant digits and '.' decimal separator.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, closed_form, experiments, solver
from .errors import EzmertonError, ValidationError
from .lattice import AdaptedGrid, TailClosure, build_lattice, consumption_grid, mc_drift_check
from .preferences import Market, Preferences, transformed_consumption
from .experiments import EXPERIMENTS, ExperimentInfo

__all__ = ["Scenario", "RunManifest", "parse_scenario", "canonical_dict",
           "scenario_digest", "run_scenario", "catalog", "main"]

_SCHEMA_VERSION = 1
_LATTICE_DEFAULTS = {"dt": 0.01, "n_steps": 500, "tail": "proportional"}
_SOLVER_DEFAULTS = {"epsilon": 0.0, "tol": 1e-8, "max_iter": 200}

#: Driver entries runnable in addition to the experiment registry.
_DRIVERS: dict[str, ExperimentInfo] = {
    info.name: info
    for info in [
        ExperimentInfo("candidate_policy",
                       "closed-form candidate policy (pi_hat, eta) and value",
                       ()),
        ExperimentInfo("picard_solve",
                       "lattice fixed-point solve of the utility recursion for a proportional strategy",
                       ("pi", "xi")),
        ExperimentInfo("mc_drift_check",
                       "Monte Carlo check of the decay rate of e^{-nu t} X_t^{1-R}",
                       ("nu", "n_paths", "horizon")),
    ]
}


@dataclass(frozen=True)
class Scenario:
    id: str
    preferences: Preferences
    market: Market
    lattice_cfg: dict
    solver_cfg: dict
    experiment: str
    params: dict
    seed: int


@dataclass(frozen=True)
class RunManifest:
    scenario_id: str
    artifact_version: str
    input_hash: str
    outputs: list[str]
    wall_clock_seconds: float

    def to_json_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "artifact_version": self.artifact_version,
            "input_hash": self.input_hash,
            "outputs": self.outputs,
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def _require(cond: bool, message: str, field: str) -> None:
    if not cond:
        raise ValidationError(f"{field}: {message}", field=field)


def _num(raw: dict, field_prefix: str, key: str, lo=None, hi=None,
         integer: bool = False):
    field = f"{field_prefix}.{key}"
    _require(key in raw, "missing required field", field)
    val = raw[key]
    _require(isinstance(val, (int, float)) and not isinstance(val, bool),
             "must be a number", field)
    if integer:
        _require(float(val).is_integer(), "must be an integer", field)
        val = int(val)
    else:
        val = float(val)
    if lo is not None:
        _require(val >= lo, f"must be >= {lo}", field)
    if hi is not None:
        _require(val <= hi, f"must be <= {hi}", field)
    return val


def parse_scenario(raw: dict) -> Scenario:
    """Validate a raw scenario dict and build the typed Scenario.

    Raises ValidationError naming the offending field.
    """
    _require(isinstance(raw, dict), "scenario must be a JSON object", "$")
    version = raw.get("schema_version", _SCHEMA_VERSION)
    _require(version == _SCHEMA_VERSION,
             f"unsupported schema_version {version}", "schema_version")
    _require(isinstance(raw.get("id"), str) and raw["id"] != "",
             "must be a non-empty string", "id")
    _require(all(ch.isalnum() or ch in "-_." for ch in raw["id"]),
             "may contain only alphanumerics, '-', '_', '.'", "id")

    prefs_raw = raw.get("preferences")
    _require(isinstance(prefs_raw, dict), "missing preferences object", "preferences")
    b = _num(prefs_raw, "preferences", "b")
    delta = _num(prefs_raw, "preferences", "delta")
    R = _num(prefs_raw, "preferences", "R")
    S = _num(prefs_raw, "preferences", "S")
    _require(b > 0.0, "must be > 0", "preferences.b")
    _require(R > 0.0 and R != 1.0, "must be positive and != 1", "preferences.R")
    _require(S > 0.0 and S != 1.0, "must be positive and != 1", "preferences.S")

    market_raw = raw.get("market")
    _require(isinstance(market_raw, dict), "missing market object", "market")
    r = _num(market_raw, "market", "r")
    mu = _num(market_raw, "market", "mu")
    sigma = _num(market_raw, "market", "sigma")
    _require(sigma > 0.0, "must be > 0", "market.sigma")

    lat_raw = {**_LATTICE_DEFAULTS, **raw.get("lattice", {})}
    dt = _num(lat_raw, "lattice", "dt")
    _require(dt > 0.0, "must be > 0", "lattice.dt")
    n_steps = _num(lat_raw, "lattice", "n_steps", lo=0, integer=True)
    tail = lat_raw.get("tail", "proportional")
    _require(tail in ("proportional", "zero"),
             "must be 'proportional' or 'zero'", "lattice.tail")

    sol_raw = {**_SOLVER_DEFAULTS, **raw.get("solver", {})}
    epsilon = _num(sol_raw, "solver", "epsilon", lo=0.0)
    tol = _num(sol_raw, "solver", "tol")
    _require(tol > 0.0, "must be > 0", "solver.tol")
    max_iter = _num(sol_raw, "solver", "max_iter", lo=1, integer=True)

    exp_raw = raw.get("experiment")
    _require(isinstance(exp_raw, dict), "missing experiment object", "experiment")
    name = exp_raw.get("name")
    known = set(EXPERIMENTS) | set(_DRIVERS)
    _require(isinstance(name, str) and name in known,
             f"unknown experiment; known: {sorted(known)}", "experiment.name")
    params = exp_raw.get("params", {})
    _require(isinstance(params, dict), "params must be an object", "experiment.params")

    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool),
             "must be an integer", "seed")

    return Scenario(
        id=raw["id"],
        preferences=Preferences(b=b, delta=delta, R=R, S=S),
        market=Market(r=r, mu=mu, sigma=sigma),
        lattice_cfg={"dt": dt, "n_steps": n_steps, "tail": tail},
        solver_cfg={"epsilon": epsilon, "tol": tol, "max_iter": max_iter},
        experiment=name,
        params=params,
        seed=seed,
    )


def canonical_dict(scn: Scenario) -> dict:
    """Canonical plain-dict form: defaults materialised, stable key set."""
    return {
        "schema_version": _SCHEMA_VERSION,
        "id": scn.id,
        "preferences": {"b": scn.preferences.b, "delta": scn.preferences.delta,
                        "R": scn.preferences.R, "S": scn.preferences.S},
        "market": {"r": scn.market.r, "mu": scn.market.mu,
                   "sigma": scn.market.sigma},
        "lattice": dict(scn.lattice_cfg),
        "solver": dict(scn.solver_cfg),
        "experiment": {"name": scn.experiment, "params": scn.params},
        "seed": scn.seed,
    }


def scenario_digest(scn: Scenario) -> str:
    """Stable sha256 digest of the canonicalised scenario."""
    payload = json.dumps(canonical_dict(scn), sort_keys=True,
                         separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def _grid_from_spec(spec, field: str) -> np.ndarray:
    if isinstance(spec, list):
        arr = np.asarray(spec, dtype=float)
    elif isinstance(spec, dict):
        try:
            arr = np.arange(spec["start"], spec["stop"], spec["step"])
        except KeyError as exc:
            raise ValidationError(f"{field}: grid object needs start/stop/step",
                                  field=field) from exc
    else:
        raise ValidationError(f"{field}: must be a list or start/stop/step object",
                              field=field)
    if arr.size == 0:
        raise ValidationError(f"{field}: empty grid", field=field)
    return arr


def _candidate_strategy(scn: Scenario):
    policy = closed_form.candidate_policy(scn.preferences, scn.market)
    pi = scn.params.get("pi", policy.pi_hat)
    xi = scn.params.get("xi", policy.eta)
    return closed_form.ProportionalStrategy(pi=float(pi), xi=float(xi))


def _dispatch(scn: Scenario):
    """Run the named experiment; returns (rows, summary)."""
    prefs, market = scn.preferences, scn.market
    name, params = scn.experiment, scn.params
    if name == "candidate_policy":
        policy = closed_form.candidate_policy(prefs, market)
        row = {
            "pi_hat": policy.pi_hat,
            "eta": policy.eta,
            "phi": policy.phi,
            "value_coefficient": policy.value_coefficient,
            "value_at_unit_wealth": policy.value(1.0),
        }
        return [row], row
    if name == "picard_solve":
        strat = _candidate_strategy(scn)
        lat = build_lattice(market, strat, scn.lattice_cfg["dt"],
                            scn.lattice_cfg["n_steps"])
        if scn.lattice_cfg["tail"] == "proportional":
            tail = TailClosure.proportional(strat, prefs, market)
        else:
            tail = TailClosure.zero()
        c_grid = consumption_grid(lat)
        u_grid = AdaptedGrid([
            np.asarray(transformed_consumption(prefs, k * lat.dt, c), dtype=float)
            for k, c in enumerate(c_grid.values)
        ])
        report = solver.picard_solve(
            prefs, u_grid, lat, tail,
            epsilon=scn.solver_cfg["epsilon"],
            Lambda=u_grid if scn.solver_cfg["epsilon"] > 0 else None,
            tol=scn.solver_cfg["tol"], max_iter=scn.solver_cfg["max_iter"],
        )
        rows = [
            {"iteration": it, "sup_norm_step": step, "ratio": ratio}
            for it, step, ratio in report.trace
        ]
        summary = report.to_json_dict()
        summary["utility_at_zero"] = report.utility_at_zero(prefs)
        try:
            summary["closed_form_value"] = closed_form.proportional_utility(
                prefs, market, strat, lat.x0, 0.0)
        except EzmertonError:
            summary["closed_form_value"] = None
        return rows, summary
    if name == "mc_drift_check":
        strat = _candidate_strategy(scn)
        nu = float(params.get("nu", prefs.delta * prefs.theta))
        report = mc_drift_check(
            market, strat, nu, prefs.R,
            n_paths=int(params.get("n_paths", 100_000)),
            horizon=float(params.get("horizon", 5.0)),
            seed=scn.seed,
        )
        rows = [{"t": t, "log_mean": lm}
                for t, lm in zip(report.times, report.log_means)]
        summary = {"slope": report.slope, "stderr": report.stderr,
                   "n_paths": report.n_paths,
                   "target": -closed_form.decay_rate(nu, prefs, market, strat)}
        return rows, summary
    if name == "crra_counterexample":
        T_grid = params.get("T_grid", list(range(10, 101, 10)))
        rep = experiments.crra_counterexample(prefs.delta, prefs.R, T_grid)
        return rep.rows(), rep.summary()
    if name == "ezsdu_counterexample":
        T_grid = params.get("T_grid", list(range(10, 101, 10)))
        rep = experiments.ezsdu_counterexample(prefs, T_grid)
        return rep.rows(), rep.summary()
    if name == "transversality_sweep":
        nu = float(params.get("nu", prefs.delta))
        xi_grid = _grid_from_spec(
            params.get("xi_grid", {"start": 0.005, "stop": 0.2, "step": 0.005}),
            "experiment.params.xi_grid",
        )
        cells = experiments.transversality_sweep(prefs.delta, prefs.R, market,
                                                 nu, xi_grid)
        rows = [c.as_row() for c in cells]
        summary = {
            "n_cells": len(cells),
            "n_bubbles": sum(1 for c in cells if c.bubble.is_bubble),
            "n_transversal": sum(1 for c in cells if c.transversality_ok),
            "n_evaluable": sum(1 for c in cells if c.evaluable),
        }
        return rows, summary
    if name == "policy_grid_search":
        pi_grid = _grid_from_spec(
            params.get("pi_grid", {"start": 0.0, "stop": 1.5, "step": 0.005}),
            "experiment.params.pi_grid",
        )
        xi_grid = _grid_from_spec(
            params.get("xi_grid", {"start": 0.005, "stop": 0.2, "step": 0.005}),
            "experiment.params.xi_grid",
        )
        rep = experiments.policy_grid_search(prefs, market, pi_grid, xi_grid)
        return list(rep.rows()), rep.summary()
    if name == "aversion_demos":
        rep = experiments.aversion_demos(
            prefs, market,
            y_values=tuple(params.get("y_values", (0.5, 1.5))),
            temporal_levels=tuple(params.get("temporal_levels", (0.5, 1.5))),
            temporal_switch_time=float(params.get("temporal_switch_time", 1.0)),
        )
        return rep.rows(), rep.summary()
    if name == "wellposed_divergence":
        rep = experiments.wellposed_divergence(
            prefs, market,
            probe_offsets=params.get("probe_offsets"),
            n_levels=int(params.get("n_levels", 13)),
        )
        return rep.rows(), rep.summary()
    if name == "verification_check":
        rep = experiments.verification_check(
            prefs, market,
            epsilon=float(params.get("epsilon", 0.1)),
            n_strategies=int(params.get("n_strategies", 5)),
            seed=scn.seed,
            n_samples=int(params.get("n_samples", 10_000)),
            dt=scn.lattice_cfg["dt"],
            n_steps=min(scn.lattice_cfg["n_steps"], 200),
        )
        return rep.rows(), rep.summary()
    raise ValidationError(f"experiment.name: unknown experiment {name!r}",
                          field="experiment.name")


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            fh.write("")
            return
        writer = csv.writer(fh)
        header = list(rows[0].keys())
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(row.get(k)) for k in header])


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)}")


def run_scenario(scn: Scenario, out_dir: Path, quiet: bool = False) -> RunManifest:
    """Execute a validated scenario and write its artifacts."""
    started = time.perf_counter()
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, summary = _dispatch(scn)
    base = f"{scn.experiment}_{scn.id}"
    csv_path = out_dir / f"{base}.csv"
    json_path = out_dir / f"{base}.json"
    _write_csv(csv_path, rows)
    with open(json_path, "w") as fh:
        json.dump({"scenario": canonical_dict(scn), "summary": summary},
                  fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    manifest = RunManifest(
        scenario_id=scn.id,
        artifact_version=__version__,
        input_hash=scenario_digest(scn),
        outputs=[csv_path.name, json_path.name],
        wall_clock_seconds=time.perf_counter() - started,
    )
    manifest_path = out_dir / f"manifest_{scn.id}.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not quiet:
        print(f"wrote {csv_path} {json_path} {manifest_path}")
    return manifest


def catalog() -> list[ExperimentInfo]:
    """Experiment catalog plus driver entries, sorted by name."""
    entries = list(EXPERIMENTS.values()) + list(_DRIVERS.values())
    return sorted(entries, key=lambda e: e.name)


def _error_json(code: str, exc: Exception) -> str:
    payload = {"error": {"code": code, "message": str(exc)}}
    if isinstance(exc, ValidationError) and exc.field:
        payload["error"]["field"] = exc.field
    return json.dumps(payload)


def _load_scenario(path: str, seed_override: int | None) -> Scenario:
    with open(path) as fh:
        raw = json.load(fh)
    if seed_override is not None:
        if not isinstance(raw, dict):
            raise ValidationError("$: scenario must be a JSON object", field="$")
        raw = {**raw, "seed": seed_override}
    return parse_scenario(raw)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ezmerton",
        description="Scenario runner for the recursive-utility laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file")
    p_run.add_argument("--scenario", required=True, help="path to scenario JSON")
    p_run.add_argument("--out-dir", default=".", help="output directory")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    p_run.add_argument("--quiet", action="store_true")

    p_list = sub.add_parser("list", help="list runnable experiments")
    p_list.add_argument("--json", action="store_true", dest="as_json")

    p_val = sub.add_parser("validate", help="validate a scenario file")
    p_val.add_argument("--scenario", required=True)

    args = parser.parse_args(argv)

    if args.command == "list":
        entries = catalog()
        if args.as_json:
            print(json.dumps(
                [{"name": e.name, "description": e.description,
                  "parameters": list(e.parameters)} for e in entries],
                indent=2))
        else:
            for e in entries:
                print(f"{e.name}: {e.description}")
        return 0

    try:
        scn = _load_scenario(args.scenario,
                             getattr(args, "seed", None))
    except (json.JSONDecodeError, ValidationError, KeyError) as exc:
        print(_error_json("validation", exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(_error_json("io", exc), file=sys.stderr)
        return 4

    if args.command == "validate":
        print(json.dumps({"ok": True, "id": scn.id,
                          "digest": scenario_digest(scn)}))
        return 0

    try:
        run_scenario(scn, Path(args.out_dir), quiet=args.quiet)
    except ValidationError as exc:
        print(_error_json("validation", exc), file=sys.stderr)
        return 2
    except EzmertonError as exc:
        print(_error_json("numeric", exc), file=sys.stderr)
        return 3
    except OSError as exc:
        print(_error_json("io", exc), file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
