"""Command-line front end: ``run <config>``, ``verify <mechanism.csv> <space.csv>``, ``selftest``.

Exit codes: 0 success, 1 input error, 2 a feasibility gate failed.

Config files are flat ``key = value`` lines; dotted keys group settings
(``F.family = power``) and ``#`` starts a comment.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import acceptance, dist, efficiency, partnership, procurement, resale
from .game import verify_by_delegation
from .mech import CSV_FMT, read_mechanism_csv, read_utility_csv, delegated_implementable
from .report import DEFAULT_TOL, FeasibilityReport, _jsonable

EXIT_OK, EXIT_INPUT, EXIT_GATE = 0, 1, 2
KINDS = ("procurement", "resale", "efficiency", "partnership", "verify")


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


# --- config ---------------------------------------------------------------------


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


@dataclass
class Scenario:
    kind: str
    params: dict[str, str]
    base: Path = Path(".")
    used: set[str] = field(default_factory=set)

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        params = parse_config(text)
        if not params:
            raise ConfigError(f"{path}: config is empty")
        kind = params.get("kind")
        if kind is None:
            raise ConfigError("missing key 'kind'")
        if kind not in KINDS:
            raise ConfigError(f"key 'kind': expected one of {', '.join(KINDS)}, got {kind!r}")
        sc = cls(kind, params, path.parent)
        sc.used.add("kind")
        return sc

    def get(self, key: str, default: Any = None, cast: Callable = str) -> Any:
        self.used.add(key)
        if key not in self.params:
            if default is None:
                raise ConfigError(f"missing key {key!r}")
            return default
        try:
            return cast(self.params[key])
        except (TypeError, ValueError):
            raise ConfigError(f"key {key!r}: cannot read {self.params[key]!r} as {cast.__name__}") from None

    def get_int_override(self, key: str, default: int, override: int | None) -> int:
        """Read ``key`` (so it still counts as known), then let a command-line value win."""
        value = self.get(key, default, int)
        return value if override is None else override

    def path(self, key: str) -> Path:
        p = Path(self.get(key))
        p = p if p.is_absolute() else self.base / p
        if not p.exists():
            raise ConfigError(f"key {key!r}: file {p} does not exist")
        return p

    def distribution(self, prefix: str, resolution: int) -> dist.TypeDistribution:
        family = self.get(f"{prefix}.family", "uniform")
        try:
            if family == "uniform":
                return dist.uniform(grid_resolution=resolution)
            if family == "power":
                return dist.power(self.get(f"{prefix}.k", cast=float), grid_resolution=resolution)
            if family in ("exponential", "truncated_exponential"):
                return dist.truncated_exponential(self.get(f"{prefix}.lam", cast=float), grid_resolution=resolution)
            if family == "tabulated":
                return dist.from_csv(self.path(f"{prefix}.csv"), grid_resolution=resolution)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"key {prefix!r}: {exc}") from None
        raise ConfigError(f"key '{prefix}.family': unknown family {family!r}")

    def check_unused(self) -> None:
        extra = sorted(set(self.params) - self.used - {"out"})
        if extra:
            raise ConfigError(f"unknown key {extra[0]!r}")


# --- output helpers ------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([CSV_FMT.format(x) if isinstance(x, (float, np.floating)) else x for x in row])


def _write_outputs(out: Path, summary: dict, reports: dict[str, FeasibilityReport]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    summary = {**summary, "reports": {k: r.to_dict() for k, r in reports.items()}}
    (out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    text = "\n".join(r.summary() for r in reports.values()) + "\n"
    (out / "report.txt").write_text(text)
    print(text, end="")


# --- scenario kinds ---------------------------------------------------------------------


def _run_procurement(sc: Scenario, grid: int | None, tol: float, out: Path) -> bool:
    res = sc.get("numerics.grid_resolution", 2001, int)
    cost_name = sc.get("cost.name", "quadratic")
    if cost_name == "quadratic":
        cost = procurement.quadratic_cost(sc.get("cost.scale", 1.0, float))
    elif cost_name == "power":
        cost = procurement.power_cost(sc.get("cost.p", cast=float))
    else:
        raise ConfigError(f"key 'cost.name': unknown cost {cost_name!r}")
    try:
        env = procurement.ProcurementEnv(
            sc.distribution("F", res),
            sc.distribution("G", res),
            sc.get("alpha", 1.0, float),
            cost,
            sc.get("q_max", 1.0, float),
            b_grid_size=sc.get_int_override("numerics.b_grid", 101, grid),
            s_grid_size=sc.get("numerics.s_grid", 201, int),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sc.check_unused()
    iv = procurement.optimal_cutoff(env)
    sim = procurement.simulate_frontier(env, iv, tol)
    b = iv.b_grid
    Q = procurement.expected_quantity(env, b)
    U = procurement.delegate_value(env, b)
    J = procurement.pooling_integrand(env, b)
    out.mkdir(parents=True, exist_ok=True)
    chosen = sim.equilibrium.delegate_choice  # menu index, -1 = opt out
    _write_csv(
        out / "procurement.csv",
        ["b", "Q", "U", "J", "chosen_menu"],
        [(float(b[i]), float(Q[i]), float(U[i]), float(J[i]), int(chosen[i])) for i in range(b.size)],
    )
    summary = {
        "kind": "procurement",
        "b_bar": iv.b_bar,
        "b_hat": iv.b_hat,
        "principal_value": iv.principal_value,
        "first_order_residual": iv.foc_residual,
        "menus": len(iv.contracts),
        "menu_b": [c.b for c in iv.contracts],
    }
    reports = {"frontier_separation": sim.report, "frontier_contracts": sim.contract_reports}
    _write_outputs(out, summary, reports)
    return all(r.passed for r in reports.values())


def _run_resale(sc: Scenario, grid: int | None, tol: float, out: Path) -> bool:
    res = sc.get("numerics.grid_resolution", 2001, int)
    try:
        env = resale.ResaleEnv(sc.distribution("G", res), sc.distribution("F", res))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    n = sc.get_int_override("numerics.sim_grid", 2001, grid)
    p_grid = sc.get("numerics.p_grid", resale.P_GRID, int)
    sc.check_unused()
    bb = resale.scheme_with_buyback(env, p_grid)
    nb = resale.scheme_no_buyback(env, p_grid)
    sim_bb, sim_nb = resale.simulate(env, bb, n), resale.simulate(env, nb, n)
    lf = resale.laissez_faire(env)
    out.mkdir(parents=True, exist_ok=True)
    for name, sim in (("with_buyback", sim_bb), ("no_buyback", sim_nb)):
        _write_csv(
            out / f"resale_{name}.csv",
            ["theta1", "price", "sale_probability", "intermediary_profit"],
            zip(sim.theta1.tolist(), sim.price.tolist(), sim.sale_probability.tolist(), sim.profit.tolist()),
        )
    participation = {
        name: FeasibilityReport.from_violations(
            f"participation_{name}", -sim.profit, tol, witness=lambda ix, s=sim: {"theta1": float(s.theta1[ix[0]])}
        )
        for name, sim in (("with_buyback", sim_bb), ("no_buyback", sim_nb))
    }
    summary = {
        "kind": "resale",
        "floor_price_buyback": bb.p_floor,
        "refund": bb.refund,
        "floor_price_no_buyback": nb.p_floor,
        "revenue_with_buyback": resale.revenue_with_buyback(env),
        "revenue_no_buyback": resale.revenue_no_buyback(env),
        "simulated_revenue_with_buyback": sim_bb.revenue,
        "simulated_revenue_no_buyback": sim_nb.revenue,
        "laissez_faire_price": lf.price,
        "laissez_faire_revenue": lf.revenue,
    }
    reports = {"revenue_bounds": resale.revenue_bounds(env, tol), **participation}
    _write_outputs(out, summary, reports)
    return all(r.passed for r in reports.values())


def _outside(sc: Scenario, prefix: str) -> Callable:
    kind = sc.get(f"{prefix}.kind", "zero")
    if kind == "zero":
        return efficiency._zero
    if kind == "linear":
        slope = sc.get(f"{prefix}.slope", cast=float)
        return lambda t: slope * np.asarray(t, dtype=float)
    if kind == "table":
        rows = np.loadtxt(sc.path(f"{prefix}.csv"), delimiter=",", skiprows=1, ndmin=2)
        return lambda t: np.interp(t, rows[:, 0], rows[:, 1])
    raise ConfigError(f"key '{prefix}.kind': unknown outside option {kind!r}")


def _run_efficiency(sc: Scenario, grid: int | None, tol: float, out: Path) -> bool:
    F = sc.distribution("F", sc.get("numerics.grid_resolution", 2001, int))
    n = sc.get_int_override("numerics.grid", 51, grid)
    name = sc.get("env", "rival_good")
    kw = {"outside1": _outside(sc, "outside1"), "outside2": _outside(sc, "outside2"), "grid_size": n}
    if name == "rival_good":
        env = efficiency.rival_good_env(F, **kw)
    elif name == "public_good":
        env = efficiency.public_good_env(F, sc.get("cost", 1.0, float), **kw)
    else:
        raise ConfigError(f"key 'env': unknown environment {name!r}")
    sc.check_unused()
    gate = efficiency.feasibility_gate(env, tol)
    prof = efficiency.surplus_profile(env)
    m = efficiency.efficient_transfers(prof)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, a in enumerate(prof.theta):
        for j, b in enumerate(prof.theta):
            rows.append((float(a), float(b), env.labels[prof.allocation[i, j]], float(m.t1[i, j]), float(m.t2[i, j])))
    _write_csv(out / "transfers.csv", ["theta1", "theta2", "allocation", "t1", "t2"], rows)
    b1, b2 = efficiency.outside_option_bounds(prof)
    _write_csv(
        out / "bounds.csv",
        ["theta", "S", "bound1", "bound2"],
        zip(prof.theta.tolist(), prof.S.tolist(), b1.tolist(), b2.tolist()),
    )
    summary = {"kind": "efficiency", "env": name, "S_bar": prof.S_bar, "grid": n}
    _write_outputs(out, summary, {"gate": gate})
    return gate.passed or gate.advisory


_VALUES = {"proportional": lambda sc: partnership.proportional, "control_premium": lambda sc: partnership.control_premium}


def _run_partnership(sc: Scenario, grid: int | None, tol: float, out: Path) -> bool:
    F = sc.distribution("F", sc.get("numerics.grid_resolution", 2001, int))
    value = sc.get("value", "proportional")
    if value == "power_premium":
        gamma = sc.get("value.gamma", cast=float)
        v = lambda q: np.power(np.maximum(2.0 * np.asarray(q, dtype=float) - 1.0, 0.0), gamma)  # noqa: E731
    elif value in _VALUES:
        v = _VALUES[value](sc)
    else:
        raise ConfigError(f"key 'value': unknown ownership value {value!r}")
    try:
        env = partnership.PartnershipEnv(F, sc.get("r1", cast=float), v, sc.get_int_override("numerics.grid", 101, grid))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scan_n = sc.get("numerics.r1_scan", 21, int)
    sc.check_unused()
    rec = partnership.whom_to_delegate(env, tol)
    sched = partnership.bid_ask(env)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "bid_ask.csv", ["lambda", "bid", "ask"], zip(sched.lam.tolist(), sched.bid.tolist(), sched.ask.tolist()))
    reports = dict(rec.reports)
    reports["impossibility_scan"] = partnership.impossibility_scan(F, np.linspace(0.0, 1.0, scan_n), tol)
    reports["impossibility_scan"].advisory = True  # informative: proportional value only
    summary = {
        "kind": "partnership",
        "r1": env.r1,
        "recommended_delegate": rec.delegate,
        "feasible_delegate_1": rec.feasible1,
        "feasible_delegate_2": rec.feasible2,
        "implication_holds": rec.implication_holds,
        "premises_met": not rec.advisory,
    }
    _write_outputs(out, summary, reports)
    return rec.delegate is not None


def _verify(mechanism: Path, utilities: Path, default: str, tol: float, out: Path | None) -> bool:
    try:
        U = read_utility_csv(utilities, default)
        m = read_mechanism_csv(mechanism, U)
        report = delegated_implementable(m, tol)
        _, match = verify_by_delegation(m, tol)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    reports = {"delegated_implementable": report, "canonical_rights": match}
    if out is None:
        print("\n".join(r.summary() for r in reports.values()))
    else:
        _write_outputs(out, {"kind": "verify", "mechanism": str(mechanism)}, reports)
    return report.passed


RUNNERS = {
    "procurement": _run_procurement,
    "resale": _run_resale,
    "efficiency": _run_efficiency,
    "partnership": _run_partnership,
}


def run(config: str | Path, grid: int | None = None, tol: float | None = None, out: str | Path | None = None) -> int:
    """Run one scenario file; returns the exit code."""
    sc = Scenario.load(config)
    tol = sc.get("numerics.tol", DEFAULT_TOL, float) if tol is None else tol
    out_dir = Path(out) if out else Path(sc.params.get("out", f"results/{sc.kind}"))
    if sc.kind == "verify":
        default = sc.get("default_outcome", "o")
        mech_path, util_path = sc.path("mechanism"), sc.path("utilities")
        sc.check_unused()
        return EXIT_OK if _verify(mech_path, util_path, default, tol, out_dir) else EXIT_GATE
    ok = RUNNERS[sc.kind](sc, grid, tol, out_dir)
    return EXIT_OK if ok else EXIT_GATE


def selftest(tol: float | None = None, seed: int = 0, full: bool = False) -> int:
    results = acceptance.run_all(tol=tol, reduced=not full, seed=seed)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_GATE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delegation", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", type=int, help="main grid size of the scenario")
    common.add_argument("--tol", type=float, help="constraint tolerance (default 1e-9)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized suites")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run a scenario config")
    p.add_argument("config")
    p = sub.add_parser("verify", parents=[common], help="check a mechanism CSV against a utility CSV")
    p.add_argument("mechanism")
    p.add_argument("space", help="utility table: player,theta,outcome_label,utility")
    p.add_argument("--default-outcome", default="o")
    p = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    p.add_argument("--full", action="store_true", help="full grids instead of reduced ones")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return run(args.config, args.grid, args.tol, args.out)
        if args.command == "verify":
            tol = DEFAULT_TOL if args.tol is None else args.tol
            out = Path(args.out) if args.out else None
            ok = _verify(Path(args.mechanism), Path(args.space), args.default_outcome, tol, out)
            return EXIT_OK if ok else EXIT_GATE
        return selftest(args.tol, args.seed, args.full)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
