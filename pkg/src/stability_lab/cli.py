"""Scenario-driven command-line front end.

A scenario file describes one world, one task, and the task's
parameters; the run writes a CSV table and a JSON report into the
output directory. Outputs are a pure function of (scenario, seed):
floats are rendered at 12 significant digits and JSON keys are sorted,
so identical inputs produce byte-identical files. Nothing is written
when validation or computation fails.

Exit codes: 0 success, 1 input error, 2 enumeration budget exceeded,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import sys
from pathlib import Path

import numpy as np

from .adaptivity import Analyst, verify_linear_composition
from .dists import FiniteDist
from .errors import (
    BudgetExceededError,
    ConfigurationError,
    DomainMismatchError,
    InvalidDistributionError,
    PreconditionError,
    StabilityLabError,
)
from .generalization import (
    ReconstructThenOverfitAnalyst,
    monitor_run,
    second_monitor_run,
)
from .mechanisms import (
    EmpiricalMeanMechanism,
    NoiseChannelMechanism,
    NoiseSpec,
    CompressionSpec,
    build_compression_mechanism,
    build_constant_mechanism,
    build_element_release,
    build_empirical_mean_kernel,
    build_noise_mechanism,
    build_parity_mechanism,
    build_randomized_response,
)
from .notions import (
    dp_certify,
    element_family,
    lmi_certify,
    lml_certify,
    mi_certify,
    ml_certify,
    run_separation,
    ts_certify,
    verify_implication,
)
from .queries import LinearQuery
from .stability import lss_certify
from .util import canonical, format_sig
from .worlds import (
    DEFAULT_TUPLE_BUDGET,
    Domain,
    World,
    explicit_prior,
    product_prior,
)


class ScenarioError(ValueError):
    """Scenario file is structurally invalid."""


def _pairs_to_dict(pairs, what: str) -> dict:
    try:
        return {(tuple(k) if isinstance(k, list) else k): v for k, v in pairs}
    except (TypeError, ValueError):
        raise ScenarioError(f"{what} must be a list of [key, value] pairs")


def _parse_query(doc: dict, domain: Domain) -> LinearQuery:
    values = _pairs_to_dict(doc["values"], "query values")
    missing = [x for x in domain.elements if x not in values]
    if missing:
        raise ScenarioError(f"query is missing values for elements {missing}")
    return LinearQuery(
        domain.elements,
        tuple(values[x] for x in domain.elements),
        float(doc["delta_bound"]),
        label=doc.get("label", ""),
    )


def _parse_mechanism(doc: dict, shell: World, budget: int):
    family = doc.get("family")
    if family == "constant":
        return build_constant_mechanism(doc["response"], doc.get("responses"))
    if family == "randomized_response":
        labels = _pairs_to_dict(doc["labels"], "labels") if "labels" in doc else None
        return build_randomized_response(
            shell.domain, shell.n, float(doc["flip"]), labels, budget
        )
    if family == "parity":
        labels = _pairs_to_dict(doc["labels"], "labels") if "labels" in doc else None
        return build_parity_mechanism(shell, labels)
    if family == "element_release":
        return build_element_release(shell)
    if family == "empirical_mean":
        return build_empirical_mean_kernel(_parse_query(doc["query"], shell.domain), shell, budget)
    if family in ("laplace", "gaussian"):
        spec = NoiseSpec(
            family=family,
            scale=float(doc["scale"]),
            grid_step=float(doc["grid_step"]),
            grid_halfwidth=float(doc["grid_halfwidth"]),
        )
        return build_noise_mechanism(_parse_query(doc["query"], shell.domain), spec, shell)
    if family == "compression_first_m":
        m = int(doc["m"])
        responses = tuple(itertools.product(shell.domain.elements, repeat=m))
        spec = CompressionSpec(
            m=m,
            selector=lambda s: tuple(range(m)),
            encoder=lambda sub: FiniteDist.point_mass(sub, responses),
            responses=responses,
        )
        return build_compression_mechanism(spec, shell)
    raise ScenarioError(f"unknown mechanism family {family!r}")


def parse_world(doc: dict, budget: int) -> World:
    domain = Domain(tuple(doc["domain"]))
    n = int(doc["n"])
    prior_doc = doc["prior"]
    weights = _pairs_to_dict(prior_doc["weights"], "prior weights")
    if prior_doc["type"] == "product":
        missing = [x for x in domain.elements if x not in weights]
        if missing:
            raise ScenarioError(f"product prior is missing elements {missing}")
        dist = FiniteDist(domain.elements, np.array([weights[x] for x in domain.elements]))
        prior = product_prior(dist, n)
    elif prior_doc["type"] == "explicit":
        outcomes = tuple(weights)
        dist = FiniteDist(outcomes, np.array([weights[s] for s in outcomes]))
        prior = explicit_prior(dist, n)
    else:
        raise ScenarioError(f"unknown prior type {prior_doc['type']!r}")
    shell = World(domain, n, prior, kernel=None)
    if "mechanism" not in doc:
        return shell
    kernel = _parse_mechanism(doc["mechanism"], shell, budget)
    return dataclasses.replace(shell, kernel=kernel)


def _csv_text(header: list, rows: list) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_sig(cell) for cell in row])
    return buffer.getvalue()


def _json_text(doc) -> str:
    return json.dumps(canonical(doc), sort_keys=True, indent=2) + "\n"


def _write_all(out_dir: Path, files: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, content in files.items():
        (out_dir / name).write_text(content)


def cmd_certify(scenario: dict, out_dir: Path, budget: int, grid: list | None) -> int:
    """Certification-style tasks: certify, implication, separation."""
    task = scenario["task"]
    files: dict[str, str] = {}

    if task == "certify":
        world = parse_world(scenario["world"], budget)
        params = scenario.get("parameters", {})
        notions = params.get("notions", ["lss"])
        eps_grid = grid if grid is not None else params.get("eps_grid", [0.0, 0.25, 0.5, 0.75, 1.0])
        ts_delta = float(params.get("ts_delta", 0.0))
        rows = []
        bundle = []
        elem_fam = element_family(world, budget) if {"lss", "lmi", "lml"} & set(notions) else None
        for notion in notions:
            if notion == "lss":
                for eps in eps_grid:
                    if eps > 1.0:
                        continue  # stability threshold is capped at 1
                    cert = lss_certify(elem_fam, float(eps))
                    rows.append(["lss", eps, cert.delta_star, len(cert.witness)])
                    bundle.append({"notion": "lss", **cert.to_json()})
            elif notion == "dp":
                for eps in eps_grid:
                    cert = dp_certify(world, float(eps), budget)
                    rows.append(["dp", eps, cert.delta_star, len(cert.witness)])
                    bundle.append(cert.to_json())
            elif notion == "mi":
                for eps in eps_grid:
                    cert = mi_certify(world, float(eps), budget=budget)
                    rows.append(["mi", eps, cert.delta_star, len(cert.witness)])
                    bundle.append(cert.to_json())
            elif notion == "lmi":
                for eps in eps_grid:
                    cert = lmi_certify(world, float(eps), elem_fam, budget=budget)
                    rows.append(["lmi", eps, cert.delta_star, len(cert.witness)])
                    bundle.append(cert.to_json())
            elif notion == "ts":
                for eps in eps_grid:
                    cert = ts_certify(world, float(eps), ts_delta, budget)
                    rows.append(["ts", eps, cert.eta_star, len(cert.witness)])
                    bundle.append(cert.to_json())
            elif notion == "ml":
                cert = ml_certify(world, budget)
                rows.append(["ml", "", cert.leakage, len(cert.witness)])
                bundle.append(cert.to_json())
            elif notion == "lml":
                cert = lml_certify(world, budget)
                rows.append(["lml", "", cert.leakage, len(cert.witness)])
                bundle.append(cert.to_json())
            else:
                raise ScenarioError(f"unknown notion {notion!r}")
        files["certificates.csv"] = _csv_text(["notion", "eps", "value", "witness_size"], rows)
        files["certificates.json"] = _json_text({"task": "certify", "certificates": bundle})

    elif task == "separation":
        sep = scenario["separation"]
        report = run_separation(sep["which"], sep["params"], budget)
        rows = [[key, value] for key, value in sorted(report.metrics.items())]
        rows += [[f"prong:{key}", value] for key, value in sorted(report.prongs.items())]
        files["separation.csv"] = _csv_text(["metric", "value"], rows)
        files["separation.json"] = _json_text(report.to_json())

    elif task == "implication":
        world = parse_world(scenario["world"], budget)
        rows = []
        reports = []
        for spec in scenario["implications"]:
            report = verify_implication(spec["theorem"], world, spec["params"], budget)
            rows.append(
                [
                    report.theorem,
                    report.premise_holds,
                    report.conclusion.delta_star,
                    report.conclusion_budget,
                    report.passed,
                ]
            )
            reports.append(report.to_json())
        files["implications.csv"] = _csv_text(
            ["theorem", "premise_holds", "conclusion_delta", "budget", "passed"], rows
        )
        files["implications.json"] = _json_text({"task": "implication", "reports": reports})

    else:
        raise ScenarioError(f"task {task!r} is not a certification task")

    _write_all(out_dir, files)
    return 0


def _parse_analyst(doc: dict):
    kind = doc.get("type")
    if kind == "reconstruct_overfit":
        return ReconstructThenOverfitAnalyst(
            domain=tuple(doc["domain"]),
            probes=tuple(doc["probes"]),
            delta_bound=float(doc["delta_bound"]),
            threshold=float(doc["threshold"]),
        )
    raise ScenarioError(f"unknown analyst type {kind!r}")


def _parse_query_mechanism(doc: dict):
    kind = doc.get("type")
    if kind == "empirical_mean":
        return EmpiricalMeanMechanism()
    if kind == "noise":
        spec = NoiseSpec(
            family=doc["family"],
            scale=float(doc["scale"]),
            grid_step=float(doc["grid_step"]),
            grid_halfwidth=float(doc["grid_halfwidth"]),
        )
        return NoiseChannelMechanism(spec, float(doc["delta_bound"]))
    raise ScenarioError(f"unknown query mechanism type {kind!r}")


def cmd_experiment(scenario: dict, out_dir: Path, seed: int | None, budget: int) -> int:
    """Seeded experiment tasks: monitor, compose."""
    task = scenario["task"]
    files: dict[str, str] = {}

    if task == "monitor":
        if seed is None:
            raise ScenarioError("monitor tasks require a seed")
        world = parse_world(scenario["world"], budget)
        params = scenario["monitor"]
        analyst = _parse_analyst(params["analyst"])
        mechanism = _parse_query_mechanism(params["mechanism"])
        t = int(params["t"])
        k = int(params["k"])
        reps = int(params.get("reps", 50))
        if params.get("which", "monitor") == "second":
            report = second_monitor_run(
                world,
                analyst,
                mechanism,
                t=t,
                seed=seed,
                k=k,
                delta_bound=float(params["delta_bound"]),
                reps=reps,
                budget=budget,
            )
            files["monitor_summary.json"] = _json_text(report.to_json())
            files["monitor_copies.csv"] = _csv_text(
                ["copy", "view_loss", "query", "response"],
                [list(row) for row in report.copy_rows],
            )
        else:
            report = monitor_run(
                world, analyst, mechanism, t=t, k=k, seed=seed, reps=reps, budget=budget
            )
            files["monitor_summary.json"] = _json_text(report.to_json())
            files["monitor_copies.csv"] = _csv_text(
                ["copy", "max_error", "query", "response"],
                [list(row) for row in report.copy_rows],
            )

    elif task == "compose":
        world = parse_world(scenario["world"], budget)
        params = scenario["compose"]
        shell = World(world.domain, world.n, world.prior, kernel=None)
        rounds = []
        for round_doc in params["rounds"]:
            rounds.append(
                {qid: _parse_mechanism(mech_doc, shell, budget) for qid, mech_doc in round_doc.items()}
            )
        analyst_doc = params["analyst"]
        table = {}
        for coin, responses, qid in analyst_doc["table"]:
            table[(coin, tuple(responses))] = qid
        coin_pairs = analyst_doc.get("coins", [[0, 1.0]])
        coin_dist = FiniteDist(
            tuple(c for c, _ in coin_pairs), np.array([p for _, p in coin_pairs])
        )
        analyst = Analyst.from_table(table, coin_dist, default=analyst_doc.get("default"))
        eps_list = [float(e) for e in params["eps_list"]]
        report = verify_linear_composition(world, analyst, rounds, eps_list, budget)
        rows = [
            [i + 1, eps, delta]
            for i, (eps, delta) in enumerate(zip(report.eps_list, report.per_round_delta))
        ]
        rows.append(["total", report.eps_total, report.delta_total])
        rows.append(["measured", report.eps_total, report.whole_run_delta_star])
        files["compose.csv"] = _csv_text(["round", "eps", "delta"], rows)
        files["compose.json"] = _json_text(report.to_json())

    else:
        raise ScenarioError(f"task {task!r} is not an experiment task")

    _write_all(out_dir, files)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="stability-lab",
        description="Certify stability notions and run monitor experiments on finite worlds.",
    )
    parser.add_argument("--scenario", required=True, help="path to the scenario JSON file")
    parser.add_argument("--out", required=True, help="output directory for reports")
    parser.add_argument("--seed", type=int, default=None, help="seed for Monte Carlo tasks")
    parser.add_argument(
        "--budget", type=int, default=DEFAULT_TUPLE_BUDGET, help="tuple enumeration budget"
    )
    parser.add_argument(
        "--grid", default=None, help="comma-separated eps grid overriding the scenario"
    )
    args = parser.parse_args(argv)

    try:
        scenario = json.loads(Path(args.scenario).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read scenario: {exc}", file=sys.stderr)
        return 1

    grid = None
    if args.grid is not None:
        try:
            grid = [float(x) for x in args.grid.split(",") if x.strip()]
        except ValueError:
            print(f"error: malformed --grid {args.grid!r}", file=sys.stderr)
            return 1

    seed = args.seed if args.seed is not None else scenario.get("seed")
    out_dir = Path(args.out)

    try:
        task = scenario.get("task")
        if task in ("certify", "separation", "implication"):
            return cmd_certify(scenario, out_dir, args.budget, grid)
        if task in ("monitor", "compose"):
            return cmd_experiment(scenario, out_dir, seed, args.budget)
        print(f"error: unknown task {task!r}", file=sys.stderr)
        return 1
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        ScenarioError,
        KeyError,
        TypeError,
        ValueError,
        ConfigurationError,
        PreconditionError,
        InvalidDistributionError,
        DomainMismatchError,
    ) as exc:
        print(f"error: invalid scenario: {exc!r}", file=sys.stderr)
        return 1
    except StabilityLabError as exc:
        print(f"error: internal invariant violation: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
