"""Command-line client: thin argument parsing over the package's operations.

Subcommands:

* ``rotation-table`` - print the deterministic sequential-readout table of the
  three-axis rotation model;
* ``simulate`` - generate trial files from a declarative agent spec, or run a
  power sweep with ``--power``;
* ``analyze`` - test a trial file against the non-invasive-classical
  constraints and report a per-session verdict;
* ``feasibility`` - exact joint-distribution feasibility of a marginals file
  (exits nonzero when infeasible);
* ``serve`` - run the HTTP collection/analysis service.

Heavy imports happen inside each subcommand so that short-lived invocations
stay fast.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqmeta",
        description="Sequential-evaluation order-effect toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    rot = sub.add_parser("rotation-table", help="print the rotation model's readout table")
    rot.add_argument("--alpha", type=float, default=None, help="x-rotation angle (radians)")
    rot.add_argument("--beta", type=float, default=None, help="y-rotation angle (radians)")
    rot.add_argument("--gamma", type=float, default=None, help="z-rotation angle (radians)")
    rot.add_argument("--v0", type=str, default=None, help="initial state, e.g. '1,1,1'")
    rot.add_argument("--json", action="store_true", help="emit a machine-readable record")

    sim = sub.add_parser("simulate", help="generate trials from an agent spec")
    sim.add_argument("--agent", type=Path, required=True, help="agent spec JSON file")
    sim.add_argument("--n", type=int, default=1000, help="trials per ordered condition")
    sim.add_argument("--seed", type=int, default=42)
    sim.add_argument("--out", type=Path, default=None, help="output JSONL path (default stdout)")
    sim.add_argument("--session-id", type=str, default=None)
    sim.add_argument(
        "--counterbalancing", choices=("randomized", "blocked"), default="randomized"
    )
    sim.add_argument("--workers", type=int, default=1, help="parallel generation threads")
    sim.add_argument("--power", action="store_true", help="run a power sweep instead")
    sim.add_argument("--n-grid", type=str, default="100,300,1000", help="comma list of N values")
    sim.add_argument("--replications", type=int, default=100)
    sim.add_argument("--alpha", type=float, default=0.01)
    sim.add_argument("--permutations", type=int, default=1000)

    ana = sub.add_parser("analyze", help="test a trial file against the NIC constraints")
    ana.add_argument("trials_file", type=Path)
    ana.add_argument("--threshold", type=float, default=0.5)
    ana.add_argument("--alpha", type=float, default=0.01)
    ana.add_argument("--permutations", type=int, default=10000)
    ana.add_argument("--bootstrap", type=int, default=1000)
    ana.add_argument("--min-n", type=int, default=50)
    ana.add_argument(
        "--strata",
        type=str,
        default=None,
        help="comma list of covariate keys for stratified permutation",
    )
    ana.add_argument("--seed", type=int, default=0)
    ana.add_argument("--json", action="store_true", help="emit machine-readable reports")

    fea = sub.add_parser("feasibility", help="exact joint-feasibility of a marginals file")
    fea.add_argument("marginals_file", type=Path)
    fea.add_argument("--json", action="store_true")

    srv = sub.add_parser("serve", help="run the collection/analysis HTTP service")
    srv.add_argument("--host", type=str, default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--data-dir", type=Path, required=True)

    return parser


def _cmd_rotation_table(args) -> int:
    from .core import StateVector
    from .rotation import (
        RotationModelConfig,
        binary_check,
        equality_gaps,
        exact_c_matrix,
        format_rotation_table,
        table_rows,
    )

    kwargs = {}
    for name in ("alpha", "beta", "gamma"):
        value = getattr(args, name)
        if value is not None:
            kwargs[name] = value
    if args.v0 is not None:
        kwargs["v0"] = StateVector.from_array([float(p) for p in args.v0.split(",")])
    cfg = RotationModelConfig(**kwargs)
    if args.json:
        binary = binary_check(cfg)
        record = {
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "gamma": cfg.gamma,
            "v0": [cfg.v0.x, cfg.v0.y, cfg.v0.z],
            "rows": table_rows(cfg),
            "equality_gaps": equality_gaps(exact_c_matrix(cfg)),
            "binary_disagreements": {
                "d12": binary.d12,
                "d13": binary.d13,
                "d23": binary.d23,
            },
        }
        print(json.dumps(record, indent=2))
    else:
        print(format_rotation_table(cfg))
    return 0


def _cmd_simulate(args) -> int:
    from .agents import SimulationPlan, agent_from_dict, power_curve, simulate
    from .trials import to_json_line

    spec = json.loads(args.agent.read_text())
    agent = agent_from_dict(spec)
    if args.power:
        grid = [int(part) for part in args.n_grid.split(",") if part]
        plan = SimulationPlan(n_trials_per_condition=1, seed=args.seed)
        points = power_curve(
            agent,
            plan,
            n_grid=grid,
            replications=args.replications,
            alpha=args.alpha,
            n_permutations=args.permutations,
            seed=args.seed,
        )
        print(f"{'N/condition':>12}  {'rejection rate':>14}  {'replications':>12}")
        for point in points:
            print(
                f"{point.n_per_condition:>12}  {point.rejection_rate:>14.3f}  "
                f"{point.replications:>12}"
            )
        return 0
    plan = SimulationPlan(
        n_trials_per_condition=args.n,
        seed=args.seed,
        counterbalancing=args.counterbalancing,
    )
    records = simulate(agent, plan, session_id=args.session_id, workers=args.workers)
    lines = "\n".join(to_json_line(r) for r in records) + "\n"
    if args.out is None:
        sys.stdout.write(lines)
    else:
        args.out.write_text(lines, encoding="utf-8")
        print(f"wrote {len(records)} trials to {args.out}", file=sys.stderr)
    return 0


def _format_report(report) -> str:
    lines = [f"session {report.session_id or '(unlabeled)'}: {report.verdict}"]
    lines.append(f"  equality battery (alpha={report.alpha}, Holm-corrected):")
    for t in report.equality_tests:
        flag = "" if t.eligible else "  [below min-n]"
        holm = "n/a" if t.p_holm is None else f"{t.p_holm:.4g}"
        lines.append(
            f"    {t.first_a}->{t.second} vs {t.first_b}->{t.second}: "
            f"diff={t.diff:.4f} p={t.p_value:.4g} holm={holm} "
            f"(n={t.n_a}/{t.n_b}){flag}"
        )
    if report.triangle_tests:
        lines.append("  triangle battery:")
        for t in report.triangle_tests:
            flag = "" if t.eligible else "  [below min-n]"
            lines.append(
                f"    {t.label}: slack={t.slack:.4f} "
                f"violation-fraction={t.bootstrap_violation_fraction:.3f}{flag}"
            )
    for note in report.notes:
        lines.append(f"  note: {note}")
    if report.interpretation:
        lines.append(f"  interpretation: {report.interpretation}")
    return "\n".join(lines)


def _cmd_analyze(args) -> int:
    from .nic import analyze_by_session
    from .trials import read_trials_jsonl

    records = read_trials_jsonl(args.trials_file)
    if not records:
        print(f"no complete trial records in {args.trials_file}", file=sys.stderr)
        return 2
    strata = [part for part in (args.strata or "").split(",") if part] or None
    reports = analyze_by_session(
        records,
        threshold=args.threshold,
        alpha=args.alpha,
        n_permutations=args.permutations,
        n_bootstrap=args.bootstrap,
        min_n=args.min_n,
        strata=strata,
        seed=args.seed,
    )
    if args.json:
        print(json.dumps([r.to_dict() for r in reports.values()], indent=2))
    else:
        for report in reports.values():
            print(_format_report(report))
    return 0


def _cmd_feasibility(args) -> int:
    from fractions import Fraction

    from .feasibility import MarginalSystem, check_feasibility

    payload = json.loads(args.marginals_file.read_text())
    try:
        variables = payload["variables"]
        index = {name: k for k, name in enumerate(variables)}
        singles = [payload["singles"][name] for name in variables]
        p11 = {}
        for entry in payload["p11"]:
            p11[(index[entry["a"]], index[entry["b"]])] = entry["p11"]
        system = MarginalSystem.from_singles_and_p11(
            variables,
            singles,
            p11,
            max_denominator=int(payload.get("max_denominator", 10**6)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        print(f"invalid marginals file: {exc}", file=sys.stderr)
        return 2
    result = check_feasibility(system)
    if args.json:
        record = {
            "feasible": result.feasible,
            "witness": None
            if result.witness is None
            else {"".join(map(str, k)): str(v) for k, v in sorted(result.witness.items())},
            "certificate": None if result.certificate is None else str(result.certificate),
        }
        print(json.dumps(record, indent=2))
    elif result.feasible:
        print("feasible: a joint distribution reproduces every marginal")
        for atom, prob in sorted(result.witness.items()):
            if prob != Fraction(0):
                print(f"  P{atom} = {prob}")
    else:
        print("infeasible: no joint distribution matches the marginals")
        print(f"  violated inequality: {result.certificate}")
        print(f"  value at supplied marginals: {result.certificate.value_at_system(system)}")
    return 0 if result.feasible else 1


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "rotation-table": _cmd_rotation_table,
        "simulate": _cmd_simulate,
        "analyze": _cmd_analyze,
        "feasibility": _cmd_feasibility,
        "serve": _cmd_serve,
    }
    try:
        return handlers[args.command](args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
