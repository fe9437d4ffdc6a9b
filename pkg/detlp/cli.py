"""
Command-line surface for detlp.

Commands:
    generate   frequency file from a preset or quantum fixture file
    solve      critical efficiency of one scenario, all standard scenarios,
               or a lexicographic sequence
    reproduce  recompute a published table (7, 8, 9 or 10)
    certify    pin the scenario's observers at an efficiency and write either
               a verified Bell certificate or a witness model
    verify     re-check a certificate file from its embedded data alone

Exit codes:
    0  solved / feasible / verified
    2  infeasible; a verified certificate was written
    3  input error (bad file, flag or scenario)
    4  numerical or verification failure, or a table mismatch

Examples:
    python -m detlp.cli generate --preset optimized-bell --out data/optimized-bell.json
    python -m detlp.cli solve --freq data/optimized-bell.json --objective dsym
    python -m detlp.cli solve --preset ghz --fix Bob=1 --fix Charlie=1 --objective dmin:Alice
    python -m detlp.cli certify --preset optimized-bell --pin 0.95 --out cert.json
    python -m detlp.cli verify cert.json
    python -m detlp.cli reproduce --table 10
"""
import argparse
import os
import sys
from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .builder import (
    ObjectiveScenario,
    ScenarioInfeasible,
    ScenarioResult,
    scenario_table,
    solve_lexicographic,
    solve_scenario,
    standard_scenarios,
)
from .certify import (
    CertificateError,
    CertificateFormatError,
    bisect_critical_efficiency,
    certificate_to_dict,
    certify_pinned,
    certify_scenario,
    load_certificate,
    verify_certificate,
    witness_to_dict,
)
from .config import load_config
from .logging import DebugLogger, ErrorContext, make_logger
from .lp import LpError
from .model import (
    ExperimentSpec,
    TalliedFrequencies,
    dumps_json,
    frequencies_to_dict,
    load_frequencies,
    load_spec,
    setting_label,
)
from .quantum import PRESET_NAMES, frequencies_for, load_fixture, preset_frequencies
from .tables import TABLES, print_table, reproduce_table
from .types import AppConfig, RunConfig
from .utils import decimal_str, fmt

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

DEFAULT_CERTIFICATE_PATH = "certificate.json"
DEFAULT_WITNESS_PATH = "witness.json"


# ---------------------------------------------------------------------------
# Inputs and outputs


def load_inputs(run: RunConfig) -> Tuple[ExperimentSpec, TalliedFrequencies]:
    """Experiment and frequencies from --freq, --preset or --fixture (first given wins)."""
    spec = load_spec(run.spec_path) if run.spec_path else None
    if run.freq_path:
        return load_frequencies(run.freq_path, spec)
    if run.preset:
        return preset_frequencies(run.preset)
    if run.fixture_path:
        fixture_spec, fix = load_fixture(run.fixture_path)
        return frequencies_for(fix, spec or fixture_spec)
    raise ValueError("no input: pass --freq, --preset or --fixture")


def write_text(text: str, path: Optional[str]) -> None:
    """Write to path (creating parent directories) or to stdout."""
    if path is None:
        sys.stdout.write(text)
        return
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fp:
        fp.write(text)


def result_to_dict(spec: ExperimentSpec, result: ScenarioResult) -> Dict[str, Any]:
    model = result.model
    return {
        "scenario": result.scenario.label,
        "status": result.status.value,
        "value": decimal_str(result.value),
        "iterations": result.iterations,
        "dmin": {name: decimal_str(v) for name, v in model.dmin.items()},
        "pdet": {spec.measurements[i][k]: decimal_str(model.pdet[(i, k)]) for i, k in spec.positions},
        "v": {setting_label(spec, s): decimal_str(v) for s, v in model.v.items()},
        "min_v": decimal_str(result.min_v),
        "degenerate_settings": list(result.degenerate_settings),
    }


def print_result(spec: ExperimentSpec, result: ScenarioResult) -> None:
    model = result.model
    print(f"\n{result.scenario.label}")
    print(f"{'─' * 60}")
    print(f"  f* = {fmt(result.value)}   ({result.status.value}, {result.iterations} iterations)")
    for i, name in enumerate(spec.observers):
        pdets = "  ".join(
            f"{spec.measurements[i][k]}={fmt(model.pdet[(i, k)])}" for k in range(spec.k(i))
        )
        print(f"  {name:<10} dmin={fmt(model.dmin[name])}  {pdets}")
    v_line = "  ".join(f"{setting_label(spec, s)}={fmt(v)}" for s, v in model.v.items())
    print(f"  v: {v_line}")
    if result.degenerate_settings:
        print(f"  ⚠️  degenerate settings (v below threshold): {', '.join(result.degenerate_settings)}")


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(run: RunConfig, cfg: AppConfig, logger: Optional[DebugLogger]) -> int:
    if not (run.preset or run.fixture_path):
        raise ValueError("generate needs --preset or --fixture")
    spec, q = load_inputs(replace(run, freq_path=None))
    write_text(dumps_json(frequencies_to_dict(spec, q)), run.out_path)
    if run.out_path:
        print(f"✓ Frequencies written to: {run.out_path}")
    if logger is not None:
        logger.info("frequencies_generated", {
            "source": run.preset or run.fixture_path, "settings": spec.n_settings, "out": run.out_path,
        })
    return EXIT_OK


def _write_infeasibility_certificate(
    run: RunConfig, cfg: AppConfig, logger: Optional[DebugLogger],
    spec: ExperimentSpec, q: TalliedFrequencies, scenario: ObjectiveScenario,
) -> int:
    result = certify_scenario(
        spec, q, scenario,
        tolerances=cfg.tolerances, config=cfg.certificate, scenario_config=cfg.scenario,
        jobs=run.jobs, logger=logger,
    )
    if result.feasible:
        # scenario LP and pinned program disagree
        raise CertificateError(f"scenario {scenario.label} is infeasible but its pinned program is not")
    path = run.certificate_path or DEFAULT_CERTIFICATE_PATH
    write_text(dumps_json(certificate_to_dict(result.certificate, spec, q, result.verification)), path)
    print(f"✗ Scenario {scenario.label} admits no local-realist model")
    print(f"✓ Verified certificate written to: {path}")
    return EXIT_INFEASIBLE


def cmd_solve(run: RunConfig, cfg: AppConfig, logger: Optional[DebugLogger]) -> int:
    spec, q = load_inputs(run)

    if run.lex:
        fixed = ObjectiveScenario.parse(spec, "dsym", run.fixes).fixed_map if run.fixes else None
        try:
            results: List[Optional[ScenarioResult]] = list(
                solve_lexicographic(spec, q, run.lex, cfg.tolerances, cfg.scenario, logger, fixed)
            )
        except ScenarioInfeasible as e:
            if e.scenario is None:
                raise
            return _write_infeasibility_certificate(run, cfg, logger, spec, q, e.scenario)
    elif run.objective == "all":
        results = scenario_table(
            spec, q, standard_scenarios(spec), cfg.tolerances, cfg.scenario, logger,
            jobs=run.jobs, skip_infeasible=True,
        )
    else:
        scenario = ObjectiveScenario.parse(spec, run.objective, run.fixes)
        try:
            results = [solve_scenario(spec, q, scenario, cfg.tolerances, cfg.scenario, logger)]
        except ScenarioInfeasible:
            return _write_infeasibility_certificate(run, cfg, logger, spec, q, scenario)

    bisected = None
    if run.bisect and results and results[-1] is not None:
        bisected = bisect_critical_efficiency(
            spec, q, results[-1].scenario, cfg.scenario.bisection_iterations, cfg.tolerances, logger,
        )

    if run.output_format == "json":
        doc: Dict[str, Any] = {
            "results": [None if r is None else result_to_dict(spec, r) for r in results],
        }
        if bisected is not None:
            doc["bisection"] = decimal_str(bisected)
        write_text(dumps_json(doc), run.out_path)
        return EXIT_OK

    standard = standard_scenarios(spec) if run.objective == "all" and not run.lex else []
    for idx, r in enumerate(results):
        if r is None:
            print(f"\n{standard[idx].label}\n{'─' * 60}\n  infeasible: no local-realist model")
            continue
        print_result(spec, r)
    if bisected is not None:
        print(f"\n  bisection estimate: {fmt(bisected)}")
    print()
    return EXIT_OK


def cmd_certify(run: RunConfig, cfg: AppConfig, logger: Optional[DebugLogger]) -> int:
    if run.pin is None:
        raise ValueError("certify needs --pin <efficiency>")
    if not 0.0 < run.pin <= 1.0:
        raise ValueError(f"--pin must lie in (0, 1], got {run.pin}")
    spec, q = load_inputs(run)
    scenario = ObjectiveScenario.parse(spec, run.objective, run.fixes)
    result = certify_pinned(
        spec, q, scenario, run.pin,
        tolerances=cfg.tolerances, config=cfg.certificate, scenario_config=cfg.scenario,
        jobs=run.jobs, logger=logger,
    )
    if result.feasible:
        path = run.out_path or DEFAULT_WITNESS_PATH
        write_text(dumps_json(witness_to_dict(result.witness, spec, scenario, run.pin)), path)
        print(f"✓ Feasible at {fmt(run.pin)}: a local-realist model reaches the pinned efficiency")
        print(f"✓ Witness model written to: {path}")
        return EXIT_OK
    path = run.out_path or DEFAULT_CERTIFICATE_PATH
    write_text(dumps_json(certificate_to_dict(result.certificate, spec, q, result.verification)), path)
    report = result.verification
    print(f"✗ Infeasible at {fmt(run.pin)}: no local-realist model reaches the pinned efficiency")
    print(f"✓ Certificate verified on {report.categories_checked}/{report.total_categories} categories "
          f"(margin {report.margin:.3e})")
    print(f"✓ Certificate written to: {path}")
    return EXIT_INFEASIBLE


def cmd_verify(run: RunConfig, cfg: AppConfig, logger: Optional[DebugLogger]) -> int:
    cert, spec, q = load_certificate(run.certificate_path)
    report = verify_certificate(cert, spec, q, config=cfg.certificate, jobs=run.jobs, logger=logger)
    if run.output_format == "json":
        write_text(dumps_json(report.to_dict()), run.out_path)
    else:
        coverage = "exhaustive" if report.exhaustive else "sampled"
        print(f"Certificate {run.certificate_path}")
        print(f"  scenario:   {cert.scenario.label}")
        print(f"  efficiency: {'-' if cert.efficiency is None else fmt(cert.efficiency)}")
        print(f"  categories: {report.categories_checked}/{report.total_categories} ({coverage})")
        print(f"  max column: {report.max_column_value:.3e}   margin: {report.margin:.3e}")
        if report.ok:
            print("✓ VERIFIED")
        else:
            print("❌ FAILED")
            for failure in report.failures:
                print(f"  - {failure}")
    return EXIT_OK if report.ok else EXIT_NUMERICAL


def cmd_reproduce(run: RunConfig, cfg: AppConfig, logger: Optional[DebugLogger]) -> int:
    result = reproduce_table(run.table, run.fixtures_dir, cfg.tolerances, cfg.scenario, logger)
    if run.output_format == "json":
        write_text(dumps_json(result.to_dict()), run.out_path)
    else:
        print_table(result)
        if result.ok:
            print("✓ All available cells match")
        else:
            print(f"❌ {len(result.mismatches)} cell(s) deviate from the published values")
    return EXIT_OK if result.ok else EXIT_NUMERICAL


COMMANDS = {
    "generate": cmd_generate,
    "solve": cmd_solve,
    "reproduce": cmd_reproduce,
    "certify": cmd_certify,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detlp",
        description="Critical detector efficiencies for EPR experiments and Bell certificates",
    )
    parser.add_argument("--config", help="JSON configuration file (see config.example.json)")
    parser.add_argument("--log-path", help="Write JSON Lines events to this file")
    parser.add_argument("--log-level", choices=sorted(DebugLogger.LEVELS), help="Minimum event level")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", dest="output_format", choices=("table", "json"), default="table")
    common.add_argument("--out", dest="out_path", help="Output file (default: stdout or a fixed name)")
    common.add_argument("--jobs", type=int, default=1, help="Worker threads for batches and verification")
    common.add_argument("--tol-feas", type=float, help="Override the LP feasibility tolerance")

    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument("--spec", dest="spec_path", help="Experiment schema JSON")
    inputs.add_argument("--freq", dest="freq_path", help="Frequency JSON (may embed its schema)")
    inputs.add_argument("--preset", choices=PRESET_NAMES, help="Built-in quantum preset")
    inputs.add_argument("--fixture", dest="fixture_path", help="Quantum fixture JSON")

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("--objective", default="dsym", help="dsym, dsym:<obs,...>, dmin:<observer>")
    scenario.add_argument("--fix", dest="fixes", action="append", default=[], metavar="OBSERVER=VALUE",
                          help="Hold an observer's dmin at or above VALUE (repeatable)")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common, inputs], help="Write a frequency file")

    p = sub.add_parser("solve", parents=[common, inputs, scenario], help="Critical efficiency")
    p.add_argument("--lex", help="Comma-separated observers maximized in turn")
    p.add_argument("--bisect", action="store_true", help="Cross-check by bisection on the pinned program")
    p.add_argument("--certificate-out", dest="certificate_path",
                   help=f"Certificate path when infeasible (default {DEFAULT_CERTIFICATE_PATH})")

    p = sub.add_parser("certify", parents=[common, inputs, scenario], help="Certificate or witness")
    p.add_argument("--pin", type=float, required=True, help="Efficiency in (0, 1]")

    p = sub.add_parser("verify", parents=[common], help="Re-verify a certificate file")
    p.add_argument("certificate_path", help="Certificate JSON")

    p = sub.add_parser("reproduce", parents=[common], help="Recompute a published table")
    p.add_argument("--table", type=int, required=True, choices=sorted(TABLES))
    p.add_argument("--fixtures-dir", help="Directory holding external frequency files")
    return parser


def run_config(args: argparse.Namespace) -> RunConfig:
    lex = getattr(args, "lex", None)
    return RunConfig(
        command=args.command,
        spec_path=getattr(args, "spec_path", None),
        freq_path=getattr(args, "freq_path", None),
        fixture_path=getattr(args, "fixture_path", None),
        preset=getattr(args, "preset", None),
        objective=getattr(args, "objective", "dsym"),
        fixes=list(getattr(args, "fixes", [])),
        lex=[o.strip() for o in lex.split(",") if o.strip()] if lex else None,
        pin=getattr(args, "pin", None),
        table=getattr(args, "table", None),
        fixtures_dir=getattr(args, "fixtures_dir", None),
        output_format=args.output_format,
        out_path=args.out_path,
        jobs=max(1, args.jobs),
        tol_feas=args.tol_feas,
        bisect=getattr(args, "bisect", False),
        certificate_path=getattr(args, "certificate_path", None),
    )


def app_config(args: argparse.Namespace, run: RunConfig) -> AppConfig:
    cfg = load_config(args.config)
    if args.log_path:
        cfg.log_path = args.log_path
    if args.log_level:
        cfg.logging.level = args.log_level
    if run.tol_feas is not None:
        if not run.tol_feas > 0.0:
            raise ValueError(f"--tol-feas must be positive, got {run.tol_feas}")
        cfg.tolerances = replace(cfg.tolerances, feasibility=run.tol_feas)
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags; 2 is reserved for infeasible
        return EXIT_OK if e.code in (0, None) else EXIT_INPUT
    run = run_config(args)
    logger = None
    try:
        cfg = app_config(args, run)
        logger = make_logger(cfg)
        return COMMANDS[run.command](run, cfg, logger)
    except CertificateFormatError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (LpError, CertificateError) as e:
        if logger is not None:
            ErrorContext.log_operation_error(logger, run.command, e)
        print(f"❌ Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ScenarioInfeasible as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, OSError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT
    finally:
        if logger is not None:
            logger.close()


if __name__ == "__main__":
    sys.exit(main())
