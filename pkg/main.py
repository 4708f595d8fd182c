# main.py - Command-line entry point for the path-entanglement certification toolkit

import argparse
import os
import sys

from rich.console import Console

from utils import log_message, setup_logging, parse_int_list, PathCertError, ValidationError, VerificationError
from pipeline import (
    RunConfig, ReportDocument, parse_noise, pipeline_runner,
    certification_table, settings_table, verification_table, plot_report,
)
from optics import projector_amplitudes
from config import *

console = Console()


def build_parser():
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Path-entanglement certification toolkit")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {TOOL_VERSION}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING, ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate the coincidence counts of a measurement campaign")
    sim.add_argument("--config", help="run config JSON")
    sim.add_argument("--dim", type=int)
    sim.add_argument("--noise", help="white:p[,dephase:sigma][,crosstalk:eps]")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--rate", type=float, help="pair rate in Hz")
    sim.add_argument("--efficiency", type=float)
    sim.add_argument("--duration", type=float, help="acquisition time per setting (s)")
    sim.add_argument("--campaign", type=float, help="total acquisition time split over all settings (s)")
    sim.add_argument("--full-grid", action="store_true", help="record all d^2 computational settings")
    sim.add_argument("--mixed", action="store_true", help="add X(x)Y and Y(x)X settings")
    sim.add_argument("--exact", action="store_true", help="store expected counts instead of samples")
    sim.add_argument("--out", default=OUTPUT_DIR)

    cert = sub.add_parser("certify", help="fidelity, Schmidt number and EoF bounds from a counts file")
    cert.add_argument("counts", nargs="?", help=f"counts CSV (default <out>/{COUNTS_FILE})")
    cert.add_argument("--config", help="run config JSON (for provenance and defaults)")
    cert.add_argument("--dims", help="e.g. 2,4,8 or 2-32:2")
    cert.add_argument("--resamples", type=int)
    cert.add_argument("--seed", type=int)
    cert.add_argument("--crosstalk", type=float, help="assumed cross population when only Z_i|Z_i was recorded")
    cert.add_argument("--out", default=OUTPUT_DIR)

    csub = sub.add_parser("compile-subspace", help="compile and verify two-path analysis settings")
    csub.add_argument("--dim", type=int, default=DEFAULT_DIM)
    csub.add_argument("--pair", help="i,j (default: every pair)")
    csub.add_argument("--projector", default="X+", choices=["X+", "X-", "Y+", "Y-"])
    csub.add_argument("--out", default=OUTPUT_DIR)

    cmub = sub.add_parser("compile-mub", help="build and verify a product-MUB measurement network")
    cmub.add_argument("--n", type=int, default=3, help="number of qubits (d = 2^n)")
    cmub.add_argument("--analyzer-angle", type=float, default=MUB_ANALYZER_ANGLE_DEG,
                      help="stage HWP angle; 0 gives the computational basis")
    cmub.add_argument("--phases", help="comma-separated SLM phases in rad, one per path")
    cmub.add_argument("--out", default=OUTPUT_DIR)

    rep = sub.add_parser("report", help="render a report JSON and draw its curves")
    rep.add_argument("report", nargs="?", help=f"report JSON (default <out>/{REPORT_FILE})")
    rep.add_argument("--plot", help=f"PNG path (default <out>/{PLOT_IMAGE_FILE})")
    rep.add_argument("--no-plot", action="store_true")
    rep.add_argument("--out", default=OUTPUT_DIR)
    return parser

# -----------------------
# COMMANDS
# -----------------------

def cmd_simulate(args):
    config = RunConfig.load(args.config) if args.config else RunConfig()
    config = config.with_overrides(
        dim=args.dim,
        noise=parse_noise(args.noise) if args.noise else None,
        seed=args.seed,
        rate_hz=args.rate,
        efficiency=args.efficiency,
        duration_s=args.duration,
        campaign_s=args.campaign,
        full_grid=args.full_grid or None,
        include_mixed=args.mixed or None,
        exact=args.exact or None,
    )
    path = pipeline_runner.run_simulate(config, args.out)
    console.print(f"Counts written to [bold cyan]{path}[/bold cyan]")

def cmd_certify(args):
    config = RunConfig.load(args.config) if args.config else None
    counts = args.counts or os.path.join(args.out, COUNTS_FILE)
    dims = parse_int_list(args.dims) if args.dims else None
    n_resamples = args.resamples if args.resamples is not None else (
        config.n_resamples if config else DEFAULT_RESAMPLES)
    seed = args.seed if args.seed is not None else (config.seed if config else DEFAULT_SEED)
    crosstalk = args.crosstalk if args.crosstalk is not None else (
        config.crosstalk_assumed if config else CROSSTALK_ASSUMED)

    document = pipeline_runner.run_certify(counts, dims, n_resamples, seed, crosstalk, args.out, config)
    console.print(certification_table(document))

def cmd_compile_subspace(args):
    pair = tuple(parse_int_list(args.pair)) if args.pair else None
    if pair is not None and len(pair) != 2:
        raise ValidationError(f"--pair needs two indices, got {args.pair!r}")
    alpha, beta = projector_amplitudes(args.projector[0], 1 if args.projector[1] == "+" else -1)
    try:
        result = pipeline_runner.run_compile("subspace", dim=args.dim, pair=pair, alpha=alpha, beta=beta,
                                             out_dir=args.out)
    except VerificationError as e:
        console.print(verification_table(e.report))
        raise
    console.print(settings_table(result["settings"][:32]))
    console.print(verification_table(result["verification"]))

def cmd_compile_mub(args):
    phases = None
    if args.phases:
        try:
            phases = [float(x) for x in args.phases.split(",")]
        except ValueError:
            raise ValidationError(f"--phases needs comma-separated numbers, got {args.phases!r}")
    try:
        result = pipeline_runner.run_compile("mub", n=args.n, analyzer_angle=args.analyzer_angle,
                                             phase_profile=phases, out_dir=args.out)
    except VerificationError as e:
        console.print(verification_table(e.report))
        raise
    console.print(verification_table(result["verification"]))

def cmd_report(args):
    path = args.report or os.path.join(args.out, REPORT_FILE)
    document = ReportDocument.load(path)
    console.print(certification_table(document))
    provenance = document.provenance
    console.print(f"config {provenance['config_hash'][:12]}  seed {provenance['seed']}  "
                  f"{TOOL_NAME} {provenance['tool_version']}")
    if not args.no_plot:
        image = args.plot or os.path.join(os.path.dirname(path) or ".", PLOT_IMAGE_FILE)
        plot_report(document, image)
        console.print(f"Curves saved as [bold cyan]{image}[/bold cyan]")

COMMANDS = {
    "simulate": cmd_simulate,
    "certify": cmd_certify,
    "compile-subspace": cmd_compile_subspace,
    "compile-mub": cmd_compile_mub,
    "report": cmd_report,
}

def main(argv=None):
    """Main entry point; returns the process exit code"""
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)

    try:
        COMMANDS[args.command](args)
    except PathCertError as e:
        log_message(f"{args.command} failed: {e}", "ERROR")
        console.print(f"[bold red]error:[/bold red] {e}")
        return e.exit_code
    except OSError as e:
        log_message(f"{args.command} failed: {e}", "ERROR")
        console.print(f"[bold red]error:[/bold red] {e}")
        return EXIT_VALIDATION
    except KeyboardInterrupt:
        console.print("\nInterrupted")
        return 130
    return EXIT_OK

if __name__ == "__main__":
    sys.exit(main())
