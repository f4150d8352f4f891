"""Command-line interface: fit, synth, cmif, eval, realize"""
import argparse
import json
import logging
import sys
from typing import Any, Callable, Dict, List, Optional

from app.models import FitConfig, GridSpec, SynthConfig, build_config, load_config_data
from core.config import settings
from core.error_handling import log_error_summary
from core.exceptions import EXIT_INTERNAL, EXIT_OK, ConfigurationError, ModalIdError
from core.logging import clear_context, set_run_id, setup_logging
from services.pipeline import run_cmif, run_eval, run_fit, run_realize, run_synth

logger = logging.getLogger(__name__)


def _parse_frequencies(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated frequencies in Hz, got {text!r}")


def _emit(payload: Dict[str, Any]) -> None:
    """Command result on stdout; logs stay on stderr"""
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def cmd_fit(args: argparse.Namespace) -> int:
    data = load_config_data(args.config)
    overrides = {
        "frf": args.frf,
        "min_freq_hz": args.min_freq_hz,
        "damping_model": args.damping_model,
        "output_dir": args.out,
        "seed": args.seed,
    }
    data.update({key: value for key, value in overrides.items() if value is not None})
    if "frf" not in data:
        raise ConfigurationError("fit needs an FRF file (config field 'frf' or --frf)")
    config = build_config(FitConfig, data, args.config or "command line")

    result = run_fit(config)
    _emit({
        "command": "fit",
        "output_dir": str(result.output_dir),
        "stage1_cost": result.riv_trace.costs[-1],
        "stage2_objective": result.ipem_trace.final_objective,
        "n_rbm": result.modal.n_rbm,
        "n_flex": result.modal.n_flex,
    })
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    if args.config is None:
        raise ConfigurationError("synth needs --config with 'system' and 'grid' sections")
    data = load_config_data(args.config)
    if args.seed is not None:
        data.setdefault("system", {})["seed"] = args.seed
    config = build_config(SynthConfig, data, args.config)

    dataset = run_synth(config, args.out or ".")
    _emit({"command": "synth", "output_dir": args.out or ".", "n_points": dataset.n_points})
    return EXIT_OK


def cmd_cmif(args: argparse.Namespace) -> int:
    data = load_config_data(args.config)
    frf = args.frf or data.get("frf")
    if frf is None:
        raise ConfigurationError("cmif needs an FRF file (--frf)")
    min_freq_hz = args.min_freq_hz if args.min_freq_hz is not None else data.get("min_freq_hz", 0.0)

    curves = run_cmif(frf, args.out or ".", min_freq_hz)
    _emit({"command": "cmif", "output_dir": args.out or ".", "n_points": curves.grid.n_points})
    return EXIT_OK


def _grid_spec(args: argparse.Namespace) -> GridSpec:
    if args.freqs_hz is not None and args.grid is not None:
        raise ConfigurationError("give either --grid or --freqs-hz, not both")
    if args.freqs_hz is not None:
        return build_config(GridSpec, {"frequencies_hz": args.freqs_hz}, "--freqs-hz")
    if args.grid is not None:
        return build_config(GridSpec, load_config_data(args.grid), args.grid)
    raise ConfigurationError("eval needs a frequency grid (--grid or --freqs-hz)")


def cmd_eval(args: argparse.Namespace) -> int:
    dataset = run_eval(args.model, _grid_spec(args), args.out or ".")
    _emit({"command": "eval", "output_dir": args.out or ".", "n_points": dataset.n_points})
    return EXIT_OK


def cmd_realize(args: argparse.Namespace) -> int:
    state_space = run_realize(args.model, args.out or ".")
    _emit({"command": "realize", "output_dir": args.out or ".", "n_states": state_space.n_states})
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Two-stage modal identification from frequency response data"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def add_common(pp: argparse.ArgumentParser) -> None:
        pp.add_argument("--config", type=str, default=None, help="JSON configuration file")
        pp.add_argument("--out", type=str, default=None, help="output directory")
        pp.add_argument("--seed", type=int, default=None, help="seed for stochastic steps")

    fit = sub.add_parser("fit", help="additive RIV estimate followed by the modal projection")
    add_common(fit)
    fit.add_argument("--frf", type=str, default=None, help="FRF CSV (overrides the config)")
    fit.add_argument("--min-freq-hz", dest="min_freq_hz", type=float, default=None)
    fit.add_argument("--damping-model", dest="damping_model", type=str, default=None, choices=["general", "proportional"])
    fit.set_defaults(handler=cmd_fit)

    synth = sub.add_parser("synth", help="random modal system with its simulated FRF")
    add_common(synth)
    synth.set_defaults(handler=cmd_synth)

    cmif_parser = sub.add_parser("cmif", help="complex mode indicator function of an FRF")
    add_common(cmif_parser)
    cmif_parser.add_argument("--frf", type=str, default=None)
    cmif_parser.add_argument("--min-freq-hz", dest="min_freq_hz", type=float, default=None)
    cmif_parser.set_defaults(handler=cmd_cmif)

    evaluate = sub.add_parser("eval", help="FRF of a stored model on a frequency grid")
    add_common(evaluate)
    evaluate.add_argument("--model", type=str, required=True, help="additive-v1, modal-v1 or ss-v1 document")
    evaluate.add_argument("--grid", type=str, default=None, help="grid JSON file")
    evaluate.add_argument("--freqs-hz", dest="freqs_hz", type=_parse_frequencies, default=None)
    evaluate.set_defaults(handler=cmd_eval)

    realize_parser = sub.add_parser("realize", help="real state-space realization of a modal model")
    add_common(realize_parser)
    realize_parser.add_argument("--model", type=str, required=True, help="modal-v1 document")
    realize_parser.set_defaults(handler=cmd_realize)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(settings.LOG_DIR, settings.LOG_JSON, settings.LOG_LEVEL)
    run_id = set_run_id()
    logger.info(f"{settings.APP_NAME} {settings.APP_VERSION}: command '{args.cmd}' (run {run_id})")

    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except ModalIdError as e:
        logger.error(f"[{e.error_code}] {e.message}", extra={"context": e.details})
        sys.stderr.write(json.dumps(e.to_dict(), sort_keys=True, default=str) + "\n")
        return e.exit_code
    except Exception as e:
        summary = log_error_summary(e, f"command: {args.cmd}")
        logger.error(f"Unexpected error: {summary}", exc_info=True)
        return EXIT_INTERNAL
    finally:
        clear_context()
