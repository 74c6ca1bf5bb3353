from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List

from .energy import CSV_COLUMNS
from .error_analysis import SWEEP_COLUMNS, sweep_configs, sweep_summary
from .harness import (
    ACCURATE_MODEL,
    APPROX_MODEL,
    COMPARE_COLUMNS,
    DEFAULT_APPROX_MULCSR,
    all_kernels,
    compare_kernels,
    resolve_cost_model,
    run_request,
)
from .kernels import KERNELS, default_spec, generate, resolve_kernel
from .models import KernelSpec, RunRequest
from .storage import save_binary, save_csv, save_ihex, save_json


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Simulate RV32IEM programs on CSR-controlled approximate arithmetic units"
    )
    parser.add_argument(
        "command",
        choices=["run", "sweep-errors", "compare", "export"],
        help="Operation to run",
    )
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--kernel", help="Built-in benchmark kernel name")
    source.add_argument("--bin", dest="bin_path", help="Raw little-endian program image")
    source.add_argument("--ihex", dest="ihex_path", help="Intel HEX program image")
    parser.add_argument("--alucsr", type=_parse_word, default=0, help="alucsr preset (hex word)")
    parser.add_argument("--mulcsr", type=_parse_word, help="mulcsr preset (hex word)")
    parser.add_argument("--divcsr", type=_parse_word, default=0, help="divcsr preset (hex word)")
    parser.add_argument("--cost-model", help="Cost model JSON path or shipped model name")
    parser.add_argument("--accurate-model", default=ACCURATE_MODEL, help="Baseline model for compare")
    parser.add_argument("--approx-model", default=APPROX_MODEL, help="Approximate model for compare")
    parser.add_argument("--report", choices=["json", "csv"], default="json", help="Report format")
    parser.add_argument("--trace", dest="trace_path", help="Write a retirement trace to this path")
    parser.add_argument("--max-cycles", type=int, help="Abort the run after this many cycles")
    parser.add_argument("--seed", type=int, default=0, help="Seed for kernel input data")
    parser.add_argument(
        "--param",
        action="append",
        help="Kernel size parameter as key=value or kernel.key=value (repeatable)",
    )
    parser.add_argument("--kernels", help="Comma-separated kernel list for compare (default: all)")
    parser.add_argument("--workers", type=int, help="Worker threads for sweep-errors and compare")
    parser.add_argument("--output", help="Output file (report, sweep table, summary or image)")
    parser.add_argument(
        "--prologue-csr",
        action="store_true",
        help="Install CSR presets with csrrw instructions instead of before the first instruction",
    )
    parser.add_argument("--no-gating", action="store_true", help="Disable slot gating (event models)")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="Log progress to stderr")
    return parser


def main(argv: list[str] | None = None) -> None:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        if args.command == "run":
            _handle_run(args)
        elif args.command == "sweep-errors":
            _handle_sweep_errors(args)
        elif args.command == "compare":
            _handle_compare(args)
        elif args.command == "export":
            _handle_export(args)
    except (KeyError, ValueError, OSError) as exc:
        raise SystemExit(_format_user_error(exc)) from exc


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s %(message)s")


def _handle_run(args: argparse.Namespace) -> None:
    if not (args.kernel or args.bin_path or args.ihex_path):
        raise SystemExit("one of --kernel, --bin or --ihex is required for run")
    request = RunRequest(
        kernel=_kernel_spec(args) if args.kernel else None,
        bin_path=args.bin_path,
        ihex_path=args.ihex_path,
        alucsr=args.alucsr,
        mulcsr=args.mulcsr or 0,
        divcsr=args.divcsr,
        cost_model=args.cost_model,
        report_format=args.report,
        trace_path=args.trace_path,
        max_cycles=args.max_cycles,
        prologue_csr=args.prologue_csr,
    )
    model = resolve_cost_model(request, None)
    if args.no_gating:
        model = model.with_gating(False)
    outcome = run_request(request, model)

    if args.report == "csv":
        row = outcome.report.to_csv_row() if outcome.report else {}
        if args.output:
            save_csv(args.output, [row], CSV_COLUMNS)
        else:
            print(_csv_text([row], CSV_COLUMNS), end="")
    else:
        payload = outcome.to_dict()
        if args.output:
            save_json(args.output, payload)
        else:
            print(json.dumps(payload, indent=2, sort_keys=True))

    halt = outcome.summary.halt
    if not halt.ok:
        raise SystemExit(f"run {halt.kind.value}: {halt.reason or 'no diagnostic'}")
    if halt.exit_code:
        raise SystemExit(f"program exited with code {halt.exit_code}")


def _handle_sweep_errors(args: argparse.Namespace) -> None:
    rows = sweep_configs(workers=args.workers)
    table = [row.to_row() for row in rows]
    summary = sweep_summary(rows)
    if args.output:
        save_csv(args.output, table, SWEEP_COLUMNS)
        print(json.dumps({"status": "ok", "output": args.output, **summary}, indent=2))
    else:
        print(_csv_text(table, SWEEP_COLUMNS), end="")


def _handle_compare(args: argparse.Namespace) -> None:
    kernels = [name.strip() for name in args.kernels.split(",")] if args.kernels else all_kernels()
    specs = _compare_specs(kernels, args.seed, _parse_params(args.param))
    result = compare_kernels(
        specs,
        args.accurate_model,
        args.approx_model,
        mulcsr=DEFAULT_APPROX_MULCSR if args.mulcsr is None else args.mulcsr,
        alucsr=args.alucsr,
        divcsr=args.divcsr,
        workers=args.workers,
    )
    if args.report == "csv":
        rows = [_compare_row(row) for row in result["apps"]]
        if args.output:
            save_csv(args.output, rows, COMPARE_COLUMNS)
        print(_csv_text(rows, COMPARE_COLUMNS), end="")
        return
    if args.output:
        save_json(args.output, result)
    print(json.dumps(result, indent=2, sort_keys=True))


def _compare_specs(kernels: List[str], seed: int, params: Dict[str, int]) -> List[KernelSpec]:
    """Give each kernel the parameters it declares; `kernel.key` scopes one to a single kernel."""

    names = [resolve_kernel(name) for name in kernels]
    overrides: Dict[str, Dict[str, int]] = {name: {} for name in names}
    for key, value in params.items():
        target, _, field_name = key.rpartition(".")
        if target:
            target = resolve_kernel(target)
            if target not in overrides:
                raise ValueError(f"parameter {key!r} names kernel {target} which is not being compared")
            matches = [target]
        else:
            matches = [name for name in names if field_name in KERNELS[name].defaults]
            if not matches:
                raise ValueError(f"no compared kernel has a parameter {field_name!r}")
        for name in matches:
            overrides[name][field_name] = value
    return [default_spec(name, seed, **overrides[name]) for name in names]


def _compare_row(row: Dict[str, object]) -> Dict[str, object]:
    formatted = dict(row)
    formatted["output_er"] = row["output_error"]["er"]
    formatted["output_mred"] = row["output_error"]["mred"]
    for column in COMPARE_COLUMNS:
        if isinstance(formatted.get(column), float):
            formatted[column] = f"{formatted[column]:.6f}"
    return formatted


def _handle_export(args: argparse.Namespace) -> None:
    if not args.kernel or not args.output:
        raise SystemExit("--kernel and --output are required for export")
    program = generate(_kernel_spec(args))
    image = program.image()
    if Path(args.output).suffix.lower() in (".hex", ".ihex"):
        save_ihex(args.output, image)
    else:
        save_binary(args.output, image)
    print(
        json.dumps(
            {
                "status": "ok",
                "kernel": program.name,
                "output": args.output,
                "bytes": len(image),
                "words": len(program.words),
                "reference": list(program.reference),
            },
            indent=2,
        )
    )


def _kernel_spec(args: argparse.Namespace):
    return default_spec(args.kernel, args.seed, **_parse_params(args.param))


def _parse_word(value: str) -> int:
    try:
        word = int(value, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid CSR word {value!r}") from exc
    if not 0 <= word <= 0xFFFFFFFF:
        raise argparse.ArgumentTypeError(f"CSR word {value!r} does not fit in 32 bits")
    return word


def _parse_params(entries: list[str] | None) -> Dict[str, int]:
    if not entries:
        return {}
    params: Dict[str, int] = {}
    for entry in entries:
        if "=" not in entry:
            raise ValueError(f"Invalid parameter {entry!r}; expected key=value format")
        key, value = entry.split("=", 1)
        if not key:
            raise ValueError(f"Invalid parameter {entry!r}; key cannot be empty")
        try:
            params[key] = int(value, 0)
        except ValueError as exc:
            raise ValueError(f"Invalid integer for {key!r}: {value!r}") from exc
    return params


def _csv_text(rows, columns) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns))
    writer.writeheader()
    for row in rows:
        writer.writerow({column: row.get(column, "") for column in columns})
    return buffer.getvalue()


def _format_user_error(exc: Exception) -> str:
    if isinstance(exc, KeyError) and exc.args:
        return str(exc.args[0])
    return str(exc)


if __name__ == "__main__":
    main()
