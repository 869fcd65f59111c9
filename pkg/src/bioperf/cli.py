"""Command-line front end: serve, run, analyze, and tree subcommands.

Exit codes: 0 on success, 1 on runtime/network failures (unreachable or
unbindable server, incomplete run), 2 on input validation failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import os
import re
import sys
import threading
from pathlib import Path

from . import __version__, estimators, flow_metrics, harness, path_matrix, phylo
from .errors import HarnessError, ValidationError

OUT_DIR_ENV = "BIOPERF_OUT_DIR"

METHOD_BIO = "bio"
METHOD_LITTLES = "littles"
METHOD_BOTH = "both"


def _resolve_out_dir(explicit: str | None) -> Path | None:
    """Pick the artifact directory: the environment override wins over
    the command-line flag; either is created on demand."""
    raw = os.environ.get(OUT_DIR_ENV) or explicit
    if raw is None:
        return None
    out_dir = Path(raw)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _slug(label: str) -> str:
    slug = re.sub(r"[^A-Za-z0-9]+", "_", label).strip("_").lower()
    return slug or "run"


def _resolve_ports(mode: str, port: int | None, file_port: int | None) -> tuple[int, int]:
    """--port addresses the protocol a single-protocol mode serves; in
    both mode it is the chat port and --file-port the file port."""
    chat = harness.DEFAULT_CHAT_PORT
    file = harness.DEFAULT_FILE_PORT
    if mode == harness.MODE_FILE:
        if port is not None:
            file = port
    elif port is not None:
        chat = port
    if file_port is not None:
        file = file_port
    return chat, file


# --- serve -------------------------------------------------------------------


def _serve_wait(server: harness.TrafficServer) -> None:
    """Block until interrupted; split out so tests can stub it."""
    threading.Event().wait()


def cmd_serve(args: argparse.Namespace) -> int:
    chat_port, file_port = _resolve_ports(args.mode, args.port, args.file_port)
    try:
        server = harness.TrafficServer(
            args.mode, args.host, chat_port=chat_port, file_port=file_port
        ).start()
    except OSError as exc:
        print(f"error: cannot bind: {exc}", file=sys.stderr)
        return 1
    labels = {"chat": "chat", "file": "file_transfer"}
    for kind, (host, port) in sorted(server.addresses().items()):
        print(f"{labels[kind]} listening on {host}:{port}")
    print("serving; press Ctrl-C to stop", flush=True)
    try:
        _serve_wait(server)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    print("stopped")
    return 0


# --- run ---------------------------------------------------------------------


def _format_value(value) -> str:
    return f"{value:.1f}" if isinstance(value, float) else str(value)


def _factors_text(factors: flow_metrics.FlowFactors,
                  rates: flow_metrics.DerivedRates) -> str:
    pairs = [(flow_metrics.RUN_COLUMN, factors.run_label)]
    pairs += [
        (column, getattr(factors, name))
        for name, column in flow_metrics.FACTOR_COLUMNS.items()
    ]
    pairs += [
        (column, getattr(rates, name))
        for name, column in flow_metrics.RATE_COLUMNS.items()
    ]
    width = max(len(column) for column, _ in pairs)
    return "\n".join(f"{column.ljust(width)}  {_format_value(value)}" for column, value in pairs)


def cmd_run(args: argparse.Namespace) -> int:
    chat_port, file_port = _resolve_ports(args.mode, args.port, args.file_port)
    workload = harness.Workload(
        client_count=args.clients,
        message_count=args.messages,
        message_size=args.payload,
        file_size=args.file_size,
        chunk_size=args.chunk_size,
        seed=args.seed,
    )
    record = harness.run_client(
        args.mode, host=args.host, chat_port=chat_port, file_port=file_port,
        workload=workload, run_label=args.label,
    )
    print(_factors_text(record.factors, flow_metrics.derive(record.factors)))
    out_dir = _resolve_out_dir(args.out) or Path(".")
    slug = _slug(record.run_label)
    run_path = out_dir / f"{slug}.run.json"
    harness.save_run_record(record, run_path)
    csv_path = out_dir / f"{slug}.factors.csv"
    flow_metrics.write_factors_csv(csv_path, [record.factors], include_rates=True)
    print(f"wrote {run_path}")
    print(f"wrote {csv_path}")
    if not record.complete:
        print("error: one or more sessions did not complete cleanly", file=sys.stderr)
        return 1
    return 0


# --- analyze -------------------------------------------------------------------


def _load_rows(inputs) -> list[flow_metrics.FactorsRow]:
    rows: list[flow_metrics.FactorsRow] = []
    for raw in inputs:
        path = Path(raw)
        if not path.is_file():
            raise ValidationError(f"{path}: no such file")
        if path.suffix == ".json":
            record = harness.load_run_record(path)
            record.factors.validate()
            rows.append(flow_metrics.FactorsRow(record.factors))
        elif path.suffix == ".csv":
            rows.extend(flow_metrics.read_factors_csv(path))
        else:
            raise ValidationError(f"{path}: expected a .csv factors table or .json run record")
    if not rows:
        raise ValidationError("no runs found in the inputs")
    return rows


def _named_inputs(rows) -> dict:
    named = {}
    for i, row in enumerate(rows):
        label = row.factors.run_label
        if label in named:
            label = f"{label}#{i + 1}"
        named[label] = row.effective_rates()
    return named


def _csv_text(rows) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerows(rows)
    return buffer.getvalue().rstrip("\n")


def _render_analysis(method: str, fmt: str, rows) -> str:
    rates = [row.effective_rates() for row in rows]
    bio = estimators.bio_utilization(rates) if method in (METHOD_BIO, METHOD_BOTH) else None
    littles = (
        estimators.littles_from_runs(rates) if method in (METHOD_LITTLES, METHOD_BOTH) else None
    )
    if method == METHOD_BOTH:
        report = estimators.compare(bio, littles)
        if fmt == "text":
            return estimators.comparison_text(report)
        if fmt == "json":
            payload = estimators.comparison_to_dict(report, inputs=_named_inputs(rows))
            return json.dumps(payload, indent=2)
        return _csv_text(
            [estimators._COMPARISON_HEADER, *estimators._comparison_rows(report)]
        )
    if fmt == "text":
        return estimators.bio_text(bio) if method == METHOD_BIO else estimators.littles_text(littles)
    data = estimators.bio_to_dict(bio) if method == METHOD_BIO else estimators.littles_to_dict(littles)
    if fmt == "json":
        return json.dumps({method: data}, indent=2)
    return _csv_text([("metric", "value"), *[
        (key, "" if value is None else value) for key, value in data.items()
    ]])


_REPORT_EXTENSIONS = {"text": "txt", "csv": "csv", "json": "json"}


def cmd_analyze(args: argparse.Namespace) -> int:
    rows = _load_rows(args.inputs)
    rendered = _render_analysis(args.method, args.format, rows)
    out_dir = _resolve_out_dir(args.out)
    if out_dir is None:
        print(rendered)
    else:
        report_path = out_dir / f"report.{_REPORT_EXTENSIONS[args.format]}"
        report_path.write_text(rendered + "\n", encoding="utf-8")
        print(f"wrote {report_path}")
    return 0


# --- tree ----------------------------------------------------------------------


def _parse_pairs(raw_pairs) -> list[tuple[str, str]]:
    pairs = []
    for raw in raw_pairs:
        parts = [p.strip() for p in raw.split(",")]
        if len(parts) != 2 or not all(parts):
            raise ValidationError(f"--pairs needs two comma-separated leaf labels, got {raw!r}")
        pairs.append((parts[0], parts[1]))
    return pairs


def _matrix_text(matrix: path_matrix.IncidenceMatrix, corner: str = "R") -> str:
    rows = [[corner, *matrix.path_labels]]
    rows += [
        [label, *(str(v) for v in row)]
        for label, row in zip(matrix.link_labels, matrix.entries)
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for row in rows:
        cells = [row[0].ljust(widths[0])]
        cells += [row[i].rjust(widths[i]) for i in range(1, len(row))]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)


def cmd_tree(args: argparse.Namespace) -> int:
    if args.distances is None and args.paths_file is None:
        raise ValidationError("tree needs --distances and/or --paths-file")
    tree = None
    if args.distances is not None:
        dm = phylo.read_distance_csv(args.distances)
        tree = phylo.nj_build(dm)
        print(tree.to_newick())
        if tree.negative_branches_clamped:
            print("note: negative branch length(s) clamped to zero", file=sys.stderr)

    matrix = None
    if args.paths_file is not None:
        with open(args.paths_file, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{args.paths_file}: invalid JSON ({exc})") from None
        links, paths = path_matrix.read_paths_json(data)
        matrix = path_matrix.incidence_from_paths(links, paths)
    elif tree is not None:
        if args.pairs:
            endpoints = _parse_pairs(args.pairs)
        else:
            endpoints = list(itertools.combinations(tree.leaves, 2))
        matrix = path_matrix.build_incidence(tree, endpoints)

    if matrix is not None:
        print(_matrix_text(matrix, "R"))
        print(f"range R  = {{{', '.join(sorted(path_matrix.range_of(matrix)))}}}")
        print(f"domain R = {{{', '.join(sorted(path_matrix.domain_of(matrix)))}}}")

    out_dir = _resolve_out_dir(args.out)
    if out_dir is not None:
        if tree is not None:
            newick_path = out_dir / "tree.nwk"
            newick_path.write_text(tree.to_newick() + "\n", encoding="utf-8")
            print(f"wrote {newick_path}")
        if matrix is not None:
            r_path = out_dir / "incidence.csv"
            path_matrix.write_incidence_csv(matrix, r_path, corner="R")
            rt_path = out_dir / "incidence_t.csv"
            path_matrix.write_incidence_csv(
                path_matrix.transpose(matrix), rt_path, corner="R^T"
            )
            print(f"wrote {r_path}")
            print(f"wrote {rt_path}")
    return 0


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bioperf",
        description="Measure TCP application performance: drive loopback chat "
                    "and file-transfer workloads, derive flow factors, and "
                    "estimate utilization two independent ways.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="start the traffic server and block")
    serve_p.add_argument("--mode", choices=harness.MODES, default=harness.MODE_BOTH)
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=None,
                         help="chat port, or the file port in file_transfer mode")
    serve_p.add_argument("--file-port", type=int, default=None,
                         help="file-transfer port (both mode)")
    serve_p.set_defaults(func=cmd_serve)

    run_p = sub.add_parser("run", help="drive a workload against a running server")
    run_p.add_argument("--mode", choices=harness.MODES, default=harness.MODE_BOTH)
    run_p.add_argument("--host", default="127.0.0.1")
    run_p.add_argument("--port", type=int, default=None,
                       help="chat port, or the file port in file_transfer mode")
    run_p.add_argument("--file-port", type=int, default=None)
    run_p.add_argument("--clients", type=int, default=2, help="concurrent clients per protocol")
    run_p.add_argument("--messages", type=int, default=100, help="chat messages per client")
    run_p.add_argument("--payload", type=int, default=64, help="chat message payload bytes")
    run_p.add_argument("--file-size", type=int, default=65536, help="upload size per client")
    run_p.add_argument("--chunk-size", type=int, default=1024, help="upload chunk payload bytes")
    run_p.add_argument("--seed", type=int, default=42)
    run_p.add_argument("--label", default=None,
                       help="run label (default IRCD, FTP, or IRCD&FTP by mode)")
    run_p.add_argument("--out", default=".", help="artifact directory")
    run_p.set_defaults(func=cmd_run)

    analyze_p = sub.add_parser("analyze", help="estimate utilization from run artifacts")
    analyze_p.add_argument("inputs", nargs="+", metavar="FILE",
                           help="factors .csv tables and/or .run.json records")
    analyze_p.add_argument("--method", choices=(METHOD_BIO, METHOD_LITTLES, METHOD_BOTH),
                           default=METHOD_BOTH)
    analyze_p.add_argument("--format", choices=tuple(_REPORT_EXTENSIONS), default="text")
    analyze_p.add_argument("--out", default=None,
                           help="write report.<ext> here instead of stdout")
    analyze_p.set_defaults(func=cmd_analyze)

    tree_p = sub.add_parser("tree", help="infer a topology and its path/link incidence")
    tree_p.add_argument("--distances", default=None, metavar="CSV",
                        help="labeled pairwise distance matrix")
    tree_p.add_argument("--pairs", action="append", default=None, metavar="A,B",
                        help="endpoint pair for a path column (repeatable; "
                             "default: every unordered leaf pair)")
    tree_p.add_argument("--paths-file", default=None, metavar="JSON",
                        help="explicit link/path sets to use instead of tree-derived paths")
    tree_p.add_argument("--out", default=None, help="artifact directory")
    tree_p.set_defaults(func=cmd_tree)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
