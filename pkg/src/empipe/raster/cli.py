"""``raster-demo``: transform a generated raster and report item I/O.

    raster-demo [run] --width 1024 --height 1024 --transform transpose --mode both
    raster-demo plan --width 64 --height 64

Exit status: 0 on success, 2 on invalid input, 3 on I/O errors.
"""
import argparse
import logging
import os
import shutil
import sys
import tempfile

from .. import memory
from ..errors import EmpipeError
from ..executor import TextProgress
from ..flow_graph import format_plan
from ..stream_io import BlockConfig, reset_counters, snapshot_counters
from .pipeline import plan_pipelined, run_materialized, run_pipelined
from .raster import TRANSFORMS, Raster, TransformFn, random_cells, read_cells, \
    transform_in_memory, write_raster
from .report import format_text, format_tsv, io_report

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 2, 3
DEFAULT_MEMORY = 4 << 20

log = logging.getLogger("raster-demo")


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return value


def _common(p):
    p.add_argument("--width", type=_positive, default=1024)
    p.add_argument("--height", type=_positive, default=1024)
    p.add_argument("--transform", choices=TRANSFORMS, default="transpose")
    p.add_argument("--seed", type=int, default=0, help="seeds cell values and block-shuffle")
    p.add_argument("--block-size", type=_positive, default=4096, help="items per block")
    p.add_argument("--memory", type=_positive, default=DEFAULT_MEMORY,
                   help="memory limit in bytes (default 4 MiB)")
    p.add_argument("--tmpdir", default=None, help="directory for temporary streams")


def build_parser():
    parser = argparse.ArgumentParser(prog="raster-demo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="transform and report I/O (default)")
    _common(run)
    run.add_argument("--mode", choices=("pipelined", "materialized", "both"), default="both")
    run.add_argument("--timedb", default=None, help="execution time database file")
    run.add_argument("--report", choices=("text", "tsv"), default="text")
    run.add_argument("--output", default=None, help="keep the output raster stream here")
    run.add_argument("--verify", action="store_true",
                     help="check the output against direct in-memory evaluation")
    run.add_argument("--no-progress", action="store_true")
    plan = sub.add_parser("plan", help="print phases, orders and memory without running")
    _common(plan)
    return parser


def _parse(argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0] not in ("run", "plan", "-h", "--help"):
        argv.insert(0, "run")
    return build_parser().parse_args(argv)


def _setup(args):
    config = BlockConfig(args.block_size, args.memory, 4)
    memory.set_memory_limit(args.memory)
    return config


def _plan(args, config, workdir):
    a = Raster(args.width, args.height, os.path.join(workdir, "A.ems"))
    f = TransformFn(args.transform, args.width, args.height, args.seed)
    graph, plan = plan_pipelined(a, Raster(*f.output_dims, os.path.join(workdir, "B.ems")), f,
                                 config)
    sys.stdout.write(format_plan(plan, graph))
    return EXIT_OK


def _run(args, config, workdir):
    width, height = args.width, args.height
    n = width * height
    cells = random_cells(n, args.seed)
    a = write_raster(os.path.join(workdir, "A.ems"), width, height, cells, args.block_size)
    f = TransformFn(args.transform, width, height, args.seed)
    modes = ["materialized", "pipelined"] if args.mode == "both" else [args.mode]
    reports, outputs = [], {}
    for mode in modes:
        out_path = os.path.join(workdir, f"B-{mode}.ems")
        before = snapshot_counters()
        if mode == "materialized":
            b = run_materialized(a, out_path, f, config, workdir)
        else:
            progress = None if args.no_progress else TextProgress()
            b, _ = run_pipelined(a, out_path, f, config, workdir, progress=progress,
                                 timedb=args.timedb)
        reports.append(io_report(before, snapshot_counters(), n, mode))
        outputs[mode] = b
    result = EXIT_OK
    if args.verify or len(outputs) == 2:
        values = {mode: read_cells(b, args.block_size) for mode, b in outputs.items()}
        if len(values) == 2 and values["materialized"] != values["pipelined"]:
            log.error("materialized and pipelined outputs differ")
            result = EXIT_INVALID
        if args.verify:
            expected = transform_in_memory(cells, width, height, f, f.output_dims)
            for mode, got in values.items():
                if got != expected:
                    log.error("%s output differs from direct evaluation", mode)
                    result = EXIT_INVALID
    if args.output:
        shutil.copyfile(outputs[modes[-1]].path, args.output)
    text = format_tsv(reports) if args.report == "tsv" else format_text(reports)
    sys.stdout.write(text)
    return result


def _exit_code(exc):
    while exc is not None:
        if isinstance(exc, OSError):
            return EXIT_IO
        exc = exc.__cause__
    return EXIT_INVALID


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="raster-demo: %(message)s")
    args = _parse(argv)
    try:
        config = _setup(args)
        workdir = tempfile.mkdtemp(prefix="raster-demo-", dir=args.tmpdir)
    except (ValueError, EmpipeError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    try:
        reset_counters()
        if args.command == "plan":
            return _plan(args, config, workdir)
        return _run(args, config, workdir)
    except (EmpipeError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return _exit_code(exc)
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
