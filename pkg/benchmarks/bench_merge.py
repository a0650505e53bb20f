"""Compare the compiled and pure Python k-way merge kernels.

    python benchmarks/bench_merge.py [--items 1000000] [--runs 4 16 64] [--repeat 3]

Merges in-memory sorted lists (kernel cost only) and stream files of int64
items (the cost a sorter actually pays).
"""
import argparse
import random
import tempfile
import time

from empipe import kernels
from empipe.nodes.sorting import stream_config
from empipe.stream_io import open_stream


def make_runs(total, k, seed=0):
    rng = random.Random(seed)
    per = total // k
    return [sorted(rng.randrange(1 << 62) for _ in range(per)) for _ in range(k)]


def best_of(repeat, fn):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def drain(it):
    for _ in it:
        pass


def bench_lists(runs, repeat):
    out = {}
    for name, merge in (("python", kernels.py_merge), ("cython", kernels.compiled_merge)):
        if merge is not None:
            out[name] = best_of(repeat, lambda: drain(merge(runs)))
    return out


def bench_streams(runs, repeat, tmpdir):
    config = stream_config("<q", 4096)
    paths = []
    for i, run in enumerate(runs):
        path = f"{tmpdir}/run{i}"
        with open_stream(path, "write", config, "<q") as s:
            s.write_items(run)
        paths.append(path)

    def once(merge):
        streams = [open_stream(p, "read", config, "<q") for p in paths]
        try:
            drain(merge(streams))
        finally:
            for s in streams:
                s.close()

    out = {}
    for name, merge in (("python", kernels.py_merge), ("cython", kernels.compiled_merge)):
        if merge is not None:
            out[name] = best_of(repeat, lambda: once(merge))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--items", type=int, default=1_000_000)
    ap.add_argument("--runs", type=int, nargs="+", default=[4, 16, 64])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if kernels.compiled_merge is None:
        print("compiled kernel not built; timing the pure Python merge only")
    print(f"{'source':<8} {'runs':>5} {'items':>9} {'python s':>9} {'cython s':>9} {'speedup':>8}")
    with tempfile.TemporaryDirectory() as tmpdir:
        for k in args.runs:
            runs = make_runs(args.items, k, seed=k)
            n = sum(map(len, runs))
            for label, t in (("lists", bench_lists(runs, args.repeat)),
                             ("streams", bench_streams(runs, args.repeat, tmpdir))):
                cy = t.get("cython")
                speed = f"{t['python'] / cy:7.2f}x" if cy else "      -"
                cys = f"{cy:9.3f}" if cy else "        -"
                print(f"{label:<8} {k:>5} {n:>9} {t['python']:9.3f} {cys} {speed}")


if __name__ == "__main__":
    main()
