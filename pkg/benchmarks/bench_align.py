"""Time the compiled alignment kernel against the pure-Python fallback.

Workload mirrors the mining stage: short collapsed queries scored against a
corpus of longer collapsed utterances. Both backends are imported directly,
so the result does not depend on which one `vpkl.align` picked at import.

Usage:
    python3 benchmarks/bench_align.py [--pairs 20000] [--query-len 8]
        [--utt-len 40] [--codebook 100] [--seed 0]
"""

import argparse
import time

import numpy as np

from vpkl.align import _dp_py
from vpkl.mining import AlignmentParams

try:
    from vpkl.align import _dp
except ImportError:
    _dp = None


def make_workload(args):
    rng = np.random.default_rng(args.seed)

    def collapsed(length):
        # runs collapse to distinct neighbours, like real unit sequences
        seq = [int(rng.integers(args.codebook))]
        while len(seq) < length:
            nxt = int(rng.integers(args.codebook))
            if nxt != seq[-1]:
                seq.append(nxt)
        return np.array(seq, dtype=np.int32)

    queries = [collapsed(args.query_len) for _ in range(50)]
    utts = [collapsed(args.utt_len) for _ in range(200)]
    pairs = [(queries[int(rng.integers(len(queries)))],
              utts[int(rng.integers(len(utts)))])
             for _ in range(args.pairs)]
    return pairs


def run(kernel, pairs, p):
    start = time.perf_counter()
    total = 0.0
    for q, u in pairs:
        total += kernel(q, u, p.match_score, p.mismatch_penalty, p.gap_penalty)
    return time.perf_counter() - start, total


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=20000)
    parser.add_argument("--query-len", type=int, default=8)
    parser.add_argument("--utt-len", type=int, default=40)
    parser.add_argument("--codebook", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    pairs = make_workload(args)
    p = AlignmentParams()

    backends = {"python": _dp_py.semiglobal_score}
    if _dp is not None:
        backends["cython"] = _dp.semiglobal_score
    else:
        print("compiled backend unavailable; timing fallback only")

    # correctness gate: a benchmark of disagreeing kernels is meaningless
    sums = {}
    times = {}
    for name, kernel in backends.items():
        run(kernel, pairs[:200], p)  # warm up
        times[name], sums[name] = run(kernel, pairs, p)
    if len(sums) == 2 and sums["python"] != sums["cython"]:
        raise SystemExit("backends disagree on the workload; aborting")

    print(f"{args.pairs} alignments, query len {args.query_len}, "
          f"utterance len {args.utt_len}")
    for name in sorted(times):
        per_call = 1e6 * times[name] / args.pairs
        print(f"  {name:7s} {times[name]:8.3f}s total  {per_call:8.2f}us/call")
    if len(times) == 2:
        print(f"  speedup {times['python'] / times['cython']:.1f}x")


if __name__ == "__main__":
    main()
