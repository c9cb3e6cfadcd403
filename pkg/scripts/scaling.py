"""Per-iteration sampling time against chain length for the oracle and network scores."""

import argparse
import time

import numpy as np

from scorefold.conditioning import assemble
from scorefold.geometry import Structure
from scorefold.io import emit_csv
from scorefold.noise import geometric_schedule
from scorefold.sampler import SamplerConfig, anneal_sample
from scorefold.score import NetScore, oracle_score
from scorefold.training import make_net


def seconds_per_iteration(model, L, iterations, repeats):
    bundle = assemble("A" * L)
    cfg = SamplerConfig(iterations=iterations, decoys=1)
    best = np.inf
    for r in range(repeats):
        t0 = time.perf_counter()
        anneal_sample(model, bundle, cfg, seed=r)
        best = min(best, (time.perf_counter() - t0) / (iterations * len(cfg.schedule)))
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lengths", default="32,64,128,256")
    ap.add_argument("--out", default="scaling.csv")
    args = ap.parse_args()
    lengths = [int(x) for x in args.lengths.split(",")]
    schedule = geometric_schedule()
    rows = []
    for L in lengths:
        native = Structure("A" * L, np.random.default_rng(L).normal(size=(L, 3)) * 10)
        rows.append({"score": "oracle", "length": L,
                     "seconds": seconds_per_iteration(oracle_score(native, schedule), L, 64, 3)})
        rows.append({"score": "network", "length": L,
                     "seconds": seconds_per_iteration(NetScore(make_net(), schedule), L, 1, 2)})
    emit_csv(rows, args.out)
    for kind in ("oracle", "network"):
        t = [r["seconds"] for r in rows if r["score"] == kind]
        slope = np.polyfit(np.log(lengths), np.log(t), 1)[0]
        print(f"{kind}: exponent {slope:.2f}")


if __name__ == "__main__":
    main()
