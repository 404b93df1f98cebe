"""Write a procedural mini-corpus of wigs on the default scalp as .hair files."""
import argparse
from pathlib import Path

import numpy as np

from permhair import hair_io, model, synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="corpus", help="output directory")
    ap.add_argument("--wigs", type=int, default=20)
    ap.add_argument("--strands", type=int, default=400, help="strands per wig")
    ap.add_argument("--points", type=int, default=hair_io.DEFAULT_POINTS)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    out = Path(args.out)
    wigs = synthetic.make_corpus(args.wigs, args.strands, rng, args.points)
    for i, wig in enumerate(wigs):
        model.atomic_write(out / f"wig_{i:04d}.hair", hair_io.write_hair_binary(wig))
    print(f"wrote {len(wigs)} wigs x {args.strands} strands to {out}")


if __name__ == "__main__":
    main()
