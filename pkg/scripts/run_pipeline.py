"""End-to-end CLI chain on a generated mini-corpus.

convert -> fit-basis -> bake -> fit-texture -> fit-spaces -> fit-upsampler ->
parameterize -> synth -> eval, all through ``permhair.cli.run`` so the same
code paths as the installed command are exercised.
"""
import argparse
import sys
import time
from pathlib import Path

import numpy as np

from permhair import hair_io, model, synthetic
from permhair.cli import run


def step(*argv):
    t = time.perf_counter()
    code = run([str(a) for a in argv])
    print(f"# {argv[0]} exit={code} {time.perf_counter() - t:.1f}s", flush=True)
    if code:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", default="pipeline_run", help="scratch directory")
    ap.add_argument("--wigs", type=int, default=60)
    ap.add_argument("--strands", type=int, default=300)
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--epsilon", type=float, default=0.04)
    ap.add_argument("--dim", type=int, default=48)
    ap.add_argument("--texture-iters", type=int, default=100)
    ap.add_argument("--warmup", type=int, default=100)
    ap.add_argument("--joint", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    work = Path(args.work)
    raw, wigs, tex, assets = work / "raw", work / "wigs", work / "textures", work / "assets"
    rng = np.random.default_rng(args.seed)
    for i, wig in enumerate(synthetic.make_corpus(args.wigs + 1, args.strands, rng)):
        model.atomic_write(raw / f"wig_{i:04d}.data", hair_io.write_data_file(wig))
    files = sorted(raw.glob("*.data"))
    for f in files:
        step("convert", "--in", f, "--out", wigs / (f.stem + ".hair"))
    held_out = wigs / (files[-1].stem + ".hair")
    train = sorted(wigs.glob("*.hair"))[:-1]

    step("fit-basis", "--in", *train, "--out", work / "basis.psb")
    grid = ["--resolution", args.resolution, "--epsilon", args.epsilon]
    for f in train:
        step("bake", "--in", f, "--basis", work / "basis.psb", *grid, "--out", tex / (f.stem + ".pgt"))
    step("fit-texture", "--in", train[0], "--basis", work / "basis.psb", *grid,
         "--texture-iters", args.texture_iters, "--out", tex / (train[0].stem + ".pgt"))
    step("fit-spaces", "--in", tex, "--out", assets, "--dim", args.dim, "--basis", work / "basis.psb")
    step("fit-upsampler", "--in", tex, "--out", assets)
    step("parameterize", "--assets", assets, "--in", held_out, "--epsilon", args.epsilon,
         "--texture-iters", args.texture_iters, "--warmup", args.warmup, "--joint", args.joint,
         "--out", work / "fit.ppr", "--trace", work / "fit_trace.txt")
    step("synth", "--assets", assets, "--params", work / "fit.ppr", "--roots-from", held_out,
         "--out", work / "recon.hair")
    step("eval", "--pred", work / "recon.hair", "--gt", held_out)


if __name__ == "__main__":
    main()
