"""Frequency-domain PCA against plain spatial PCA at equal coefficient counts.

Either fits both codecs on hair files given with ``--in`` (held-out split by
file) or on a generated corpus.
"""
import argparse
from pathlib import Path

import numpy as np

from permhair import codec, hair_io, metrics, synthetic


def load(paths, L):
    files = []
    for p in map(Path, paths):
        files += sorted(p.glob("*.hair")) + sorted(p.glob("*.data")) if p.is_dir() else [p]
    return [hair_io.resample_model(hair_io.read_hair(f), L).points for f in files]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--in", dest="input", nargs="*", default=[], help="hair files or directories")
    ap.add_argument("--wigs", type=int, default=40)
    ap.add_argument("--strands", type=int, default=200)
    ap.add_argument("--points", type=int, default=hair_io.DEFAULT_POINTS)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if args.input:
        wigs = load(args.input, args.points)
    else:
        wigs = [w.points for w in synthetic.make_corpus(args.wigs, args.strands,
                                                        np.random.default_rng(args.seed), args.points)]
    cut = max(1, len(wigs) * 4 // 5)
    train, test = np.concatenate(wigs[:cut]), np.concatenate(wigs[cut:] or wigs[-1:])
    print("coeffs frequency_pos_err spatial_pos_err frequency_curv_err spatial_curv_err")
    for n in (5, 10, 15, 30, 64):
        fb = codec.fit_basis(train, n)
        sb = codec.fit_spatial_basis(train, n)
        rf = codec.decode(codec.encode(test, fb), fb)
        rs = sb.decode(sb.encode(test))
        print(f"{n} {metrics.position_error(rf, test):.6f} {metrics.position_error(rs, test):.6f} "
              f"{metrics.curvature_error(rf, test):.6f} {metrics.curvature_error(rs, test):.6f}")


if __name__ == "__main__":
    main()
