"""Cumulative explained variance and truncation error of the strand basis.

Prints one row per retained-coefficient count: the variance fraction on the
training corpus and the mean position error on held-out strands.
"""
import argparse

import numpy as np

from permhair import codec, hair_io, metrics, synthetic


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--wigs", type=int, default=40)
    ap.add_argument("--strands", type=int, default=200)
    ap.add_argument("--coeffs", type=int, default=64)
    ap.add_argument("--points", type=int, default=hair_io.DEFAULT_POINTS)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    train = synthetic.corpus_strands(synthetic.make_corpus(args.wigs, args.strands, rng, args.points))
    test = synthetic.corpus_strands(synthetic.make_corpus(max(args.wigs // 4, 1), args.strands, rng, args.points))
    basis = codec.fit_basis(train, args.coeffs)
    curve = codec.explained_variance_curve(basis)
    g = codec.encode(test, basis)
    print("n cumulative_variance heldout_position_error")
    for n in sorted({1, 2, 5, 10, 15, 20, 30, 40, 50, args.coeffs} & set(range(1, args.coeffs + 1))):
        err = metrics.position_error(codec.decode(codec.truncate(g, n), basis), test)
        print(f"{n} {curve[n - 1]:.6f} {err:.6f}")


if __name__ == "__main__":
    main()
