"""Fit an S-EPGP to 50 samples of a harmonic function and report the RMSE
over the full 64x64 grid.

Run: python demos/laplace_fit.py [--seed 0] [--epochs 3000]
"""

import argparse

import numpy as np

import epgp
from epgp import truth


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=3000)
    args = ap.parse_args()

    spec = epgp.get_system("laplace2d")
    field = truth.laplace2d_fd(64)
    data = truth.sample_dataset(field, 50, args.seed)

    # 8 complex spectral points per variety
    theta = epgp.init_params(spec, 8, args.seed, scale=1 / np.sqrt(2), complex_points=True)
    config = epgp.TrainConfig(epochs=args.epochs, lrs={g: 1e-2 for g in ("spectral", "sigma", "noise")},
                              schedule=epgp.Schedule("step", 3000, 0.1))
    theta, trace = epgp.train(spec, theta, data, config)

    mean = epgp.posterior(spec, theta, data, field.points()).mean
    err = np.sqrt(np.mean((mean - field.flat_values()) ** 2))
    print(f"nlml {trace[0].nlml:.1f} -> {trace[-1].nlml:.1f}")
    print(f"grid RMSE {err:.3g}")


if __name__ == "__main__":
    main()
