"""Learn a Maxwell solution from electric-field observations only and
compare the inferred magnetic field with the truth.

E constrains B only up to slowly varying magnetic modes: a low-frequency
standing wave has a tiny electric field but an almost static magnetic one.
Expect the inferred B to be several times less accurate than the fitted E.

Run: python demos/maxwell_infer_b.py [--epochs 3000] [--points 1000]
"""

import argparse

import numpy as np

import epgp
from epgp import truth


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=3000)
    ap.add_argument("--points", type=int, default=1000)
    args = ap.parse_args()

    spec = epgp.get_system("maxwell")
    field = truth.maxwell_planewaves()
    data = truth.sample_dataset(field, args.points, args.seed, components=[0, 1, 2])

    theta = epgp.init_params(spec, 8, args.seed, log_noise=np.log(0.1))
    config = epgp.TrainConfig(epochs=args.epochs, lrs={g: 1e-2 for g in ("spectral", "sigma", "noise")})
    theta, _ = epgp.train(spec, theta, data, config)

    mean = epgp.posterior(spec, theta, data, field.points()).mean
    true = field.flat_values()
    for label, cols in (("E (observed)", slice(0, 3)), ("B (inferred)", slice(3, 6))):
        err = np.sqrt(np.mean((mean[:, cols] - true[:, cols]) ** 2))
        scale = np.sqrt(np.mean(true[:, cols] ** 2))
        print(f"{label}: RMSE {err:.3g} (field RMS {scale:.3g})")


if __name__ == "__main__":
    main()
