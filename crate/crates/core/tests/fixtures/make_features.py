"""Regenerate the feature-batch fixtures and their expected NT-Xent losses.

Rows are unit vectors in pair-adjacent order (rows 2k and 2k+1 are two views
of sample k), matching the trainer's export format.
"""
import json

import numpy as np


def nt_xent(z, tau):
    z = z / np.linalg.norm(z, axis=1, keepdims=True)
    s = z @ z.T / tau
    n = len(z)
    losses = []
    for i in range(n):
        others = [k for k in range(n) if k != i]
        losses.append(-s[i, i ^ 1] + np.log(np.sum(np.exp(s[i, others]))))
    return float(np.mean(losses))


def main():
    rng = np.random.default_rng(2024)
    expected = {}
    for name, pairs, dim in [("features_batch16", 16, 8), ("features_batch4", 4, 3)]:
        base = rng.normal(size=(pairs, dim))
        views = np.repeat(base, 2, axis=0) + 0.3 * rng.normal(size=(2 * pairs, dim))
        z = views / np.linalg.norm(views, axis=1, keepdims=True)
        header = ",".join(f"f{k}" for k in range(dim))
        np.savetxt(f"{name}.csv", z, delimiter=",", header=header, comments="", fmt="%.17g")
        expected[name] = {tau: nt_xent(z, tau) for tau in (0.1, 0.5, 1.0)}
    with open("features_expected.json", "w") as f:
        json.dump({k: {str(t): v for t, v in d.items()} for k, d in expected.items()}, f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
