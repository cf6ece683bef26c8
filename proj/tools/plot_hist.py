#!/usr/bin/env python3
"""Render a plot-data CSV (columns i,j,<a>,<b>) as side-by-side heatmaps."""

import argparse
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_hist(path):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    if len(header) != 4 or header[:2] != ["i", "j"]:
        raise ValueError(f"{path}: expected header i,j,<a>,<b>, got {','.join(header)}")
    data = np.array(rows)
    n_i = int(data[:, 0].max()) + 1
    n_j = int(data[:, 1].max()) + 1
    grids = []
    for col in (2, 3):
        g = np.zeros((n_i, n_j))
        g[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, col]
        grids.append(g)
    return header[2:], grids


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("csv")
    ap.add_argument("-o", "--out", required=True, help="output image (png, pdf, ...)")
    args = ap.parse_args(argv)

    names, grids = read_hist(args.csv)
    vmax = max(g.max() for g in grids) or 1.0
    fig, axes = plt.subplots(1, 2, figsize=(9, 4), constrained_layout=True)
    for ax, name, g in zip(axes, names, grids):
        im = ax.imshow(g.T, origin="lower", cmap="viridis", vmin=0, vmax=vmax)
        ax.set_title(name)
        ax.set_xlabel("dim 0")
        ax.set_ylabel("dim 1")
    fig.colorbar(im, ax=axes, shrink=0.8)
    fig.savefig(args.out, dpi=120)
    return 0


if __name__ == "__main__":
    sys.exit(main())
