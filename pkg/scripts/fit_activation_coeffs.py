#!/usr/bin/env python3
"""Regenerate src/heplan/data/activations.json.

Fits degree-2/4/8 polynomials to ReLU on [-8, 8] by least squares on a
dense grid and rewrites the shipped coefficient file. Run from the repo
root after changing the fitting range or degrees.
"""

import json
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent.parent / "src/heplan/data/activations.json"
LO, HI, POINTS = -8.0, 8.0, 4001
DEGREES = (2, 4, 8)


def fit(degree: int) -> list[float]:
    xs = np.linspace(LO, HI, POINTS)
    ys = np.maximum(xs, 0.0)
    vand = np.vander(xs, degree + 1, increasing=True)
    coef, *_ = np.linalg.lstsq(vand, ys, rcond=None)
    return [round(float(c), 12) for c in coef]


def main():
    doc = {
        "fit": f"least squares vs relu on [{LO:g}, {HI:g}], {POINTS}-point grid",
        "coefficients": {str(d): fit(d) for d in DEGREES},
    }
    OUT.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
