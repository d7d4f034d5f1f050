#!/usr/bin/env python3
"""Independent brute-force ATE reference.

Reads two trajectory files (TUM text format: timestamp tx ty tz qx qy qz qw),
associates poses by nearest timestamp with plain nested loops, aligns the
estimated positions to the reference with Horn's closed-form quaternion
method (eigenvector of the 4x4 correlation matrix), and prints the RMSE of
the residual translations.

Deliberately shares no code with the library: it exists to cross-check the
library's SVD-based alignment.
"""

import argparse
import sys

import numpy as np

MAX_GAP = 0.02


def read_positions(path):
    stamps, positions = [], []
    for line in open(path):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        vals = [float(v) for v in line.split()]
        stamps.append(vals[0])
        positions.append(vals[1:4])
    return np.array(stamps), np.array(positions)


def associate(ts_a, ts_b, max_gap=MAX_GAP):
    pairs = []
    used = set()
    for i in range(len(ts_a)):
        best, best_gap = -1, max_gap
        for k in range(len(ts_b)):
            gap = abs(ts_b[k] - ts_a[i])
            if gap <= best_gap:
                best, best_gap = k, gap
        if best >= 0 and best not in used:
            used.add(best)
            pairs.append((i, best))
    return pairs


def horn_align(a, b):
    """Rotation + translation minimizing sum ||R a + t - b||^2 via the unit
    quaternion maximizing q^T N q (Horn 1987)."""
    ca, cb = a.mean(axis=0), b.mean(axis=0)
    aa, bb = a - ca, b - cb
    s = aa.T @ bb
    sxx, sxy, sxz = s[0]
    syx, syy, syz = s[1]
    szx, szy, szz = s[2]
    n = np.array(
        [
            [sxx + syy + szz, syz - szy, szx - sxz, sxy - syx],
            [syz - szy, sxx - syy - szz, sxy + syx, szx + sxz],
            [szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy],
            [sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz],
        ]
    )
    vals, vecs = np.linalg.eigh(n)
    w, x, y, z = vecs[:, np.argmax(vals)]
    rot = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    return rot, cb - rot @ ca


def ate(est_path, ref_path):
    ts_e, pos_e = read_positions(est_path)
    ts_r, pos_r = read_positions(ref_path)
    pairs = associate(ts_e, ts_r)
    if len(pairs) < 2:
        raise SystemExit("error: fewer than 2 associable pose pairs")
    a = pos_e[[i for i, _ in pairs]]
    b = pos_r[[k for _, k in pairs]]
    rot, t = horn_align(a, b)
    resid = a @ rot.T + t - b
    return float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("est")
    parser.add_argument("ref")
    args = parser.parse_args(argv)
    print(f"{ate(args.est, args.ref):.12g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
