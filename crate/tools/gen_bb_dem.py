#!/usr/bin/env python3
"""Generate correlated detector error models for bivariate bicycle codes.

Builds the depth-8 syndrome-extraction memory circuit for a BB code under
uniform depolarizing circuit-level noise (Z basis, `d` rounds, final data
measurement), with both X- and Z-type detectors, and writes the undecomposed
DEM together with an X/Z typing sidecar.

Usage:
    python3 tools/gen_bb_dem.py --code 72 --p 0.001 --out fixtures/bb72_p0.001.dem

Requires `stim` and `numpy`.
"""

import argparse
import sys
from functools import reduce

import numpy as np
import stim

CODES = {
    # n: (l, m, A x-powers, A y-powers, B x-powers, B y-powers, rounds)
    72: (6, 6, [3], [1, 2], [1, 2], [3], 6),
    90: (15, 3, [9], [1, 2], [2, 7], [0], 10),
    144: (12, 6, [3], [1, 2], [1, 2], [3], 12),
}


def circulant(size, shift):
    mat = np.zeros((size, size), dtype=int)
    for i in range(size):
        mat[i, (i + shift) % size] = 1
    return mat


def mat_pow(mat, power):
    out = np.identity(mat.shape[0], dtype=int)
    for _ in range(power):
        out = (out @ mat) % 2
    return out


def bb_code(l, m, ax, ay, bx, by):
    s_l = circulant(l, -1)
    s_m = circulant(m, -1)
    x = np.kron(s_l, np.identity(m, dtype=int))
    y = np.kron(np.identity(l, dtype=int), s_m)
    a_list = [mat_pow(x, p) for p in ax] + [mat_pow(y, p) for p in ay]
    b_list = [mat_pow(y, p) for p in by] + [mat_pow(x, p) for p in bx]
    a = reduce(lambda u, v: (u + v) % 2, a_list)
    b = reduce(lambda u, v: (u + v) % 2, b_list)
    hx = np.hstack((a, b))
    hz = np.hstack((b.T, a.T))
    return hx, hz, a_list, b_list


def gf2_rank(mat):
    mat = mat.copy() % 2
    rows, cols = mat.shape
    rank = 0
    for c in range(cols):
        pivot = None
        for r in range(rank, rows):
            if mat[r, c]:
                pivot = r
                break
        if pivot is None:
            continue
        mat[[rank, pivot]] = mat[[pivot, rank]]
        for r in range(rows):
            if r != rank and mat[r, c]:
                mat[r] ^= mat[rank]
        rank += 1
    return rank


def gf2_nullspace(mat):
    """Basis of the right null space of `mat` over GF(2)."""
    mat = mat.copy() % 2
    rows, cols = mat.shape
    pivots = []
    rank = 0
    for c in range(cols):
        pivot = None
        for r in range(rank, rows):
            if mat[r, c]:
                pivot = r
                break
        if pivot is None:
            continue
        mat[[rank, pivot]] = mat[[pivot, rank]]
        for r in range(rows):
            if r != rank and mat[r, c]:
                mat[r] ^= mat[rank]
        pivots.append(c)
        rank += 1
    free = [c for c in range(cols) if c not in pivots]
    basis = []
    for f in free:
        v = np.zeros(cols, dtype=int)
        v[f] = 1
        for i, pc in enumerate(pivots):
            if mat[i, f]:
                v[pc] = 1
        basis.append(v)
    return np.array(basis, dtype=int)


def z_logicals(hx, hz):
    """Z-type logical operators: kernel of hx modulo the row space of hz."""
    ker = gf2_nullspace(hx)
    logicals = []
    base = hz.copy()
    rank = gf2_rank(base)
    for v in ker:
        trial = np.vstack((base, v))
        r = gf2_rank(trial)
        if r > rank:
            logicals.append(v)
            base = trial
            rank = r
    return np.array(logicals, dtype=int)


def nnz_cols(mat):
    rows, cols = mat.nonzero()
    return cols[np.argsort(rows)]


def build_circuit(hx, hz, lz, a_list, b_list, p, num_repeat):
    n = hx.shape[1]
    half = n // 2
    a1, a2, a3 = (nnz_cols(m) for m in a_list)
    b1, b2, b3 = (nnz_cols(m) for m in b_list)
    a1_t, a2_t, a3_t = (nnz_cols(m.T) for m in a_list)
    b1_t, b2_t, b3_t = (nnz_cols(m.T) for m in b_list)

    x_off = 0
    l_off = half
    r_off = n
    z_off = 3 * half

    # Detector coordinates are (check index, 0, round, basis) with basis 0 = X, 1 = Z.
    def first_det(basis):
        return stim.Circuit(
            "".join(f"DETECTOR({i}, 0, 0, {basis}) rec[{-half + i}]\n" for i in range(half))
        )

    def repeat_det(basis):
        return stim.Circuit(
            "".join(
                f"DETECTOR({i}, 0, 0, {basis}) rec[{-half + i}] rec[{-n - half + i}]\n"
                for i in range(half)
            )
        )

    def cnot(c, ctrl, tgt):
        c.append("CNOT", [ctrl, tgt])
        c.append("DEPOLARIZE2", [ctrl, tgt], p)

    def append_blocks(c, repeat):
        if repeat:
            for i in range(half):
                c.append("X_ERROR", z_off + i, p)
                c.append("Z_ERROR", x_off + i, p)
                c.append("DEPOLARIZE1", r_off + i, p)
        else:
            for i in range(half):
                c.append("H", [x_off + i])
        for i in range(half):
            cnot(c, r_off + a1_t[i], z_off + i)
            c.append("DEPOLARIZE1", l_off + i, p)
        c.append("TICK")
        for i in range(half):
            cnot(c, x_off + i, l_off + a2[i])
            cnot(c, r_off + a3_t[i], z_off + i)
        c.append("TICK")
        for i in range(half):
            cnot(c, x_off + i, r_off + b2[i])
            cnot(c, l_off + b1_t[i], z_off + i)
        c.append("TICK")
        for i in range(half):
            cnot(c, x_off + i, r_off + b1[i])
            cnot(c, l_off + b2_t[i], z_off + i)
        c.append("TICK")
        for i in range(half):
            cnot(c, x_off + i, r_off + b3[i])
            cnot(c, l_off + b3_t[i], z_off + i)
        c.append("TICK")
        for i in range(half):
            cnot(c, x_off + i, l_off + a1[i])
            cnot(c, r_off + a2_t[i], z_off + i)
        c.append("TICK")
        for i in range(half):
            cnot(c, x_off + i, l_off + a3[i])
            c.append("X_ERROR", z_off + i, p)
            c.append("MR", [z_off + i])
        c += repeat_det(1) if repeat else first_det(1)
        c.append("TICK")
        for i in range(half):
            c.append("Z_ERROR", x_off + i, p)
            c.append("MRX", [x_off + i])
        if repeat:
            c += repeat_det(0)
        c.append("SHIFT_COORDS", [], [0, 0, 1])
        c.append("TICK")

    circuit = stim.Circuit()
    for i in range(half):
        circuit.append("R", x_off + i)
        circuit.append("R", z_off + i)
        circuit.append("X_ERROR", x_off + i, p)
        circuit.append("X_ERROR", z_off + i, p)
    for i in range(n):
        circuit.append("R", l_off + i)
        circuit.append("X_ERROR", l_off + i, p)
    circuit.append("TICK")
    append_blocks(circuit, repeat=False)
    rep = stim.Circuit()
    append_blocks(rep, repeat=True)
    circuit += (num_repeat - 1) * rep

    for i in range(n):
        circuit.append("M", l_off + i)
    text = ""
    for i, row in enumerate(hz):
        targets = " ".join(f"rec[{-n + j}]" for j in np.nonzero(row)[0])
        text += f"DETECTOR({i}, 0, 0, 1) {targets} rec[{-2 * n + i}]\n"
    for i, row in enumerate(lz):
        targets = " ".join(f"rec[{-n + j}]" for j in np.nonzero(row)[0])
        text += f"OBSERVABLE_INCLUDE({i}) {targets}\n"
    circuit += stim.Circuit(text)
    return circuit


def detector_types(n, num_repeat):
    """Detector order: Z(round 1), then per repeat round Z then X, then final Z."""
    half = n // 2
    types = ["Z"] * half
    for _ in range(num_repeat - 1):
        types += ["Z"] * half + ["X"] * half
    types += ["Z"] * half
    return types


def main(argv):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--code", type=int, choices=sorted(CODES), required=True)
    ap.add_argument("--p", type=float, required=True)
    ap.add_argument("--rounds", type=int, default=None)
    ap.add_argument("--out", required=True, help="DEM path; typing written to <out>.typing")
    args = ap.parse_args(argv)

    l, m, ax, ay, bx, by, d = CODES[args.code]
    rounds = args.rounds or d
    hx, hz, a_list, b_list = bb_code(l, m, ax, ay, bx, by)
    lz = z_logicals(hx, hz)
    circuit = build_circuit(hx, hz, lz, a_list, b_list, args.p, rounds)
    dem = circuit.detector_error_model(decompose_errors=False)
    types = detector_types(hx.shape[1], rounds)
    assert len(types) == dem.num_detectors, (len(types), dem.num_detectors)

    with open(args.out, "w") as f:
        f.write(f"# BB [[{args.code}]] code, p={args.p}, rounds={rounds}, Z-memory\n")
        f.write(str(dem.flattened()))
        f.write("\n")
    with open(args.out + ".typing", "w") as f:
        f.write("X: " + " ".join(str(i) for i, t in enumerate(types) if t == "X") + "\n")
        f.write("Z: " + " ".join(str(i) for i, t in enumerate(types) if t == "Z") + "\n")


if __name__ == "__main__":
    main(sys.argv[1:])
