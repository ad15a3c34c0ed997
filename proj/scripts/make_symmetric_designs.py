#!/usr/bin/env python3
"""Compute antipodally symmetric spherical t-designs on S^2.

Point counts follow N = 2 * ceil((t^2 + t + 4) / 4) for t >= 7 (the smallest
count whose degrees of freedom cover the even-degree moment conditions), with
the antipodal pair, octahedron and icosahedron for t = 1, 3, 5.

For a symmetric set {x_i} U {-x_i} every odd-degree harmonic sum vanishes, so
only the even degrees 2..t-1 need solving. The script runs Levenberg-Marquardt
on the half set, with tangent-plane updates and a central-difference Jacobian,
starting from the northern half of a generalized spiral.

Output files use the naming ss<ttt>.<NNNNN>, one "x y z" line per point: the
first N/2 points followed by their antipodes.

    python3 scripts/make_symmetric_designs.py --out data/designs --t 1 3 5 7 ... 57
"""

import argparse
import math
import pathlib
import sys
import time

import numpy as np


def point_count(t: int) -> int:
    fixed = {1: 2, 3: 6, 5: 12}
    if t in fixed:
        return fixed[t]
    return 2 * math.ceil((t * t + t + 4) / 4)


def polyhedron(t: int) -> np.ndarray:
    if t == 1:
        return np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])
    if t == 3:
        e = np.eye(3)
        return np.vstack([e, -e])
    if t == 5:
        g = (1.0 + math.sqrt(5.0)) / 2.0
        half = np.array([[0, 1, g], [0, -1, g], [1, g, 0], [-1, g, 0], [g, 0, 1], [g, 0, -1]], dtype=float)
        half /= np.linalg.norm(half, axis=1, keepdims=True)
        return np.vstack([half, -half])
    raise ValueError(t)


def spiral(n: int) -> np.ndarray:
    h = -1.0 + 2.0 * np.arange(n) / (n - 1)
    phi = np.zeros(n)
    for i in range(1, n - 1):
        phi[i] = (phi[i - 1] + 3.6 / math.sqrt(n * (1.0 - h[i] * h[i]))) % (2.0 * math.pi)
    s = np.sqrt(np.maximum(0.0, 1.0 - h * h))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), h])


def even_harmonics(x: np.ndarray, kmax: int) -> np.ndarray:
    """Real orthonormal harmonics of even degree 2..kmax at points x (n x 3).

    Returns an array of shape (L, n).
    """
    z = np.clip(x[:, 2], -1.0, 1.0)
    s = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.arctan2(x[:, 1], x[:, 0])
    n = x.shape[0]
    rows = {}
    pmm = np.full(n, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(0, kmax + 1):
        if m > 0:
            pmm = pmm * math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s
        p_prev2 = None
        p_prev = pmm
        vals = {m: pmm}
        if m + 1 <= kmax:
            p1 = math.sqrt(2.0 * m + 3.0) * z * pmm
            vals[m + 1] = p1
            p_prev2, p_prev = pmm, p1
            for k in range(m + 2, kmax + 1):
                a = math.sqrt((4.0 * k * k - 1.0) / (k * k - m * m))
                b = math.sqrt(((k - 1.0) ** 2 - m * m) / (4.0 * (k - 1.0) ** 2 - 1.0))
                pk = a * (z * p_prev - b * p_prev2)
                vals[k] = pk
                p_prev2, p_prev = p_prev, pk
        if m == 0:
            for k, v in vals.items():
                if k >= 2 and k % 2 == 0:
                    rows[(k, 0)] = v
        else:
            c = math.sqrt(2.0) * np.cos(m * phi)
            sn = math.sqrt(2.0) * np.sin(m * phi)
            for k, v in vals.items():
                if k >= 2 and k % 2 == 0:
                    rows[(k, m)] = c * v
                    rows[(k, -m)] = sn * v
    keys = sorted(rows)
    return np.vstack([rows[key] for key in keys])


def tangent_basis(x: np.ndarray):
    ref = np.where(np.abs(x[:, 2:3]) < 0.9, np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
    e1 = np.cross(x, ref)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(x, e1)
    return e1, e2


def normalize(x):
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def residual(half: np.ndarray, kmax: int) -> np.ndarray:
    return even_harmonics(half, kmax).sum(axis=1)


def jacobian(half: np.ndarray, kmax: int, h: float = 1e-5) -> np.ndarray:
    e1, e2 = tangent_basis(half)
    cols = []
    for e in (e1, e2):
        plus = even_harmonics(normalize(half + h * e), kmax)
        minus = even_harmonics(normalize(half - h * e), kmax)
        cols.append((plus - minus) / (2.0 * h))
    # interleave: column 2i -> e1 of point i, 2i+1 -> e2 of point i
    n = half.shape[0]
    jac = np.empty((cols[0].shape[0], 2 * n))
    jac[:, 0::2] = cols[0]
    jac[:, 1::2] = cols[1]
    return jac, e1, e2


def step(half, delta, e1, e2):
    return normalize(half + delta[0::2, None] * e1 + delta[1::2, None] * e2)


def solve(t: int, n_full: int, seed: int, max_iter: int = 200, verbose: bool = False) -> np.ndarray:
    n = n_full // 2
    pts = spiral(n_full)
    half = pts[pts[:, 2] > 0]
    assert half.shape[0] == n
    if seed > 0:
        rng = np.random.default_rng(seed)
        half = normalize(half + rng.normal(scale=0.3 / math.sqrt(n), size=half.shape))
    kmax = t - 1
    r = residual(half, kmax)
    f = r @ r
    mu = 1e-3 * max(f, 1e-12)
    for it in range(max_iter):
        if f < 1e-28 * n * n:
            break
        jac, e1, e2 = jacobian(half, kmax)
        jjt = jac @ jac.T
        accepted = False
        for _ in range(40):
            mat = jjt + mu * np.eye(jjt.shape[0])
            try:
                c = np.linalg.cholesky(mat)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            w = np.linalg.solve(c.T, np.linalg.solve(c, -r))
            delta = jac.T @ w
            trial = step(half, delta, e1, e2)
            rt = residual(trial, kmax)
            ft = rt @ rt
            if ft < f:
                half, r, f = trial, rt, ft
                mu = max(mu / 10.0, 1e-300)
                accepted = True
                break
            mu *= 10.0
        if verbose:
            print(f"  t={t} it={it} |r|^2={f:.3e} mu={mu:.1e}", file=sys.stderr)
        if not accepted:
            break
    return np.vstack([half, -half])


def legendre_residuals(x: np.ndarray, t: int) -> np.ndarray:
    g = np.clip(x @ x.T, -1.0, 1.0)
    n = x.shape[0]
    out = np.empty(t)
    p0, p1 = np.ones_like(g), g.copy()
    out[0] = p1.sum() / (n * n)
    for k in range(1, t):
        p0, p1 = p1, ((2 * k + 1) * g * p1 - k * p0) / (k + 1)
        out[k] = p1.sum() / (n * n)
    return out


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--t", type=int, nargs="+", required=True)
    ap.add_argument("--tol", type=float, default=1e-12)
    ap.add_argument("--restarts", type=int, default=20)
    ap.add_argument("--verbose", action="store_true")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    status = 0
    for t in args.t:
        if t % 2 == 0:
            print(f"t={t}: symmetric designs need odd t", file=sys.stderr)
            status = 1
            continue
        start = time.time()
        if t <= 5:
            x = polyhedron(t)
            worst = float(np.abs(legendre_residuals(x, t)).max())
        else:
            # seeded restarts, then the next admissible count
            n_full = point_count(t)
            worst = math.inf
            while worst > args.tol:
                for seed in range(args.restarts):
                    x = solve(t, n_full, seed, verbose=args.verbose)
                    worst = float(np.abs(legendre_residuals(x, t)).max())
                    if worst <= args.tol:
                        break
                else:
                    print(f"t={t}: no design with N={n_full}, trying N={n_full + 2}", file=sys.stderr)
                    n_full += 2
        path = out / f"ss{t:03d}.{x.shape[0]:05d}"
        ok = worst <= args.tol
        print(f"t={t:3d} N={x.shape[0]:5d} max|r_k|={worst:.2e} {time.time() - start:6.1f}s {'ok' if ok else 'FAILED'}")
        if not ok:
            status = 1
            continue
        with open(path, "w") as fh:
            for p in x:
                fh.write(f"{p[0]:23.16e} {p[1]:23.16e} {p[2]:23.16e}\n")
    return status


if __name__ == "__main__":
    sys.exit(main())
