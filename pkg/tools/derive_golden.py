"""Regenerate tests/fixtures/golden.json from oracles independent of the package.

The index oracle builds the Hessian of the action at H0 critical points in
plain L2 coefficient coordinates and counts negative pivots of an LDL^T
factorization (Sylvester's law of inertia).  Closed-form values use mpmath.

    python tools/derive_golden.py
"""

import json
from pathlib import Path

import mpmath as mp
import numpy as np
from scipy.linalg import ldl

OUT = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "golden.json"


def inertia_ldl(a: np.ndarray, tol: float = 1e-9) -> tuple[int, int, int]:
    _, d, _ = ldl(a)
    mu = np.linalg.eigvalsh(d)  # d is block diagonal with 1x1 and 2x2 blocks
    return int(np.sum(mu < -tol)), int(np.sum(np.abs(mu) <= tol)), int(np.sum(mu > tol))


def circle_eigs(half: int) -> np.ndarray:
    return 2 * np.pi * (np.arange(-half, half) + 0.5)


def l2_hessian(eigs: np.ndarray, k: int) -> np.ndarray:
    """Hessian of (1/2)(Lz,z) - lam(|z|^2/2 - 1) at p_k^- in real L2 coordinates."""
    n = len(eigs)
    # real coordinates (Re u, Im u, Re v, Im v); L pairs u_j with v_j through lambda_j
    L = np.zeros((4 * n, 4 * n))
    for j, lam in enumerate(eigs):
        for part in (0, 1):
            iu, iv = part * n + j, 2 * n + part * n + j
            L[iu, iv] = L[iv, iu] = lam
    mags = sorted(set(np.round(np.abs(eigs), 12)))
    mu = mags[abs(k) - 1] * np.sign(k)
    j = int(np.argmin(np.abs(eigs - mu)))  # D-mode with eigenvalue mu: z = -(phi, phi)
    z = np.zeros(4 * n)
    z[j], z[2 * n + j] = -1.0, -1.0
    H = np.zeros((4 * n + 1, 4 * n + 1))
    H[:-1, :-1] = L - mu * np.eye(4 * n)
    H[:-1, -1] = H[-1, :-1] = -z
    return H, L


def index_table(half_full: int, truncations) -> dict:
    out = {}
    full = circle_eigs(half_full)
    for k in (1, 2, 3, -1, -2, -3):
        row = []
        for t in truncations:
            eigs = np.sort(full[np.argsort(np.abs(full), kind="stable")[:t]])
            H, L = l2_hessian(eigs, k)
            ref = np.zeros_like(H)
            ref[:-1, :-1] = L
            ref[-1, -1] = 1.0
            nh, kh, _ = inertia_ldl(H)
            nr, _, _ = inertia_ldl(ref)
            row.append({"truncation": t, "n_minus_hess": nh, "n_minus_ref": nr,
                        "i_rel": nh - nr, "kernel_dim": kh})
        out[str(k)] = row
    return out


def closed_form_index(m: dict, k: int) -> tuple[int, int, int]:
    """(i_rel, nu(p+), nu(p-)) from the closed-form case formulas."""
    if k > 0:
        i = 1 + 2 * sum(m[l] for l in range(1, k))
        return i, 2 * sum(m[l] for l in range(1, k + 1)), i
    i = -2 * sum(m[l] for l in range(k, 0))
    return i, -1 - 2 * sum(m[l] for l in range(k + 1, 0)), i


def grading(mult: int, window) -> list[int]:
    m = {k: mult for k in range(-20, 21) if k}
    degs = []
    for k in m:
        _, nup, num = closed_form_index(m, k)
        degs += [d for d in (nup, num) if window[0] <= d <= window[1]]
    return sorted(degs)


def power33() -> dict:
    mp.mp.dps = 40
    c = mp.mpf(2) ** mp.mpf("0.25")  # 2 |c|^4 / 4 = 1
    lam = mp.pi / c ** 2  # pi c = lam |c|^2 c
    u0 = lam ** mp.mpf("0.5") * c  # a = (q+1)/(pq-1) = 1/2
    u0_negated = lam ** mp.mpf("-0.5") * c  # a = (q+1)/(1-pq) = -1/2
    return {"abs_c": float(c), "lambda": float(lam), "coefficient": float(u0),
            "sqrt_pi": float(mp.sqrt(mp.pi)),
            "negated_exponent_residual": float(abs(mp.pi * u0_negated - u0_negated ** 3))}


def main():
    golden = {
        "index_inertia_circle16": index_table(8, (8, 12, 16)),
        "index_closed_form_circle": {str(k): closed_form_index({l: 2 for l in range(-9, 10) if l}, k)[0]
                               for k in (1, 2, 3, -1, -2, -3)},
        "grading_circle_m2": grading(2, (-13, 13)),
        "grading_m1": grading(1, (-5, 5)),
        "reference_negative_count_circle4": inertia_ldl(
            np.block([[l2_hessian(circle_eigs(2), 1)[1], np.zeros((16, 1))],
                      [np.zeros((1, 16)), np.ones((1, 1))]]))[0],
        "power33": power33(),
    }
    OUT.write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
