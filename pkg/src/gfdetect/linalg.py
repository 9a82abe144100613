"""Dense complex linear-algebra kernels shared by all detectors.

Everything here works on small fixed-size matrices (subcarrier count by
channel-tap count), where plain LAPACK-backed numpy calls are the right
tool.  All functions are pure and never mutate their inputs.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Roots below this residual (relative to the largest coefficient) are accepted.
ROOT_RESIDUAL_TOL = 1e-8
# Companion-matrix eigenvalues count as real when |imag| <= tol * (1 + |real|).
ROOT_IMAG_TOL = 1e-8
# Roots closer than this are merged.
ROOT_MERGE_TOL = 1e-10
# Leading coefficients below this fraction of the largest one are dropped:
# they would only contribute roots of magnitude >> 1, far outside the unit
# box every caller searches.
LEADING_COEFF_TOL = 1e-14


class SingularUpdateError(np.linalg.LinAlgError):
    """The rank-update inner system is singular (update leaves the PD cone)."""


class AllZeroPolynomialError(ValueError):
    """Every coefficient is zero, so every point is a root."""


class EigenPair(NamedTuple):
    """Eigendecomposition of a Hermitian matrix: A = U diag(values) U^H."""

    values: np.ndarray   # real, ascending
    vectors: np.ndarray  # unitary, columns are eigenvectors


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with entries exp(-2j*pi*j*k/n)/sqrt(n)."""
    if n < 1:
        raise ValueError(f"DFT size must be >= 1, got {n}")
    k = np.arange(n)
    return np.exp(-2j * np.pi / n * np.outer(k, k)) / np.sqrt(n)


def hermitize(a: np.ndarray) -> np.ndarray:
    """Project onto the Hermitian cone: (A + A^H) / 2."""
    return (a + a.conj().T) * 0.5


def eig_hermitian(a: np.ndarray) -> EigenPair:
    """Eigendecompose a (numerically) Hermitian matrix.

    The input is symmetrized before factoring, so tiny departures from
    exact Hermitian symmetry are tolerated.  Eigenvalues come back real
    and ascending, eigenvectors as the columns of a unitary matrix.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    values, vectors = np.linalg.eigh(hermitize(a))
    return EigenPair(values, vectors)


def woodbury_update(sigma_inv: np.ndarray, block: np.ndarray, scale: float) -> np.ndarray:
    """Inverse of (Sigma + scale * B B^H) given Sigma^{-1}.

    Uses the rank-P inverse-update identity
        Sigma^{-1} - scale * W (I_P + scale * B^H W)^{-1} W^H,  W = Sigma^{-1} B,
    and re-Hermitizes the result.  ``scale`` may be negative (a downdate);
    if the inner P x P system is not positive definite the update would
    leave the PD cone and :class:`SingularUpdateError` is raised so the
    caller can fall back to a full re-inversion.
    """
    if scale == 0.0:
        return sigma_inv
    block = block if block.ndim == 2 else block[:, None]
    w = sigma_inv @ block
    inner = hermitize(scale * (block.conj().T @ w))
    p = inner.shape[0]
    inner.flat[:: p + 1] += 1.0
    if p == 1:
        denom = inner[0, 0].real
        if denom <= 0.0 or not np.isfinite(denom):
            raise SingularUpdateError("rank-one update is not positive definite")
        return hermitize(sigma_inv - (scale / denom) * (w @ w.conj().T))
    try:
        np.linalg.cholesky(inner)
    except np.linalg.LinAlgError as exc:
        raise SingularUpdateError("rank-update inner system is not positive definite") from exc
    solved = np.linalg.solve(inner, w.conj().T)
    return hermitize(sigma_inv - scale * (w @ solved))


def squared_factor_list(values, exclude: int | None = None) -> list[float]:
    """List-typed core of :func:`squared_factor_coeffs` for hot loops."""
    out = [1.0]
    for q, v in enumerate(values):
        if q == exclude:
            continue
        v = float(v)
        k1, k2 = 2.0 * v, v * v
        nxt = [0.0] * (len(out) + 2)
        for t, c in enumerate(out):
            nxt[t] += c
            nxt[t + 1] += c * k1
            nxt[t + 2] += c * k2
        out = nxt
    return out


def squared_factor_coeffs(values: np.ndarray, exclude: int | None = None) -> np.ndarray:
    """Ascending coefficients of prod_q (1 + values[q] * d)^2.

    ``exclude`` drops one factor from the product (the expansion over the
    remaining entries).  Computed by repeated polynomial multiplication,
    which is O(P^2) instead of the exponential subset enumeration that
    defines the same coefficients combinatorially.
    """
    return np.asarray(squared_factor_list(np.asarray(values, dtype=float), exclude))


def polyval(coeffs, x: float) -> float:
    """Horner evaluation of an ascending-coefficient polynomial."""
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def _newton_polish(coeffs, deriv, x: float) -> float:
    for _ in range(2):
        fx = polyval(coeffs, x)
        dfx = polyval(deriv, x)
        if dfx == 0.0 or not np.isfinite(dfx):
            break
        step = fx / dfx
        if not np.isfinite(step):
            break
        x -= step
    return x


def _quadratic_real_roots(c0: float, c1: float, c2: float) -> list[float]:
    disc = c1 * c1 - 4.0 * c2 * c0
    if disc < 0.0:
        return []
    sq = np.sqrt(disc)
    # Citardauq pairing avoids cancellation between -c1 and the radical.
    q = -0.5 * (c1 + np.copysign(sq, c1)) if c1 != 0.0 else 0.5 * sq
    roots = []
    if q != 0.0:
        roots.append(c0 / q)
    roots.append(q / c2 if q != 0.0 else (sq / (2.0 * c2)))
    if disc == 0.0:
        roots = roots[:1]
    return roots


def _cubic_real_roots(c0: float, c1: float, c2: float, c3: float) -> list[float]:
    # Normalized to x^3 + a x^2 + b x + c, then depressed to t^3 + p t + q.
    a, b, c = c2 / c3, c1 / c3, c0 / c3
    shift = a / 3.0
    p = b - a * a / 3.0
    q = 2.0 * a ** 3 / 27.0 - a * b / 3.0 + c
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0.0:
        sq = np.sqrt(disc)
        t = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
        return [t - shift]
    if p == 0.0:  # disc <= 0 forces q == 0: triple root
        return [-shift]
    m = 2.0 * np.sqrt(-p / 3.0)
    theta = np.arccos(np.clip(3.0 * q / (p * m), -1.0, 1.0)) / 3.0
    return [m * np.cos(theta - 2.0 * np.pi * k / 3.0) - shift for k in range(3)]


def real_roots_in_interval(coeffs: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """All real roots of a real-coefficient polynomial inside [lo, hi].

    Coefficients are ascending in degree.  Degrees up to three are solved
    in closed form; higher degrees go through companion-matrix
    eigenvalues.  Every candidate is Newton-polished and kept only if its
    residual is below ``ROOT_RESIDUAL_TOL`` times the largest coefficient.
    Near-duplicate roots are merged.

    Raises :class:`AllZeroPolynomialError` when every coefficient is zero
    (callers treat that as a stationary zero increment).
    """
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    coeffs = [float(c) for c in coeffs]
    scale = max((abs(c) for c in coeffs), default=0.0)
    if scale == 0.0:
        raise AllZeroPolynomialError("all coefficients are zero")
    cutoff = LEADING_COEFF_TOL * scale
    last = max(t for t, c in enumerate(coeffs) if abs(c) > cutoff)
    coeffs = coeffs[: last + 1]
    degree = len(coeffs) - 1
    if degree == 0:
        return np.empty(0)
    if degree == 1:
        candidates = [-coeffs[0] / coeffs[1]]
    elif degree == 2:
        candidates = _quadratic_real_roots(*coeffs)
    elif degree == 3:
        candidates = _cubic_real_roots(*coeffs)
    else:
        eigs = np.roots(coeffs[::-1])
        candidates = [z.real for z in eigs if abs(z.imag) <= ROOT_IMAG_TOL * (1.0 + abs(z.real))]
    deriv = [t * c for t, c in enumerate(coeffs)][1:]
    polished = sorted(_newton_polish(coeffs, deriv, x) for x in candidates)
    roots: list[float] = []
    residual_cap = ROOT_RESIDUAL_TOL * scale
    for x in polished:
        if not (lo <= x <= hi):
            continue
        if abs(polyval(coeffs, x)) > residual_cap:
            continue
        if roots and abs(x - roots[-1]) <= ROOT_MERGE_TOL:
            continue
        roots.append(x)
    return np.asarray(roots)
