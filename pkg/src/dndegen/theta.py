"""Genus-2 theta constants with half-integer characteristics and Rosenhain invariants.

A characteristic is written as four flags ``(2a1, 2a2, 2b1, 2b2)`` in {0, 1},
so ``e_{0010}`` has a = (0, 0), b = (1/2, 0).
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientData, NearDegenerate, NotSiegel, SlowConvergence

TAIL_TOL = 1e-14
MAX_RADIUS = 200
VANISHING = 1e-12
DENOMINATOR_TOL = 1e-10

ALL_CHARACTERISTICS = tuple(itertools.product((0, 1), repeat=4))


def is_even(char):
    return (char[0] * char[2] + char[1] * char[3]) % 2 == 0


EVEN_CHARACTERISTICS = tuple(c for c in ALL_CHARACTERISTICS if is_even(c))


def char_label(char):
    return "".join(str(int(x)) for x in char)


def parse_char(text):
    """'0010' or (0, 0, 1, 0) -> tuple of four ints."""
    if isinstance(text, str):
        text = [int(ch) for ch in text.strip()]
    char = tuple(int(x) for x in text)
    if len(char) != 4 or any(x not in (0, 1) for x in char):
        raise ValueError(f"bad characteristic {text!r}")
    return char


@dataclass(frozen=True)
class ThetaConstant:
    characteristic: tuple
    value: complex
    R: int
    tail_bound: float
    abs_sum: float = 0.0

    @property
    def vanishing(self):
        """Numerically zero relative to the magnitude of the summed terms."""
        return abs(self.value) <= VANISHING * max(self.abs_sum, 1.0)

    @property
    def label(self):
        return char_label(self.characteristic)


def _check_siegel(B):
    B = np.asarray(B, dtype=complex)
    if B.shape != (2, 2) or abs(B[0, 1] - B[1, 0]) > 1e-12 * max(1.0, np.abs(B).max()):
        raise NotSiegel("expected a symmetric 2x2 matrix")
    lam = np.linalg.eigvalsh(B.imag)
    if lam[0] <= 0:
        raise NotSiegel(f"Im B not positive definite (smallest eigenvalue {lam[0]:.3e})")
    return B, float(lam[0])


def shell(m):
    """Integer points with max-norm exactly m, in lexicographic order."""
    if m == 0:
        return np.zeros((1, 2), dtype=int)
    r = np.arange(-m, m + 1)
    g = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    return g[np.abs(g).max(axis=1) == m]


def tail_bound(R, lam_min):
    """Bound on the sum of |terms| over shells m > R.

    A shell has 8m points, and each term is at most exp(-pi lam_min (m - 1/2)^2)
    because |n + a|_2 >= |n + a|_inf >= m - 1/2.
    """
    total, m = 0.0, R + 1
    while True:
        term = 8 * m * math.exp(-math.pi * lam_min * (m - 0.5) ** 2)
        total += term
        if term <= 1e-18 * total or term == 0.0:
            return total
        m += 1


def _shell_terms(B, char, m):
    a = np.array(char[:2], dtype=float) / 2
    b = np.array(char[2:], dtype=float) / 2
    v = shell(m) + a
    quad = np.einsum("ni,ij,nj->n", v, B, v)
    return np.exp(1j * math.pi * quad + 2j * math.pi * (v @ b))


def theta_constant(B, char, R=None, tol=TAIL_TOL, max_radius=MAX_RADIUS):
    """Theta constant of characteristic ``char`` at the Siegel matrix ``B``.

    With ``R=None`` the radius grows until the tail bound drops below
    ``tol * (|partial sum| + 1e-300)``.  For constants that vanish by symmetry
    the partial sum never settles on a magnitude; the sum of term magnitudes
    is used as the reference scale instead.
    """
    B, lam = _check_siegel(B)
    char = parse_char(char)
    total, abs_total, m = 0j, 0.0, 0
    while True:
        if m > max_radius:
            raise SlowConvergence(f"theta series needs radius > {max_radius} (lambda_min = {lam:.3e})")
        t = _shell_terms(B, char, m)
        total += t.sum()
        abs_total += float(np.abs(t).sum())
        if R is not None:
            if m == R:
                return ThetaConstant(char, complex(total), R, tail_bound(R, lam), abs_total)
        else:
            tb = tail_bound(m, lam)
            scale = abs(total) + 1e-300
            if tb <= tol * scale or (tb <= tol * abs_total and abs(total) <= VANISHING * abs_total):
                return ThetaConstant(char, complex(total), m, tb, abs_total)
        m += 1


def theta_constants(B, chars=EVEN_CHARACTERISTICS, R=None):
    return {parse_char(c): theta_constant(B, c, R) for c in chars}


def genus1_theta(tau, a, b, R=40):
    """One-dimensional theta constant with characteristic (a, b) (halves allowed)."""
    n = np.arange(-R, R + 1) + a
    return complex(np.sum(np.exp(1j * math.pi * tau * n * n + 2j * math.pi * n * b)))


@dataclass(frozen=True)
class RosenhainTriple:
    lam1: complex
    lam2: complex
    lam3: complex

    def as_tuple(self):
        return (self.lam1, self.lam2, self.lam3)

    def min_separation(self):
        """Smallest pairwise distance among {lam1, lam2, lam3, 0, 1}."""
        pts = [*self.as_tuple(), 0.0, 1.0]
        return min(abs(p - q) for p, q in itertools.combinations(pts, 2))


ROSENHAIN_CHARS = ("0000", "0010", "0011", "0001", "1100", "1111")
DENOMINATOR_CHARS = ("0011", "0001", "1111")


def rosenhain(B, R=None, denominator_tol=DENOMINATOR_TOL):
    """Branch points (lam1, lam2, lam3) from squared theta-constant ratios."""
    e = {c: theta_constant(B, c, R).value for c in ROSENHAIN_CHARS}
    for c in DENOMINATOR_CHARS:
        if abs(e[c]) <= denominator_tol:
            raise NearDegenerate(f"theta constant e_{c} vanishes (|e| = {abs(e[c]):.3e})", c, e[c])
    lam1 = (e["0000"] * e["0010"] / (e["0011"] * e["0001"])) ** 2
    lam2 = (e["0010"] * e["1100"] / (e["0001"] * e["1111"])) ** 2
    lam3 = (e["0000"] * e["1100"] / (e["0011"] * e["1111"])) ** 2
    return RosenhainTriple(complex(lam1), complex(lam2), complex(lam3))


def write_theta_report(path, B, chars=EVEN_CHARACTERISTICS, R=None):
    """CSV rows: characteristic, Re, Im, R, tail bound."""
    rows = [theta_constant(B, c, R) for c in chars]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["characteristic", "re", "im", "R", "tail_bound"])
        for t in rows:
            w.writerow([t.label, repr(t.value.real), repr(t.value.imag), t.R, repr(t.tail_bound)])
    return rows


# --- degeneration classification ---------------------------------------------

CASE_I = "case-i (homologically trivial pinch)"
CASE_II = "case-ii (homologically nontrivial pinch)"
UNDECIDED = "mixed/undecided"

BOUNDED_RATIO = 2.0
DECAY_FRACTION = 0.5


@dataclass(frozen=True)
class PointDiagnostics:
    mu: float
    norm_B: float
    norm_inv_imB: float
    abs_beta: float
    label: str


def _strictly_decreasing(x):
    return all(q < p for p, q in zip(x, x[1:]))


def _label(norms, inv_norms, betas):
    if len(norms) < 3:
        return "n/a"
    bounded = norms[-1] <= BOUNDED_RATIO * norms[0]
    beta_to_zero = _strictly_decreasing(betas) and betas[-1] <= DECAY_FRACTION * betas[0]
    inv_to_zero = _strictly_decreasing(inv_norms) and inv_norms[-1] <= DECAY_FRACTION * inv_norms[0]
    if bounded and beta_to_zero:
        return CASE_I
    if inv_to_zero and not bounded:
        return CASE_II
    return UNDECIDED


def classify_degeneration(seq):
    """Label a sequence of (B, mu) with mu increasing as case i, case ii or undecided.

    Case i: sup-norm of B stays bounded (last/first <= 2) while |beta| =
    |B_12| decreases to at most half its first value.  Case ii: B is not
    bounded in that sense and the sup-norm of (Im B)^-1 decreases to at most
    half its first value.  (Shrinking beta alone also shrinks (Im B)^-1 a
    little, which is why case ii additionally asks for growth of B.)  Per-point
    labels classify the prefix ending at that point.
    Returns (overall label, list of PointDiagnostics).
    """
    seq = list(seq)
    if len(seq) < 3:
        raise InsufficientData("classification needs at least three points")
    mus = [float(mu) for _, mu in seq]
    if not all(q > p for p, q in zip(mus, mus[1:])):
        raise InsufficientData("mu must be strictly increasing along the sequence")
    norms, inv_norms, betas = [], [], []
    for B, _ in seq:
        B = np.asarray(B, dtype=complex)
        norms.append(float(np.abs(B).sum(axis=1).max()))
        inv_norms.append(float(np.abs(np.linalg.inv(B.imag)).sum(axis=1).max()))
        betas.append(float(abs(B[0, 1])))
    points = []
    for i, mu in enumerate(mus):
        lab = _label(norms[: i + 1], inv_norms[: i + 1], betas[: i + 1])
        points.append(PointDiagnostics(mu, norms[i], inv_norms[i], betas[i], lab))
    return _label(norms, inv_norms, betas), points
