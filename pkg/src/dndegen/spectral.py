"""Discrete spectrum of the Hilbert transform of a DN map.

For a genus-1 surface with one boundary circle, iH has the essential values
+-1 and one pair of discrete eigenvalues +-mu with 0 < mu < 1.  We solve the
equivalent Hermitian pencil (-i d/dphi) x = lam * Lambda x on mean-zero
modes, where -i d/dphi is diag(k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .circle import (
    TWO_PI,
    BoundaryFunction,
    BoundaryOperator,
    _mean_zero_index,
    dn_disk,
    hilbert_from_dn,
    mode_numbers,
    read_keyvalue,
    write_keyvalue,
)
from .errors import MultipleCandidates, SingularDN

DEFAULT_BAND = (0.01, 0.999)
# A candidate must sit this many cluster scales (radius or widest gap) below the +-1 cluster.
CLUSTER_GAP_FACTOR = 4.0


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Discrete eigenvalue mu and eigenfunction eta with iH eta = mu eta.

    ``eta`` is normalized in the Lambda pairing and its largest-modulus
    coefficient is real positive.  ``mu`` is None when no discrete pair was
    found in the search band.
    """

    mu: float | None
    eta: BoundaryFunction | None
    mu_minus: float | None = None
    cluster_gaps: tuple = ()
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def found(self):
        return self.mu is not None

    def save(self, path):
        path = Path(path)
        meta = {
            "mu": "absent" if self.mu is None else self.mu,
            "mu_minus": "absent" if self.mu_minus is None else self.mu_minus,
            "cluster_gap_plus": self.cluster_gaps[0] if self.cluster_gaps else "absent",
            "cluster_gap_minus": self.cluster_gaps[1] if self.cluster_gaps else "absent",
        }
        if self.eta is not None:
            eta_path = path.with_name(path.stem + "_eta.txt")
            self.eta.save(eta_path)
            meta["eta_file"] = eta_path.name
        write_keyvalue(path, meta)

    @classmethod
    def load(cls, path):
        path = Path(path)
        kv = read_keyvalue(path)

        def num(key):
            v = kv.get(key, "absent")
            return None if v == "absent" else float(v)

        eta = None
        if "eta_file" in kv:
            eta = BoundaryFunction.load(path.with_name(kv["eta_file"]))
        gaps = ()
        if num("cluster_gap_plus") is not None:
            gaps = (num("cluster_gap_plus"), num("cluster_gap_minus"))
        return cls(num("mu"), eta, num("mu_minus"), gaps)


def _pencil(dn):
    if dn.kind != "dn":
        raise ValueError("expected an operator of kind 'dn'")
    mz = _mean_zero_index(dn.N)
    A = dn.matrix[np.ix_(mz, mz)]
    A = 0.5 * (A + A.conj().T)
    amin = np.linalg.eigvalsh(A)[0]
    if amin <= 1e-12:
        raise SingularDN(f"DN map singular on mean-zero functions (smallest eigenvalue {amin:.3e})")
    D = np.diag(mode_numbers(dn.N)[mz].astype(complex))
    return mz, D, A


def _cluster_split(values, hi, factor):
    """Split positive eigenvalues (descending) into the cluster at 1 and the rest."""
    v = np.sort(values)[::-1]
    if len(v) < 2:
        return v, v[:0]
    gaps = -np.diff(v)
    # Walk down from the top; the next eigenvalue joins the cluster unless its
    # gap exceeds ``factor`` times the cluster's current scale (its radius
    # around 1 or its widest internal gap).  Discretization spreads the
    # cluster smoothly, a discrete eigenvalue sits far below it.
    scale = max(abs(float(v[0]) - 1.0), 1e-9)
    end = 1
    while end < len(v) and (v[end] >= hi or gaps[end - 1] <= factor * scale):
        scale = max(scale, abs(float(v[end]) - 1.0), float(gaps[end - 1]))
        end += 1
    return v[:end], v[end:]


def extract_mu(dn, band=DEFAULT_BAND, gap_factor=CLUSTER_GAP_FACTOR):
    """Discrete eigenvalue mu of iH in ``band`` and its eigenfunction eta.

    Raises MultipleCandidates when more than one eigenvalue in the band is
    separated from the cluster at 1.
    """
    lo, hi = band
    mz, D, A = _pencil(dn)
    lam, X = scipy.linalg.eigh(D, A)
    pos = lam[lam > 0]
    cluster, rest = _cluster_split(pos, hi, gap_factor)
    cands = rest[(rest > lo) & (rest < hi)]
    if len(cands) == 0:
        return SpectralData(None, None, None, (), lam)
    if len(cands) > 1:
        raise MultipleCandidates(f"{len(cands)} discrete eigenvalues in {band}: {np.round(cands, 8)}", cands)
    mu = float(cands[0])
    # eta is the eigenvector of +mu; its conjugate belongs to -mu.  With the
    # boundary oriented as the boundary of the surface this is the sign for
    # which 2 mu (mu^2 - 1) Im(c_a conj(c_b)) = +1.
    j = int(np.argmin(np.abs(lam - mu)))
    mu_minus = float(lam[int(np.argmin(np.abs(lam + mu)))])
    x = X[:, j] / math.sqrt(TWO_PI)
    x = x * np.exp(-1j * np.angle(x[np.argmax(np.abs(x))]))
    coeffs = np.zeros(2 * dn.N + 1, dtype=complex)
    coeffs[mz] = x
    neg_cluster, _ = _cluster_split(-lam[lam < 0], hi, gap_factor)
    gaps = (float(cluster.min() - mu), float(neg_cluster.min() - abs(mu_minus)) if len(neg_cluster) else float("nan"))
    return SpectralData(mu, BoundaryFunction(coeffs, dn.N), mu_minus, gaps, lam)


def ih_eigenvalues(dn):
    """All eigenvalues of iH on mean-zero modes, ascending."""
    _, D, A = _pencil(dn)
    return scipy.linalg.eigh(D, A, eigvals_only=True)


def synthetic_block(mu):
    """Entries (a, b) of the coupled block [[a, b], [b, a]] with a^2 - b^2 = 1/mu^2."""
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    target = 1.0 / mu**2
    a = 2.0 if target < 4.0 else 2.0 / mu
    return a, math.sqrt(a * a - target)


def make_synthetic_dn(mu, N=32):
    """Disk DN map with modes +1 and -1 coupled so that iH has eigenvalues +-mu."""
    a, b = synthetic_block(mu)
    m = dn_disk(N).matrix.copy()
    i, j = N + 1, N - 1
    m[i, i] = m[j, j] = a
    m[i, j] = m[j, i] = b
    return BoundaryOperator(m, N, "dn", {"synthetic_mu": mu})


def smoothing_defect(dn):
    """How far H^2 + I on mean-zero modes is from having rank 2.

    Sum of its singular values beyond the two largest, over the largest;
    zero when H^2 + I vanishes.
    """
    H = hilbert_from_dn(dn).matrix
    mz = _mean_zero_index(dn.N)
    M = (H @ H + np.eye(len(H)))[np.ix_(mz, mz)]
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] <= 1e-14:
        return 0.0
    return float(s[2:].sum() / s[0])


def coefficient_decay(eta, fraction=0.25):
    """Largest coefficient modulus in the outer ``fraction`` of modes,
    relative to the largest overall."""
    k = np.abs(mode_numbers(eta.N))
    cut = eta.N - int(math.floor(fraction * eta.N))
    c = np.abs(eta.coefficients)
    return float(c[k > cut].max() / c.max())
