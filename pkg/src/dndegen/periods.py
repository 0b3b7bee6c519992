"""Auxiliary period matrix, b-period matrix and the symmetric fundamental domain.

Conventions: ``Bcal`` is a real 2x2 array indexed ``[q, e]`` with
``q, e in (a, b) = (0, 1)`` and ``Bcal[q, e] = int_{q+} *upsilon_e``, where
``upsilon_a, upsilon_b`` are the harmonic forms dual to the cycles a+, b+.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circle import (
    BoundaryFunction,
    format_complex,
    lambda_inner,
    mean_zero_pinv,
    parse_complex,
    read_keyvalue,
    write_keyvalue,
)
from .errors import DivisionByZero, LargeResidual, NormalizationViolated, NotMeanZero, NotSiegel
from .fem import period_integral

AA, AB, BA, BB = (0, 0), (0, 1), (1, 0), (1, 1)

MAX_TRACE_RESIDUAL = 0.05
MAX_NORMALIZATION_DEFECT = 0.05


@dataclass(frozen=True)
class CoefficientFit:
    c: complex
    residual: float


def extract_c(dn, spectral, trace, max_residual=MAX_TRACE_RESIDUAL):
    """Coefficient c with trace = -(1 - mu^2) Lambda (c eta + conj(c eta)).

    Returns the coefficient together with the relative residual of that
    representation; raises LargeResidual above ``max_residual``.
    """
    if not spectral.found:
        raise ValueError("spectral data carries no discrete eigenvalue")
    if not trace.is_mean_zero(1e-10 * max(1.0, float(np.abs(trace.coefficients).max()))):
        raise NotMeanZero(f"trace has mean {abs(trace.mean):.3e}")
    mu, eta = spectral.mu, spectral.eta
    f = BoundaryFunction(-(mean_zero_pinv(dn) @ trace.coefficients) / (1.0 - mu**2), dn.N)
    c = lambda_inner(dn, f, eta)
    ceta = eta * c
    model = -(1.0 - mu**2) * (dn.matrix @ (ceta + ceta.conj()).coefficients)
    scale = float(np.linalg.norm(trace.coefficients))
    residual = float(np.linalg.norm(trace.coefficients - model)) / scale if scale > 0 else 0.0
    if residual > max_residual:
        raise LargeResidual(f"trace is not in span(Lambda eta, Lambda conj(eta)): residual {residual:.3e}")
    return CoefficientFit(c, residual)


def normalization_defect(mu, c_a, c_b):
    """|2 mu (mu^2 - 1) Im(c_a conj(c_b)) - 1|."""
    return abs(2.0 * mu * (mu**2 - 1.0) * (c_a * np.conj(c_b)).imag - 1.0)


def bcal_from_boundary(mu, c_a, c_b, strict=False, threshold=MAX_NORMALIZATION_DEFECT):
    """Auxiliary period matrix from the boundary coefficients c_a, c_b.

    Returns ``(Bcal, defect)``; in strict mode a normalization defect above
    ``threshold`` raises NormalizationViolated.
    """
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    s = 2.0 * (1.0 - mu**2)
    cross = complex(c_a * np.conj(c_b))
    B = np.empty((2, 2))
    B[BB] = s * cross.real
    B[AA] = -B[BB]
    B[AB] = -s * abs(c_b) ** 2
    B[BA] = s * abs(c_a) ** 2
    defect = float(normalization_defect(mu, c_a, c_b))
    if strict and defect > threshold:
        raise NormalizationViolated(f"normalization defect {defect:.3e} exceeds {threshold}")
    return B, defect


def bcal_from_interior(surface, forms):
    """Auxiliary period matrix from *-line integrals of the dual forms along a+, b+."""
    B = np.empty((2, 2))
    for q, path in enumerate(("a", "b")):
        for e, form in enumerate(forms):
            B[q, e] = period_integral(surface, form, path, starred=True)
    return B


def bcal_from_energy(forms):
    """Auxiliary period matrix from L2 inner products of the dual forms.

    Uses Bcal_ba = |u_a|^2, Bcal_ab = -|u_b|^2, Bcal_bb = -Bcal_aa = (u_a, u_b).
    A third, weak-form route used as a diagnostic.
    """
    ua, ub = forms
    B = np.empty((2, 2))
    B[BA] = ua.norm2()
    B[AB] = -ub.norm2()
    B[BB] = ua.inner(ub)
    B[AA] = -B[BB]
    return B


def relative_entry_errors(B, ref):
    """Entrywise |B - ref| relative to the largest entry of ref."""
    return np.abs(np.asarray(B) - np.asarray(ref)) / float(np.abs(ref).max())


def dual_abelian_coeffs(Bcal):
    """Coefficients of omega = e_a omega_a + e_b omega_b normalized on a+, a-."""
    if Bcal[AB] == 0:
        raise DivisionByZero("Bcal_ab vanishes")
    return -0.5j, (1j * Bcal[AA] - 1.0) / (2.0 * Bcal[AB])


def aux_periods(Bcal):
    """Periods of omega_a, omega_b over (a+, a-, b+, b-) as a 2x4 complex array."""
    b = Bcal
    return np.array(
        [
            [-b[AA] + 1j, -b[AA] - 1j, -b[BA], b[BA]],
            [-b[AB], -b[AB], -b[BB] + 1j, b[BB] + 1j],
        ]
    )


def dual_periods(Bcal, e=None):
    """Periods of omega over (a+, a-, b+, b-)."""
    e_a, e_b = dual_abelian_coeffs(Bcal) if e is None else e
    return np.array([e_a, e_b]) @ aux_periods(Bcal)


def dual_normalization_error(Bcal, e=None):
    """max(|int_{a+} omega - 1|, |int_{a-} omega|)."""
    p = dual_periods(Bcal, e)
    return float(max(abs(p[0] - 1.0), abs(p[1])))


def siegel_matrix(gamma, delta, beta):
    return np.array([[gamma + 1j * delta, 1j * beta], [1j * beta, -gamma + 1j * delta]])


def assemble_siegel(mu, Bcal, tol=0.0):
    """Symmetric form (gamma, delta, beta) of the b-period matrix and the matrix itself."""
    if not 0.0 < mu < 1.0:
        raise ValueError("mu must lie in (0, 1)")
    bab = Bcal[AB]
    if bab == 0:
        raise DivisionByZero("Bcal_ab vanishes")
    m2 = mu * mu
    gamma = Bcal[BB] / (m2 * bab)
    delta = -(m2 + 1.0) / (2.0 * m2 * bab)
    beta = -(m2 - 1.0) / (2.0 * m2 * bab)
    if not delta - abs(beta) > -tol or delta <= 0:
        raise NotSiegel(f"Im B not positive definite (delta={delta:.6g}, beta={beta:.6g})")
    return float(gamma), float(delta), float(beta), siegel_matrix(gamma, delta, beta)


def gamma_from_dual_periods(Bcal):
    """Real part of int_{b+} omega computed from the period identities.

    Equals Bcal_bb / Bcal_ab when det Bcal = mu^-2; reported next to the
    closed-form gamma as a consistency diagnostic.
    """
    return float(dual_periods(Bcal)[2].real)


@dataclass(frozen=True)
class DomainReport:
    inside: bool
    gamma_low: float  # gamma - 0
    gamma_high: float  # 1/2 - gamma
    delta_bound: float  # delta^2 - (1 - gamma^2 + beta^2)
    delta_beta: float  # delta^2 - beta^2

    def failed(self):
        out = []
        if self.gamma_low < 0 or self.gamma_high < 0:
            out.append("gamma-range")
        if self.delta_bound < 0:
            out.append("delta-bound")
        if self.delta_beta <= 0:
            out.append("delta-beta")
        return out


def in_fundamental_domain(gamma, delta, beta):
    """Membership in the symmetric fundamental domain with per-inequality slack."""
    r = DomainReport(
        inside=False,
        gamma_low=gamma,
        gamma_high=0.5 - gamma,
        delta_bound=delta**2 - (1.0 - gamma**2 + beta**2),
        delta_beta=delta**2 - beta**2,
    )
    inside = r.gamma_low >= 0 and r.gamma_high >= 0 and r.delta_bound >= 0 and r.delta_beta > 0
    return DomainReport(inside, r.gamma_low, r.gamma_high, r.delta_bound, r.delta_beta)


def apply_moves(gamma, delta, beta, moves):
    """Replay a move log produced by normalize_symmetric."""
    for move in moves:
        name, _, arg = move.partition(":")
        if name == "shift":
            gamma = gamma + int(arg)
        elif name == "flip-gamma":
            gamma = -gamma
        elif name == "flip-beta":
            beta = -beta
        else:
            raise ValueError(f"unknown move {move!r}")
    return gamma, delta, beta


@dataclass(frozen=True)
class Normalized:
    gamma: float
    delta: float
    beta: float
    moves: tuple
    report: DomainReport

    @property
    def flags(self):
        return () if self.report.inside else ("reduction-incomplete",)


def normalize_symmetric(gamma, delta, beta):
    """Bring gamma into [0, 1/2] and beta to >= 0 with symmetry-preserving moves.

    The moves are gamma -> gamma + n, gamma -> -gamma and beta -> -beta;
    delta is never changed, so membership may still fail (flagged).
    """
    moves = []
    if not 0.0 <= gamma <= 0.5:
        n = -math.floor(gamma + 0.5)
        if n:
            moves.append(f"shift:{n}")
        if gamma + n < 0:
            moves.append("flip-gamma")
    if beta < 0:
        moves.append("flip-beta")
    g, d, b = apply_moves(gamma, delta, beta, moves)
    return Normalized(g, d, b, tuple(moves), in_fundamental_domain(g, d, b))


@dataclass(frozen=True, eq=False)
class PeriodData:
    """Everything computed from one set of boundary and interior period data."""

    mu: float
    c_a: complex
    c_b: complex
    Bcal: np.ndarray
    gamma: float
    delta: float
    beta: float
    e_a: complex
    e_b: complex
    diagnostics: dict = field(default_factory=dict)

    @property
    def siegel(self):
        return siegel_matrix(self.gamma, self.delta, self.beta)

    def save(self, path):
        path = Path(path)
        kv = {"mu": self.mu, "c_a": complex(self.c_a), "c_b": complex(self.c_b)}
        for name, idx in (("aa", AA), ("ab", AB), ("ba", BA), ("bb", BB)):
            kv[f"Bcal_{name}"] = float(self.Bcal[idx])
        kv.update(gamma=self.gamma, delta=self.delta, beta=self.beta, e_a=complex(self.e_a), e_b=complex(self.e_b))
        for k, v in self.diagnostics.items():
            kv[f"diag.{k}"] = v
        write_keyvalue(path, kv)
        B = self.siegel
        path.with_name(path.stem + "_siegel.txt").write_text(
            "\n".join(",".join(format_complex(z) for z in row) for row in B) + "\n"
        )

    @classmethod
    def load(cls, path):
        kv = read_keyvalue(path)
        B = np.empty((2, 2))
        for name, idx in (("aa", AA), ("ab", AB), ("ba", BA), ("bb", BB)):
            B[idx] = float(kv[f"Bcal_{name}"])
        diag = {k[5:]: v for k, v in kv.items() if k.startswith("diag.")}
        return cls(
            float(kv["mu"]),
            parse_complex(kv["c_a"]),
            parse_complex(kv["c_b"]),
            B,
            float(kv["gamma"]),
            float(kv["delta"]),
            float(kv["beta"]),
            parse_complex(kv["e_a"]),
            parse_complex(kv["e_b"]),
            diag,
        )


def load_siegel(path):
    rows = Path(path).read_text().split()
    return np.array([[parse_complex(z) for z in row.split(",")] for row in rows])


def period_data(mu, c_a, c_b, Bcal, diagnostics=None):
    """Assemble PeriodData from a (boundary) auxiliary period matrix."""
    gamma, delta, beta, _ = assemble_siegel(mu, Bcal)
    e_a, e_b = dual_abelian_coeffs(Bcal)
    diag = {
        "dual_normalization_error": dual_normalization_error(Bcal, (e_a, e_b)),
        "gamma_from_dual_periods": gamma_from_dual_periods(Bcal),
        "det_times_mu2": float(np.linalg.det(Bcal) * mu * mu),
    }
    diag.update(diagnostics or {})
    return PeriodData(mu, complex(c_a), complex(c_b), np.array(Bcal, dtype=float), gamma, delta, beta, e_a, e_b, diag)
