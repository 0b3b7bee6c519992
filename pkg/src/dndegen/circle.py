"""Functions and operators on the unit circle in a truncated Fourier basis.

A function on the circle is stored by its coefficients ``f_k`` for
``k = -N..N`` so that ``f(phi) = sum_k f_k exp(i k phi)``.  Operators are
dense ``(2N+1) x (2N+1)`` matrices acting on those coefficient vectors.
The L2 pairing on the circle (measure ``dphi``) is ``2*pi * g^H f``, hence
a Hermitian matrix is a self-adjoint operator.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NotMeanZero, SingularDN, TruncationMismatch

TWO_PI = 2.0 * math.pi

OPERATOR_KINDS = ("dn", "hilbert", "derivative", "modulus-derivative", "generic")

MEAN_ZERO_TOL = 1e-12


def mode_numbers(N):
    return np.arange(-N, N + 1)


@dataclass(frozen=True, eq=False)
class BoundaryFunction:
    """Truncated Fourier series of a complex function on the unit circle."""

    coefficients: np.ndarray
    N: int

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex).copy()
        if self.N < 1:
            raise ValueError("truncation N must be positive")
        if c.shape != (2 * self.N + 1,):
            raise ValueError(f"expected {2 * self.N + 1} coefficients, got shape {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @classmethod
    def zeros(cls, N):
        return cls(np.zeros(2 * N + 1, dtype=complex), N)

    @classmethod
    def from_modes(cls, N, modes):
        """Build from a ``{k: coefficient}`` mapping."""
        c = np.zeros(2 * N + 1, dtype=complex)
        for k, v in modes.items():
            if abs(k) > N:
                raise ValueError(f"mode {k} exceeds truncation {N}")
            c[k + N] = v
        return cls(c, N)

    @classmethod
    def from_samples(cls, phi, values, N):
        """Project nodal values at angles ``phi`` onto modes -N..N.

        Uses the trapezoidal rule, so ``phi`` should be (close to) uniformly
        spaced over a full period.
        """
        phi = np.asarray(phi, dtype=float)
        values = np.asarray(values, dtype=complex)
        k = mode_numbers(N)
        c = np.exp(-1j * np.outer(k, phi)) @ values / len(phi)
        return cls(c, N)

    def mode(self, k):
        return self.coefficients[k + self.N]

    @property
    def mean(self):
        return self.coefficients[self.N]

    def is_mean_zero(self, tol=MEAN_ZERO_TOL):
        return abs(self.mean) <= tol

    def conj(self):
        """Coefficients of the pointwise complex conjugate function."""
        return BoundaryFunction(np.conj(self.coefficients[::-1]), self.N)

    def evaluate(self, phi):
        phi = np.asarray(phi, dtype=float)
        return np.exp(1j * np.multiply.outer(phi, mode_numbers(self.N))) @ self.coefficients

    def l2_norm(self):
        return math.sqrt(TWO_PI) * float(np.linalg.norm(self.coefficients))

    def __add__(self, other):
        _check_same_N(self.N, other.N)
        return BoundaryFunction(self.coefficients + other.coefficients, self.N)

    def __sub__(self, other):
        _check_same_N(self.N, other.N)
        return BoundaryFunction(self.coefficients - other.coefficients, self.N)

    def __neg__(self):
        return BoundaryFunction(-self.coefficients, self.N)

    def __mul__(self, scalar):
        return BoundaryFunction(self.coefficients * scalar, self.N)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return BoundaryFunction(self.coefficients / scalar, self.N)

    def save(self, path):
        """Coefficient format: ``N=<int>`` then one ``k,a+bi`` line per mode."""
        lines = [f"N={self.N}"]
        lines += [f"{k},{format_complex(c)}" for k, c in zip(mode_numbers(self.N), self.coefficients)]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path):
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
        N = int(lines[0].partition("=")[2])
        modes = {}
        for ln in lines[1:]:
            k, _, z = ln.partition(",")
            modes[int(k)] = parse_complex(z)
        return cls.from_modes(N, modes)


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    """Dense operator on truncated Fourier coefficients.

    ``kind="dn"`` operators are validated on construction: Hermitian,
    constants in the kernel, and positive semidefinite on mean-zero modes.
    """

    matrix: np.ndarray
    N: int
    kind: str = "generic"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex).copy()
        n = 2 * self.N + 1
        if m.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix, got {m.shape}")
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        if self.kind == "dn":
            defects = dn_defects(self)
            if defects["hermitian"] > 1e-10:
                raise ValueError(f"DN operator not Hermitian (defect {defects['hermitian']:.3e})")
            if defects["constant"] > 1e-8:
                raise ValueError(f"DN operator does not annihilate constants (defect {defects['constant']:.3e})")
            if defects["min_rayleigh"] < -1e-8:
                raise ValueError(f"DN operator not PSD on mean-zero functions ({defects['min_rayleigh']:.3e})")

    def apply(self, f):
        _check_same_N(self.N, f.N)
        return BoundaryFunction(self.matrix @ f.coefficients, self.N)

    def __matmul__(self, other):
        if isinstance(other, BoundaryFunction):
            return self.apply(other)
        _check_same_N(self.N, other.N)
        return BoundaryOperator(self.matrix @ other.matrix, self.N, "generic")

    def save(self, path, metadata=None):
        """Write the text matrix file plus a ``.meta`` key=value sidecar."""
        path = Path(path)
        lines = [f"N={self.N}"]
        for row in self.matrix:
            lines.append(",".join(format_complex(z) for z in row))
        path.write_text("\n".join(lines) + "\n")
        meta = {"N": self.N, "kind": self.kind}
        meta.update(self.metadata)
        meta.update(metadata or {})
        write_keyvalue(path.with_name(path.name + ".meta"), meta)

    @classmethod
    def load(cls, path):
        path = Path(path)
        lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
        if not lines[0].startswith("N="):
            raise ValueError(f"{path}: first line must be 'N=<int>'")
        N = int(lines[0][2:])
        rows = [[parse_complex(tok) for tok in ln.split(",")] for ln in lines[1:]]
        meta_path = path.with_name(path.name + ".meta")
        kind, metadata = "generic", {}
        if meta_path.exists():
            metadata = read_keyvalue(meta_path)
            kind = metadata.pop("kind", "generic")
            metadata.pop("N", None)
        return cls(np.array(rows, dtype=complex), N, kind, metadata)


def _check_same_N(n1, n2):
    if n1 != n2:
        raise TruncationMismatch(f"truncations differ: {n1} vs {n2}")


_COMPLEX_RE = re.compile(r"^\s*(?P<re>[+-]?(?:nan|inf|[0-9.]+(?:e[+-]?\d+)?))(?P<sign>[+-])(?P<im>nan|inf|[0-9.]+(?:e[+-]?\d+)?)i\s*$")


def format_complex(z):
    z = complex(z)
    sign = "-" if math.copysign(1.0, z.imag) < 0 else "+"
    return f"{z.real!r}{sign}{abs(z.imag)!r}i"


def parse_complex(text):
    m = _COMPLEX_RE.match(text.lower())
    if not m:
        raise ValueError(f"cannot parse complex entry {text!r}")
    im = float(m.group("im"))
    return complex(float(m.group("re")), -im if m.group("sign") == "-" else im)


def write_keyvalue(path, mapping):
    Path(path).write_text("".join(f"{k}={_kv_repr(v)}\n" for k, v in mapping.items()))


def _kv_repr(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, complex):
        return format_complex(v)
    return str(v)


def read_keyvalue(path):
    """Read a key=value file; values are returned as strings."""
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def dn_defects(op):
    """Hermiticity, constant-kernel and PSD residuals of an operator."""
    m = op.matrix
    scale = max(1.0, float(np.linalg.norm(m)))
    herm = float(np.linalg.norm(m - m.conj().T)) / scale
    N = op.N
    const = float(max(np.linalg.norm(m[:, N]), np.linalg.norm(m[N, :]))) / scale
    mz = _mean_zero_index(N)
    block = 0.5 * (m[np.ix_(mz, mz)] + m[np.ix_(mz, mz)].conj().T)
    min_ray = float(np.linalg.eigvalsh(block)[0]) / scale
    return {"hermitian": herm, "constant": const, "min_rayleigh": min_ray}


def _mean_zero_index(N):
    idx = np.arange(2 * N + 1)
    return idx[idx != N]


def dn_disk(N=32):
    """DN map of the unit disk: multiplication of mode k by |k|."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return BoundaryOperator(np.diag(np.abs(mode_numbers(N)).astype(complex)), N, "dn")


def derivative(N=32):
    """The angular derivative d/dphi."""
    return BoundaryOperator(np.diag(1j * mode_numbers(N)), N, "derivative")


def modulus_derivative(N=32):
    return BoundaryOperator(np.diag(np.abs(mode_numbers(N)).astype(complex)), N, "modulus-derivative")


def mean_zero_pinv(dn, tol=1e-12):
    """Inverse of a DN operator on the mean-zero subspace, zero on constants."""
    N = dn.N
    mz = _mean_zero_index(N)
    block = dn.matrix[np.ix_(mz, mz)]
    smin = np.linalg.svd(block, compute_uv=False)[-1]
    if smin <= tol:
        raise SingularDN(f"DN map singular on mean-zero functions (smallest singular value {smin:.3e})")
    inv = np.zeros_like(dn.matrix)
    inv[np.ix_(mz, mz)] = np.linalg.inv(block)
    return inv


def hilbert_from_dn(dn):
    """Hilbert transform ``H = -Lambda^{-1} d/dphi`` of a DN operator."""
    if dn.kind != "dn":
        raise ValueError("hilbert_from_dn expects an operator of kind 'dn'")
    inv = mean_zero_pinv(dn)
    H = -inv @ np.diag(1j * mode_numbers(dn.N))
    return BoundaryOperator(H, dn.N, "hilbert")


def lambda_inner(dn, f, g):
    """The pairing ``(Lambda f, g)`` in L2 of the circle, for mean-zero f, g."""
    for name, u in (("f", f), ("g", g)):
        if not u.is_mean_zero():
            raise NotMeanZero(f"{name} has mean {abs(u.mean):.3e}")
    _check_same_N(dn.N, f.N)
    _check_same_N(dn.N, g.N)
    return complex(TWO_PI * np.vdot(g.coefficients, dn.matrix @ f.coefficients))


def sobolev_weight(N):
    return np.sqrt(1.0 + mode_numbers(N).astype(float) ** 2)


def operator_distance(op, ref):
    """Discrete H^1 -> L2 operator norm of ``op - ref``."""
    if op.N != ref.N:
        raise TruncationMismatch(f"truncations differ: {op.N} vs {ref.N}")
    diff = (op.matrix - ref.matrix) / sobolev_weight(op.N)[None, :]
    return float(np.linalg.norm(diff, 2))
