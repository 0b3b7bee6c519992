"""Collar-lemma quantities and the per-point degeneration report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

from .errors import NonPositiveLength, NonPositiveModulus


def _check_length(l):
    if not l > 0 or not math.isfinite(l):
        raise NonPositiveLength(f"length must be positive and finite, got {l!r}")


def collar_halfwidth(l):
    """Half-width asinh(1 / sinh(l/2)) of the standard collar around a geodesic of length l.

    Evaluated as -log(tanh(l/4)), which is the same function and stays
    accurate for tiny l, where 1/sinh(l/2) would lose digits or overflow.
    """
    _check_length(l)
    return -math.log(math.tanh(0.25 * l))


def collar_halfwidth_direct(l):
    """Textbook form asinh(1/sinh(l/2)); kept for comparison with the stable form."""
    _check_length(l)
    return math.asinh(1.0 / math.sinh(0.5 * l))


def collar_halfwidth_derivative(l):
    """d/dl of the collar half-width: -1 / (2 sinh(l/2))."""
    _check_length(l)
    return -0.5 / math.sinh(0.5 * l)


def collar_log_radius(l):
    """r = pi^2 / l: the collar is the annulus e^{-r} < |z| < 1 with the core removed."""
    _check_length(l)
    return math.pi**2 / l


def collar_log_hole_radius(l):
    """log of the removed disk radius e^{-r}; stays finite where e^{-r} underflows."""
    return -collar_log_radius(l)


def collar_log_radius_derivative(l):
    _check_length(l)
    return -(math.pi**2) / l**2


def geodesic_upper_bound(m):
    """pi / m: length bound for the geodesic in the core class of an annulus of modulus m."""
    if not m > 0 or not math.isfinite(m):
        raise NonPositiveModulus(f"modulus must be positive and finite, got {m!r}")
    return math.pi / m


# --- report ------------------------------------------------------------------

REPORT_COLUMNS = (
    "eps",
    "mu",
    "dn_distance",
    "Bcal_aa",
    "Bcal_ab",
    "Bcal_ba",
    "Bcal_bb",
    "gamma",
    "delta",
    "beta",
    "lam1_re",
    "lam1_im",
    "abs_lam2",
    "abs_lam3",
    "modulus",
    "geo_bound",
    "collar_L",
    "case_label",
    "flags",
)

_TEXT_COLUMNS = ("case_label", "flags")
NAN = float("nan")


@dataclass
class DegenerationReport:
    """One row of the sweep report.

    Missing quantities are NaN; failures and markers (for instance a
    vanishing Rosenhain denominator) are recorded in ``flags``.
    ``geo_bound`` bounds the geodesic in the class of the boundary curve.
    """

    eps: float = NAN
    mu: float = NAN
    dn_distance: float = NAN
    Bcal_aa: float = NAN
    Bcal_ab: float = NAN
    Bcal_ba: float = NAN
    Bcal_bb: float = NAN
    gamma: float = NAN
    delta: float = NAN
    beta: float = NAN
    lam1_re: float = NAN
    lam1_im: float = NAN
    abs_lam2: float = NAN
    abs_lam3: float = NAN
    modulus: float = NAN
    geo_bound: float = NAN
    collar_L: float = NAN
    case_label: str = "n/a"
    flags: dict = field(default_factory=dict)

    @property
    def failed(self):
        return "error" in self.flags

    def row(self):
        out = []
        for name in REPORT_COLUMNS:
            v = getattr(self, name)
            if name == "flags":
                out.append(format_flags(v))
            elif name in _TEXT_COLUMNS:
                out.append(str(v))
            else:
                out.append(repr(float(v)))
        return out

    @classmethod
    def from_row(cls, row):
        kw = {}
        for name, text in zip(REPORT_COLUMNS, row):
            if name == "flags":
                kw[name] = parse_flags(text)
            elif name in _TEXT_COLUMNS:
                kw[name] = text
            else:
                kw[name] = float(text)
        return cls(**kw)


def format_flags(flags):
    """Semicolon-separated key=value pairs; values must not contain ';' or '='."""
    parts = []
    for k, v in flags.items():
        v = repr(v) if isinstance(v, float) else str(v)
        parts.append(f"{k}={v.replace(';', ',').replace('=', ':')}")
    return ";".join(parts)


def parse_flags(text):
    out = {}
    for part in filter(None, text.split(";")):
        k, _, v = part.partition("=")
        out[k] = v
    return out


def collar_fields(modulus):
    """(geo_bound, collar_L) for a doubled-collar modulus."""
    bound = geodesic_upper_bound(modulus)
    return bound, collar_halfwidth(bound)


def build_report(eps, mu=NAN, dn_distance=NAN, Bcal=None, siegel=None, rosenhain=None,
                 modulus=NAN, case_label="n/a", flags=None):
    """Assemble one report row from the stage outputs.

    ``siegel`` is a (gamma, delta, beta) triple; ``rosenhain`` is either a
    RosenhainTriple or an exception describing why it is missing.
    """
    r = DegenerationReport(eps=float(eps), mu=float(mu), dn_distance=float(dn_distance),
                           case_label=case_label, flags=dict(flags or {}))
    if Bcal is not None:
        r.Bcal_aa, r.Bcal_ab = float(Bcal[0][0]), float(Bcal[0][1])
        r.Bcal_ba, r.Bcal_bb = float(Bcal[1][0]), float(Bcal[1][1])
    if siegel is not None:
        r.gamma, r.delta, r.beta = (float(x) for x in siegel)
    if isinstance(rosenhain, Exception):
        r.flags["rosenhain"] = type(rosenhain).__name__ + (
            f"({rosenhain.characteristic})" if getattr(rosenhain, "characteristic", None) else "")
    elif rosenhain is not None:
        r.lam1_re, r.lam1_im = rosenhain.lam1.real, rosenhain.lam1.imag
        r.abs_lam2, r.abs_lam3 = abs(rosenhain.lam2), abs(rosenhain.lam3)
    if math.isfinite(modulus):
        r.modulus = float(modulus)
        try:
            r.geo_bound, r.collar_L = collar_fields(modulus)
        except NonPositiveModulus as exc:
            r.flags["collar"] = str(exc)
    return r


TRENDS = (
    ("mu_increasing", "mu", +1),
    ("dn_distance_decreasing", "dn_distance", -1),
    ("modulus_increasing", "modulus", +1),
    ("geo_bound_decreasing", "geo_bound", -1),
)


def trend_flags(reports):
    """Strict monotone trends along a sweep, in sweep order (decreasing eps).

    Rows with errors or NaN values in a column are skipped for that column;
    fewer than two usable rows give "n/a".
    """
    ordered = [r for r in reports if not r.failed]
    out = {}
    for name, col, sign in TRENDS:
        vals = [getattr(r, col) for r in ordered]
        vals = [v for v in vals if math.isfinite(v)]
        if len(vals) < 2:
            out[name] = "n/a"
        else:
            ok = all(sign * (q - p) > 0 for p, q in zip(vals, vals[1:]))
            out[name] = "pass" if ok else "fail"
    return out


def attach_trends(reports):
    """Copy the sequence trend flags into each report's flags."""
    trends = trend_flags(reports)
    for r in reports:
        for k, v in trends.items():
            r.flags[f"trend.{k}"] = v
    return trends


def write_report_csv(path, reports):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.row())


def read_report_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != REPORT_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {rows[0]}")
    return [DegenerationReport.from_row(row) for row in rows[1:]]


def report_field_names():
    return tuple(f.name for f in fields(DegenerationReport))
