"""Sweep driver: configuration, per-point pipeline, FEM artifact cache and outputs.

A configuration is a flat ``key=value`` file.  Sweep values are given on
repeated lines (``eps=`` for the torus family, ``mu=`` for the synthetic
family); tolerances use a ``tol.`` prefix::

    family=torus-hole
    tau_lat=0+1i
    h_target=0.05
    N=16
    n_boundary=256
    eps=0.3
    eps=0.2
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fem
from .circle import BoundaryFunction, BoundaryOperator, dn_disk, format_complex, operator_distance, parse_complex
from .collar import attach_trends, build_report, write_report_csv
from .errors import DNDegenError, GeometryError, NearDegenerate
from .mesh import build_disk_mesh, build_mesh, parallelogram_inradius
from .periods import (
    bcal_from_boundary,
    bcal_from_energy,
    bcal_from_interior,
    extract_c,
    normalize_symmetric,
    period_data,
    relative_entry_errors,
    siegel_matrix,
)
from .spectral import extract_mu, make_synthetic_dn, smoothing_defect
from .theta import classify_degeneration, rosenhain

log = logging.getLogger(__name__)

FAMILIES = ("torus-hole", "disk-sanity", "synthetic")

DEFAULT_TOLERANCES = {
    "trace_residual": 0.05,
    "normalization": 0.05,
    "oracle": 0.05,
    "det": 0.02,
}


@dataclass(frozen=True)
class ExperimentConfig:
    family: str = "torus-hole"
    tau_lat: complex = 1j
    eps: tuple = (0.3, 0.2, 0.1, 0.05)
    mu: tuple = ()
    h_target: float = 0.05
    N: int = 16
    n_boundary: int = 256
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: str = "out"
    cache: bool = True
    cache_dir: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.family == "torus-hole":
            if not self.eps:
                raise ValueError("torus-hole sweep needs at least one eps")
            if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
                raise ValueError("eps list must be strictly decreasing")
            limit = 0.8 * parallelogram_inradius(self.tau_lat)
            for e in self.eps:
                if not 0 < e < limit:
                    raise GeometryError(f"eps={e} outside (0, {limit:.4g}) for tau_lat={self.tau_lat}")
        if self.family == "synthetic":
            if not self.mu:
                raise ValueError("synthetic sweep needs at least one mu")
            if any(not 0 < m < 1 for m in self.mu):
                raise ValueError("synthetic mu values must lie in (0, 1)")

    @property
    def points(self):
        if self.family == "torus-hole":
            return tuple(self.eps)
        if self.family == "synthetic":
            return tuple(self.mu)
        return (float("nan"),)

    @property
    def cache_path(self):
        return Path(self.cache_dir) if self.cache_dir else Path(self.out) / "cache"

    def tol(self, name):
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))


_SCALAR_KEYS = {"family": str, "tau_lat": parse_complex, "h_target": float, "N": int,
                "n_boundary": int, "out": str, "cache_dir": str}


def parse_config(text):
    """Parse key=value text into an ExperimentConfig."""
    kw, eps, mus, tols = {}, [], [], dict(DEFAULT_TOLERANCES)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        if key == "eps":
            eps.append(float(value))
        elif key == "mu":
            mus.append(float(value))
        elif key.startswith("tol."):
            tols[key[4:]] = float(value)
        elif key == "cache":
            kw["cache"] = value.lower() in ("1", "on", "true", "yes")
        elif key in _SCALAR_KEYS:
            kw[key] = _SCALAR_KEYS[key](value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    if eps:
        kw["eps"] = tuple(eps)
    if mus:
        kw["mu"] = tuple(mus)
    kw["tolerances"] = tols
    return ExperimentConfig(**kw)


def load_config(path):
    return parse_config(Path(path).read_text())


def format_config(cfg):
    lines = [f"family={cfg.family}", f"tau_lat={format_complex(cfg.tau_lat)}",
             f"h_target={cfg.h_target!r}", f"N={cfg.N}", f"n_boundary={cfg.n_boundary}"]
    lines += [f"eps={e!r}" for e in cfg.eps] if cfg.family == "torus-hole" else []
    lines += [f"mu={m!r}" for m in cfg.mu] if cfg.family == "synthetic" else []
    lines += [f"tol.{k}={v!r}" for k, v in sorted(cfg.tolerances.items())]
    lines += [f"out={cfg.out}", f"cache={'on' if cfg.cache else 'off'}"]
    if cfg.cache_dir:
        lines.append(f"cache_dir={cfg.cache_dir}")
    return "\n".join(lines) + "\n"


def cache_key(fragment):
    """Content hash of the inputs that determine the finite-element artifacts.

    ``fragment`` maps names to values (family, tau_lat, eps, h_target, N and
    optionally n_boundary).  Floats are written with repr, complex numbers
    as ``a+bi``, and keys are sorted, so equal inputs give equal keys
    regardless of order.
    """
    def canon(v):
        if isinstance(v, (complex, np.complexfloating)):
            return format_complex(v)
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        return str(v)

    text = "\n".join(f"{k}={canon(fragment[k])}" for k in sorted(fragment))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def point_fragment(cfg, eps):
    return {"family": cfg.family, "tau_lat": complex(cfg.tau_lat), "eps": float(eps),
            "h_target": float(cfg.h_target), "N": int(cfg.N), "n_boundary": int(cfg.n_boundary)}


# --- finite-element stage --------------------------------------------------------

ARTIFACT_KEYS = ("dn", "trace_a", "trace_b", "bcal_interior", "bcal_energy", "modulus",
                 "n_triangles", "n_boundary", "euler", "closed_defect")


def compute_torus_artifacts(cfg, eps):
    """All finite-element outputs needed downstream for one hole radius."""
    surface = build_mesh(cfg.tau_lat, eps, cfg.h_target, n_boundary=cfg.n_boundary)
    dn = fem.assemble_dn(surface, cfg.N, calibrate=True)
    ua, ub = fem.harmonic_form_basis(surface)
    return {
        "dn": dn.matrix,
        "trace_a": fem.form_boundary_trace(ua, cfg.N).coefficients,
        "trace_b": fem.form_boundary_trace(ub, cfg.N).coefficients,
        "bcal_interior": bcal_from_interior(surface, (ua, ub)),
        "bcal_energy": bcal_from_energy((ua, ub)),
        "modulus": np.float64(fem.doubled_collar_modulus(surface)),
        "n_triangles": np.int64(len(surface.triangles)),
        "n_boundary": np.int64(len(surface.boundary)),
        "euler": np.int64(surface.euler_characteristic(closed_up=True)),
        "closed_defect": np.float64(max(ua.circulation_defect(), ub.circulation_defect())),
    }


def load_or_compute(cfg, eps, use_cache=True):
    """FEM artifacts for one point, read from or written to the cache.

    Returns (artifacts, hit).
    """
    path = cfg.cache_path / f"{cache_key(point_fragment(cfg, eps))}.npz"
    if use_cache and path.exists():
        with np.load(path) as data:
            return {k: data[k] for k in ARTIFACT_KEYS}, True
    art = compute_torus_artifacts(cfg, eps)
    if use_cache:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".{os.getpid()}.tmp.npz")
        np.savez(tmp, **art)
        os.replace(tmp, path)
    return art, False


# --- downstream pipeline -------------------------------------------------------------


@dataclass
class PointResult:
    """Outputs of the pipeline for one sweep point, before classification."""

    key: float
    report: object
    siegel: np.ndarray | None = None
    periods: object = None
    error: str | None = None
    cache_hit: bool = False


def _fmt(x):
    return repr(float(x))


def downstream(cfg, key, dn, traces, bcal_interior=None, modulus=float("nan"), flags=None):
    """Spectral, period, Siegel, theta and collar stages for one DN operator."""
    flags = dict(flags or {})
    eps = key if cfg.family == "torus-hole" else float("nan")
    dist = operator_distance(dn, dn_disk(dn.N))
    spec = extract_mu(dn)
    if not spec.found:
        raise DNDegenError("no discrete eigenvalue of iH in the search band")
    flags["smoothing_defect"] = _fmt(smoothing_defect(dn))
    fits = [extract_c(dn, spec, t, cfg.tol("trace_residual")) for t in traces]
    flags["trace_residual"] = _fmt(max(f.residual for f in fits))
    c_a, c_b = fits[0].c, fits[1].c
    Bcal, defect = bcal_from_boundary(spec.mu, c_a, c_b, strict=True, threshold=cfg.tol("normalization"))
    flags["normalization_defect"] = _fmt(defect)
    det_err = abs(np.linalg.det(Bcal) * spec.mu**2 - 1.0)
    flags["det_error"] = _fmt(det_err)
    if det_err > cfg.tol("det"):
        flags["det_check"] = "fail"
    if bcal_interior is not None:
        oracle = float(relative_entry_errors(bcal_interior, Bcal).max())
        flags["oracle_error"] = _fmt(oracle)
        flags["det_error_interior"] = _fmt(abs(np.linalg.det(bcal_interior) * spec.mu**2 - 1.0))
        if oracle > cfg.tol("oracle"):
            flags["oracle_check"] = "fail"
    pd = period_data(spec.mu, c_a, c_b, Bcal)
    norm = normalize_symmetric(pd.gamma, pd.delta, pd.beta)
    flags["moves"] = "|".join(norm.moves) or "none"
    if norm.flags:
        flags["domain"] = "reduction-incomplete"
    B = siegel_matrix(norm.gamma, norm.delta, norm.beta)
    try:
        ros = rosenhain(B)
    except NearDegenerate as exc:
        ros = exc
    report = build_report(eps, spec.mu, dist, Bcal, (norm.gamma, norm.delta, norm.beta), ros, modulus, flags=flags)
    return PointResult(key, report, B, pd)


def run_point(cfg, key, use_cache=True):
    """Full pipeline for one sweep point; errors are captured in the report."""
    try:
        if cfg.family == "torus-hole":
            art, hit = load_or_compute(cfg, key, use_cache)
            dn = BoundaryOperator(art["dn"], cfg.N, "dn")
            traces = [BoundaryFunction(art[k], cfg.N) for k in ("trace_a", "trace_b")]
            flags = {"n_triangles": int(art["n_triangles"]), "euler": int(art["euler"]),
                     "closed_defect": _fmt(art["closed_defect"])}
            res = downstream(cfg, key, dn, traces, art["bcal_interior"], float(art["modulus"]), flags)
            res.cache_hit = hit
            return res
        if cfg.family == "synthetic":
            return run_synthetic_point(cfg, key)
        return run_disk_point(cfg)
    except (DNDegenError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("point %r failed: %s", key, exc)
        eps = key if cfg.family == "torus-hole" else float("nan")
        msg = f"{type(exc).__name__}: {exc}"
        return PointResult(key, build_report(eps, flags={"error": msg}), error=msg)


def synthetic_traces(dn, spec, mu):
    """Boundary traces of a square-torus-like dual basis for a synthetic DN map.

    c_a = s, c_b = i s with 2 mu (1 - mu^2) s^2 = 1, so the normalization
    holds exactly and Bcal = [[0, -1/mu], [1/mu, 0]].
    """
    s = 1.0 / math.sqrt(2.0 * mu * (1.0 - mu**2))
    traces = []
    for c in (s, 1j * s):
        ceta = spec.eta * c
        f = ceta + ceta.conj()
        traces.append(BoundaryFunction(-(1.0 - mu**2) * (dn.matrix @ f.coefficients), dn.N))
    return traces


def run_synthetic_point(cfg, mu):
    dn = make_synthetic_dn(mu, cfg.N)
    spec = extract_mu(dn)
    res = downstream(cfg, mu, dn, synthetic_traces(dn, spec, spec.mu), flags={"synthetic_mu": _fmt(mu)})
    return res


def run_disk_point(cfg):
    """Unit-disk sanity run: DN error against diag(|k|) and absence of mu."""
    surface = build_disk_mesh(cfg.h_target)
    dn = fem.assemble_dn(surface, cfg.N)
    exact = dn_disk(cfg.N)
    rel = float(np.linalg.norm(dn.matrix - exact.matrix) / np.linalg.norm(exact.matrix))
    spec = extract_mu(dn)
    flags = {"dn_error": _fmt(rel), "mu": "absent" if not spec.found else _fmt(spec.mu),
             "n_triangles": len(surface.triangles)}
    report = build_report(float("nan"), float("nan") if not spec.found else spec.mu,
                          operator_distance(dn, exact), flags=flags)
    return PointResult(float("nan"), report)


def _run_point_job(args):
    cfg, key, use_cache = args
    return run_point(cfg, key, use_cache)


@dataclass
class SweepResult:
    results: list
    reports: list
    trends: dict
    case_label: str
    csv_path: Path
    plots: list

    @property
    def n_failed(self):
        return sum(r.error is not None for r in self.results)

    @property
    def exit_code(self):
        if self.n_failed == 0:
            return 0
        return 1 if self.n_failed == len(self.results) else 2


def classify_results(results):
    """Attach case labels and per-point diagnostics; returns the overall label."""
    ok = [r for r in results if r.error is None and r.siegel is not None]
    if len(ok) < 3:
        for r in ok:
            r.report.case_label = "n/a"
        return "n/a"
    seq = sorted(ok, key=lambda r: r.report.mu)
    label, points = classify_degeneration([(r.siegel, r.report.mu) for r in seq])
    for r, p in zip(seq, points):
        r.report.case_label = label
        r.report.flags["case_prefix"] = p.label
        r.report.flags["norm_B"] = _fmt(p.norm_B)
        r.report.flags["norm_inv_imB"] = _fmt(p.norm_inv_imB)
        r.report.flags["abs_beta"] = _fmt(p.abs_beta)
    return label


def run_sweep(cfg, workers=1, use_cache=None, plots=True):
    """Run every point of the sweep, write report.csv (and SVG plots) into cfg.out."""
    use_cache = cfg.cache if use_cache is None else use_cache
    keys = cfg.points
    jobs = [(cfg, k, use_cache) for k in keys]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_point_job, jobs))
    else:
        results = [_run_point_job(j) for j in jobs]
    label = classify_results(results)
    reports = [r.report for r in results]
    # trends only mean something for the geometric degenerating family
    trends = attach_trends(reports) if cfg.family == "torus-hole" else {}
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "report.csv"
    write_report_csv(csv_path, reports)
    files = []
    if plots:
        from .plotting import plot_sweep

        files = plot_sweep(reports, out, x="eps" if cfg.family == "torus-hole" else "mu")
    return SweepResult(results, reports, trends, label, csv_path, files)


def with_overrides(cfg, **kw):
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
