import csv
import math
import xml.etree.ElementTree as ET

import pytest

from dndegen import experiments, fem
from dndegen.cli import main
from dndegen.collar import REPORT_COLUMNS, read_report_csv
from dndegen.errors import GeometryError, SolverError
from dndegen.experiments import (
    ExperimentConfig,
    cache_key,
    format_config,
    parse_config,
    point_fragment,
    run_point,
    run_sweep,
    with_overrides,
)
from dndegen.theta import CASE_I

TORUS_TEXT = """\
family=torus-hole
tau_lat=0+1i
h_target=0.05
N=16
eps=0.3
eps=0.2
tol.oracle=0.05
"""


class TestConfig:
    def test_parse(self):
        cfg = parse_config(TORUS_TEXT + "# comment\ncache=off\n")
        assert cfg.family == "torus-hole" and cfg.tau_lat == 1j
        assert cfg.eps == (0.3, 0.2) and cfg.N == 16 and not cfg.cache
        assert cfg.tol("oracle") == 0.05 and cfg.tol("det") == 0.02

    def test_format_roundtrip(self):
        cfg = parse_config(TORUS_TEXT)
        assert parse_config(format_config(cfg)) == cfg

    def test_synthetic(self):
        cfg = parse_config("family=synthetic\nmu=0.5\nmu=0.9\n")
        assert cfg.points == (0.5, 0.9)

    @pytest.mark.parametrize("text,exc", [
        ("family=torus-hole\neps=0.1\neps=0.2\n", ValueError),
        ("family=torus-hole\neps=0.45\n", GeometryError),
        ("family=sphere\n", ValueError),
        ("family=synthetic\nmu=1.2\n", ValueError),
        ("colour=blue\n", ValueError),
        ("eps 0.1\n", ValueError),
    ])
    def test_invalid(self, text, exc):
        with pytest.raises(exc):
            parse_config(text)


class TestCacheKey:
    def fragment(self, **kw):
        return point_fragment(with_overrides(ExperimentConfig(), **kw), kw.get("eps", 0.1))

    def test_stable(self):
        assert cache_key(self.fragment()) == cache_key(self.fragment())
        assert len(cache_key(self.fragment())) == 64

    def test_twelfth_decimal(self):
        a = cache_key(point_fragment(ExperimentConfig(), 0.1))
        b = cache_key(point_fragment(ExperimentConfig(), 0.100000000001))
        assert a != b

    def test_order_independent(self):
        frag = point_fragment(ExperimentConfig(), 0.1)
        assert cache_key(dict(reversed(list(frag.items())))) == cache_key(frag)

    def test_reordered_config_lines(self):
        lines = TORUS_TEXT.strip().splitlines()
        shuffled = "\n".join(lines[::-1]) + "\n"
        # eps lines keep their relative order; everything else is reordered
        shuffled = shuffled.replace("eps=0.2\neps=0.3", "eps=0.3\neps=0.2")
        a, b = parse_config(TORUS_TEXT), parse_config(shuffled)
        assert cache_key(point_fragment(a, 0.3)) == cache_key(point_fragment(b, 0.3))

    def test_depends_on_mesh_inputs(self):
        base = cache_key(point_fragment(ExperimentConfig(), 0.1))
        assert cache_key(point_fragment(ExperimentConfig(h_target=0.04), 0.1)) != base
        assert cache_key(point_fragment(ExperimentConfig(N=12), 0.1)) != base


class TestTorusSweep:
    def test_rows_and_trends(self, torus_sweep):
        _, first, _, _, _ = torus_sweep
        assert first.exit_code == 0 and len(first.reports) == 4
        assert set(first.trends.values()) == {"pass"}
        assert first.case_label == CASE_I
        for r in first.reports:
            assert float(r.flags["oracle_error"]) <= 0.05
            assert float(r.flags["det_error"]) <= 0.02
            assert r.flags["euler"] == 0

    def test_rerun_from_cache(self, torus_sweep):
        _, _, second, factorizations, (csv1, csv2) = torus_sweep
        assert factorizations == 0
        assert all(r.cache_hit for r in second.results)
        assert csv1 == csv2

    def test_csv_schema(self, torus_sweep):
        _, first, _, _, _ = torus_sweep
        with open(first.csv_path) as fh:
            header = next(csv.reader(fh))
        assert tuple(header) == REPORT_COLUMNS
        assert len(read_report_csv(first.csv_path)) == 4

    def test_svg_plots(self, torus_sweep):
        _, first, _, _, _ = torus_sweep
        names = sorted(p.name for p in first.plots)
        assert names == ["abs_beta_vs_eps.svg", "dn_distance_vs_eps.svg", "geo_bound_vs_eps.svg", "mu_vs_eps.svg"]
        for p in first.plots:
            root = ET.parse(p).getroot()
            assert root.tag.endswith("svg")
            assert root.get("viewBox") == "0 0 800 600"

    def test_error_row_keeps_others(self, torus_sweep, tmp_path, monkeypatch):
        cfg = torus_sweep[0]
        real = experiments.load_or_compute

        def flaky(c, eps, use_cache=True):
            if eps == 0.2:
                raise SolverError("injected failure")
            return real(c, eps, use_cache)

        monkeypatch.setattr(experiments, "load_or_compute", flaky)
        res = run_sweep(with_overrides(cfg, out=str(tmp_path), cache_dir=str(cfg.cache_path)), plots=False)
        assert res.exit_code == 2
        bad = [r for r in res.reports if r.failed]
        assert len(bad) == 1 and bad[0].eps == 0.2 and "injected" in bad[0].flags["error"]
        assert res.trends["mu_increasing"] == "pass"

    def test_all_failed(self, tmp_path, monkeypatch):
        def broken(c, eps, use_cache=True):
            raise SolverError("nope")

        monkeypatch.setattr(experiments, "load_or_compute", broken)
        res = run_sweep(ExperimentConfig(out=str(tmp_path)), plots=False)
        assert res.exit_code == 1


class TestOtherFamilies:
    def test_synthetic(self, tmp_path):
        cfg = ExperimentConfig(family="synthetic", mu=(0.5, 0.9, 0.99), N=16, out=str(tmp_path))
        res = run_sweep(cfg)
        assert res.exit_code == 0 and len(res.reports) == 3
        for r, mu in zip(res.reports, (0.5, 0.9, 0.99)):
            assert abs(r.mu - mu) <= 1e-10
            assert r.Bcal_ab == pytest.approx(-1 / mu, rel=1e-8)
            assert math.isnan(r.eps)
        assert sorted(p.name for p in res.plots) == ["abs_beta_vs_mu.svg", "dn_distance_vs_mu.svg"]

    def test_disk_sanity(self, tmp_path):
        cfg = ExperimentConfig(family="disk-sanity", N=8, h_target=0.04, out=str(tmp_path))
        res = run_sweep(cfg, plots=False)
        assert len(res.reports) == 1
        r = res.reports[0]
        assert r.flags["mu"] == "absent" and math.isnan(r.mu)
        assert float(r.flags["dn_error"]) <= 2e-2

    def test_run_point_records_error(self):
        cfg = ExperimentConfig(family="synthetic", mu=(0.5,), N=2)
        res = run_point(cfg, 0.5)
        assert res.error is None


class TestCLI:
    @pytest.fixture
    def torus_cfg(self, torus_sweep, tmp_path):
        cfg = torus_sweep[0]
        path = tmp_path / "torus.cfg"
        path.write_text(f"eps=0.3\neps=0.2\neps=0.1\ncache_dir={cfg.cache_path}\n")
        return path

    def synthetic_cfg(self, tmp_path):
        path = tmp_path / "syn.cfg"
        path.write_text("family=synthetic\nmu=0.5\nmu=0.9\nmu=0.99\n")
        return path

    def test_forward(self, torus_cfg, tmp_path, capsys):
        before = fem.FACTORIZATIONS
        assert main(["forward", "--config", str(torus_cfg), "--out", str(tmp_path / "o")]) == 0
        assert fem.FACTORIZATIONS == before
        assert (tmp_path / "o" / "dn_eps0.3.txt").exists()
        assert "cached=True" in capsys.readouterr().out

    def test_spectrum(self, torus_cfg, tmp_path, capsys):
        assert main(["spectrum", "--config", str(torus_cfg), "--out", str(tmp_path / "o")]) == 0
        assert "mu=0.55" in capsys.readouterr().out

    def test_periods(self, tmp_path):
        assert main(["periods", "--config", str(self.synthetic_cfg(tmp_path)), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "periods_0.5.txt").exists()
        assert (tmp_path / "o" / "periods_0.5_siegel.txt").exists()

    def test_theta_manual(self, tmp_path, capsys):
        assert main(["theta", "--siegel", "0.25", "1.5", "0.5", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "theta_manual.csv").exists()
        assert "lam1=" in capsys.readouterr().out

    def test_sweep_and_report(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["sweep", "--config", str(self.synthetic_cfg(tmp_path)), "--out", str(out)]) == 0
        assert (out / "report.csv").exists()
        (out / "abs_beta_vs_mu.svg").unlink()
        assert main(["report", "--config", str(self.synthetic_cfg(tmp_path)), "--out", str(out)]) == 0
        assert (out / "abs_beta_vs_mu.svg").exists()

    def test_report_runs_sweep_when_missing(self, tmp_path):
        out = tmp_path / "fresh"
        assert main(["report", "--config", str(self.synthetic_cfg(tmp_path)), "--out", str(out)]) == 0
        assert (out / "report.csv").exists()

    def test_bad_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("eps=0.9\n")
        assert main(["sweep", "--config", str(bad)]) == 1
        assert "configuration error" in capsys.readouterr().err

    def test_forward_needs_torus(self, tmp_path):
        assert main(["forward", "--config", str(self.synthetic_cfg(tmp_path)), "--out", str(tmp_path)]) == 1

    def test_no_cache_flag(self, tmp_path):
        path = tmp_path / "d.cfg"
        path.write_text("family=disk-sanity\nN=4\nh_target=0.1\n")
        assert main(["sweep", "--no-cache", "--config", str(path), "--out", str(tmp_path / "o")]) == 0

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit):
            main([])
