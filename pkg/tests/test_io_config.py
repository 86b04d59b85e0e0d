"""File formats and run configuration."""

import datetime as dt
import json

import numpy as np
import pytest

from stepcp import ConfigurationError, DataError
from stepcp import io
from stepcp.config import RunConfig, apply_overrides, load_config
from stepcp.events import ExceedanceSeries
from stepcp.posterior import PosteriorEnsemble

PROV = io.provenance_line("abc123", 7)


class TestProvenance:
    def test_line(self):
        assert PROV == "# provenance config_sha256=abc123 seed=7\n"


class TestDailyCSV:
    def test_reads_with_header_and_missing(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("date,value\n2000-01-01,1.5\n2000-01-02,\n2000-01-03,NA\n2000-01-05,2.0\n")
        s = io.read_daily_csv(p)
        assert s.start_date == dt.date(2000, 1, 1)
        assert len(s) == 5
        assert s.missing.tolist() == [False, True, True, True, False]
        assert s.values[4] == 2.0

    def test_comments_skipped(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("# note\n2000-01-01,1\n2000-01-02,2\n")
        assert len(io.read_daily_csv(p)) == 2

    @pytest.mark.parametrize(
        "body,needle",
        [
            ("2000-01-01,1\n2000-01-01,2\n", ":2:"),
            ("2000-01-01,1\n2000-13-01,2\n", ":2:"),
            ("2000-01-01,abc\n", ":1:"),
            ("2000-01-01,-1\n", ":1:"),
            ("2000-01-01\n", ":1:"),
            ("date,value\n", "no data rows"),
        ],
    )
    def test_errors_name_the_line(self, tmp_path, body, needle):
        p = tmp_path / "bad.csv"
        p.write_text(body)
        with pytest.raises(DataError, match=needle):
            io.read_daily_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            io.read_daily_csv(tmp_path / "nope.csv")


class TestExceedanceFile:
    def test_roundtrip(self, tmp_path, rng):
        ev = ExceedanceSeries(np.sort(rng.uniform(0, 100, 20)), 100.0)
        p = tmp_path / "e.csv"
        io.write_exceedances(p, ev, PROV, dt.date(1993, 1, 4))
        text = p.read_text()
        assert text.startswith(PROV)
        assert "\nt\n" in text
        back, start = io.read_exceedances(p)
        assert np.array_equal(back.times, ev.times)
        assert back.horizon == 100.0 and start == dt.date(1993, 1, 4)

    def test_without_start_date(self, tmp_path):
        p = tmp_path / "e.csv"
        io.write_exceedances(p, ExceedanceSeries(np.array([1.0]), 2.0), PROV)
        assert io.read_exceedances(p)[1] is None

    def test_horizon_required(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("t\n1.0\n")
        with pytest.raises(DataError, match="horizon"):
            io.read_exceedances(p)

    def test_bad_time(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text("# horizon=10\ntime\n1.0\nx\n")
        with pytest.raises(DataError, match=":4:"):
            io.read_exceedances(p)


class TestEnsembleFile:
    def test_roundtrip_exact(self, tmp_path):
        ens = PosteriorEnsemble(
            [(), (1 / 3,), (0.1, 2.7182818284590455)],
            [(0.1,), (0.2, 1 / 7), (1e-300, 2.0, 3.0)],
            10.0,
            {"acceptance_rate": {"birth": 0.25}, "seconds": 1.2},
        )
        p = tmp_path / "ens.csv"
        io.write_ensemble(p, ens, PROV, dt.date(2000, 1, 1))
        text = p.read_text()
        assert "diagnostics.acceptance_rate.birth=0.25" in text
        assert "seconds" not in text
        back, start = io.read_ensemble(p)
        assert back.changepoints == ens.changepoints and back.heights == ens.heights
        assert start == dt.date(2000, 1, 1)

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "ens.csv"
        p.write_text("# horizon=10\n1,2.0,0.5\n")
        with pytest.raises(DataError, match="expected 4 fields"):
            io.read_ensemble(p)

    def test_empty(self, tmp_path):
        p = tmp_path / "ens.csv"
        p.write_text("# horizon=10\n")
        with pytest.raises(DataError):
            io.read_ensemble(p)


class TestTableAndJSON:
    def test_table(self, tmp_path):
        p = tmp_path / "t.csv"
        io.write_table(p, ["a", "b"], np.array([[1.0, 0.1], [2.0, 0.2]]), PROV)
        lines = p.read_text().splitlines()
        assert lines[0] == PROV.strip() and lines[1] == "a,b" and lines[2] == "1.0,0.1"

    def test_json_serialises_numpy_and_dates(self, tmp_path):
        p = tmp_path / "r.json"
        io.write_json(p, {"x": np.float64(1.5), "k": np.int64(2), "a": np.arange(2), "d": dt.date(2001, 2, 3)}, "h", 1)
        d = json.loads(p.read_text())
        assert d["provenance"] == {"config_sha256": "h", "seed": 1}
        assert d["x"] == 1.5 and d["k"] == 2 and d["a"] == [0, 1] and d["d"] == "2001-02-03"


class TestConfig:
    def test_defaults(self):
        cfg = load_config()
        assert cfg.quantile == 0.9 and cfg.chain.n_updates == 500_000 and cfg.chain.thin == 40
        assert cfg.bandwidths.location == 95.0 and cfg.bandwidths.height == 0.003
        assert cfg.prior.mu == 4.5 and cfg.prior.k_max == 20

    def test_file_then_overrides_then_seed(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"m0": 2, "chain": {"thin": 20, "seed": 1}}))
        cfg = load_config(p, ["chain.thin=10", "prior.mu=1"], seed=99)
        assert cfg.m0 == 2 and cfg.chain.thin == 10 and cfg.prior.mu == 1.0 and cfg.chain.seed == 99
        assert isinstance(cfg.prior.mu, float)

    def test_hash_ignores_seed_only(self):
        a, b = load_config(seed=1), load_config(seed=2)
        assert a.sha256() == b.sha256()
        assert load_config(overrides=["m0=2"]).sha256() != a.sha256()

    def test_roundtrip_dict(self):
        cfg = load_config(overrides=["replication.conditional=false"])
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize(
        "overrides",
        [["nope=1"], ["chain.burnin=1"], ["chain.thin=0"], ["include_trend=1"], ["m0=1.5"], ["prior=3"], ["bad"]],
    )
    def test_invalid(self, overrides):
        with pytest.raises(ConfigurationError):
            load_config(overrides=overrides)

    def test_bad_json_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{")
        with pytest.raises(ConfigurationError):
            load_config(p)

    def test_override_string_fallback(self):
        assert apply_overrides({}, ["input=data.csv"]) == {"input": "data.csv"}

    def test_pipeline_settings_carry_values(self):
        s = load_config(overrides=["pipeline.max_iter=2", "bandwidths.location=50"]).pipeline_settings()
        assert s.max_iter == 2 and s.location_bandwidth == 50.0 and s.chain.n_updates == 500_000
