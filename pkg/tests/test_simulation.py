import json
import math
import warnings

import numpy as np
import pytest

from oos_error import DistributionSpec, ScenarioConfig
from oos_error.config import ConfigError, load_config, parse_config
from oos_error.exceptions import InvalidParameters, NonIntegralAllocation, OosError, TooFewReplicates
from oos_error.simulation import (
    TABLE_SOURCES,
    allocate,
    format_table,
    replicate_seed,
    reproduce_table,
    run_monte_carlo,
    sample_dataset,
    simulate_estimates,
    table_config,
    worker_count,
)


def test_allocate_strict_and_lenient():
    np.testing.assert_array_equal(allocate(100, (0.2, 0.3, 0.5)), [20, 30, 50])
    with pytest.raises(NonIntegralAllocation):
        allocate(7, (0.5, 0.5))
    np.testing.assert_array_equal(allocate(7, (0.5, 0.5), strict=False), [4, 3])
    np.testing.assert_array_equal(allocate(10, (0.15, 0.25, 0.6), strict=False), [2, 2, 6])
    with pytest.raises(NonIntegralAllocation):
        allocate(3, (0.1, 0.9), strict=False)


def test_strict_config_rejects_bad_grid():
    with pytest.raises(NonIntegralAllocation):
        ScenarioConfig(sources=((DistributionSpec.normal(0, 1), 0.5), (DistributionSpec.normal(1, 1), 0.5)),
                       n_grid=(7,))


def test_config_validation():
    src = ((DistributionSpec.normal(0, 1), 0.5), (DistributionSpec.normal(1, 1), 0.5))
    with pytest.raises(OosError):
        ScenarioConfig(sources=src, rule="median", n_grid=(10,))
    with pytest.raises(OosError, match="unknown loss"):
        ScenarioConfig(sources=src, loss="hinge", n_grid=(10,))
    with pytest.raises(InvalidParameters):
        ScenarioConfig(sources=src, n_grid=(10,), labels=("a",))
    with pytest.raises(OosError):
        table_config(5)


def test_replicates_are_deterministic_across_workers():
    cfg = table_config(1, reps=1500, master_seed=17, n_grid=(100,))
    a = simulate_estimates(cfg, 100, 0, workers=1)
    b = simulate_estimates(cfg, 100, 0, workers=2)
    assert np.array_equal(a, b)


def test_replicate_matches_single_dataset_path():
    from oos_error import oos_estimate
    cfg = table_config(2, reps=5, master_seed=3, n_grid=(100,))
    est = simulate_estimates(cfg, 100, 0)
    for r in range(5):
        ds = sample_dataset(cfg, 100, replicate_seed(3, 0, r))
        assert est[r] == pytest.approx(oos_estimate(ds).total, rel=1e-12)


def test_worker_count_env_cap(monkeypatch):
    monkeypatch.setenv("OOS_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.delenv("OOS_THREADS")
    assert worker_count(3) == 3
    assert worker_count(None) >= 1


@pytest.mark.parametrize("spec", [
    DistributionSpec.normal(2, 5),
    DistributionSpec.uniform(3, 7),
    DistributionSpec.shifted_t(7, 2),
    DistributionSpec.gamma(10, 2),
    DistributionSpec.exponential(1),
])
def test_sampler_moments(spec):
    x = spec.sample(np.random.default_rng(0), 1_000_000)
    se = math.sqrt(spec.var / x.size)
    assert abs(x.mean() - spec.mean) <= 4 * se
    # sample variance within 4 standard errors using the empirical fourth moment
    m4 = np.mean((x - x.mean()) ** 4)
    se_var = math.sqrt((m4 - spec.var ** 2) / x.size)
    assert abs(x.var(ddof=1) - spec.var) <= 4 * se_var


def test_gamma_uses_rate():
    g = DistributionSpec.gamma(10, 2)
    assert g.mean == 5.0 and g.var == 2.5


def test_degenerate_and_invalid_specs():
    with pytest.raises(InvalidParameters):
        DistributionSpec.uniform(1, 1)
    with pytest.raises(InvalidParameters):
        DistributionSpec.normal(0, 0)
    with pytest.raises(InvalidParameters):
        DistributionSpec.shifted_t(2)
    with pytest.raises(InvalidParameters):
        DistributionSpec("cauchy", (0, 1))
    with pytest.raises(InvalidParameters):
        DistributionSpec.normal(0, float("inf"))


def test_heavy_t_warns():
    with pytest.warns(UserWarning):
        DistributionSpec.shifted_t(3, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        DistributionSpec.shifted_t(5, 0)


def test_parse_specs():
    assert DistributionSpec.parse("normal(0, 9)") == DistributionSpec.normal(0, 9)
    assert DistributionSpec.parse("t(5)") == DistributionSpec.shifted_t(5, 0)
    assert DistributionSpec.parse(" exp(2) ") == DistributionSpec.exponential(2)
    assert str(DistributionSpec.gamma(10, 2)) == "gamma(10, 2)"
    for bad in ("normal 0 9", "normal(a, 1)", "normal(1)"):
        with pytest.raises(InvalidParameters):
            DistributionSpec.parse(bad)


def test_monte_carlo_report_fields():
    cfg = table_config(1, reps=200, master_seed=1, n_grid=(100, 200))
    rep = run_monte_carlo(cfg)
    assert [r.n for r in rep.rows] == [100, 200]
    for r in rep.rows:
        assert r.reps == 200
        assert r.mse == pytest.approx(r.bias2 + r.var, rel=1e-15)
        assert r.se == pytest.approx(math.sqrt(r.var / 200))
        assert r.mu_os == pytest.approx(cfg.closed_form_oos(r.n))
    assert rep.row("squared", 200).n == 200
    with pytest.raises(KeyError):
        rep.row("absolute", 100)


def test_non_normal_report_has_no_closed_form():
    rep = run_monte_carlo(table_config(2, reps=50, n_grid=(100,)))
    r = rep.rows[0]
    assert r.mu_os is None and r.bias2 is None and r.mse is None
    assert rep.to_csv().splitlines()[1].endswith(",,,")


def test_reps_validation():
    with pytest.raises(TooFewReplicates, match="reps must be ≥ 2"):
        run_monte_carlo(table_config(1, reps=1, n_grid=(100,)))
    with pytest.raises(TooFewReplicates):
        reproduce_table(1, reps=1)


def test_reproduce_caps_large_n():
    rep = reproduce_table(1, reps=30, n_grid=(100, 10_000), large_n_reps=20)
    assert [(r.loss, r.n, r.reps) for r in rep.rows] == [
        ("squared", 100, 30), ("squared", 10_000, 20), ("absolute", 100, 30), ("absolute", 10_000, 20)]
    text = format_table(rep, precision=3)
    assert "squared" in text and "absolute" in text and "10000" in text


def test_csv_and_json_agree():
    rep = run_monte_carlo(table_config(1, reps=100, n_grid=(100,)))
    rows = rep.to_csv(4).splitlines()
    assert rows[0] == ",".join(rep.FIELDS)
    csv_vals = dict(zip(rows[0].split(","), rows[1].split(",")))
    js = json.loads(rep.to_json(4))[0]
    for key in ("mean", "var", "se", "mu_os", "bias2", "mse"):
        assert float(csv_vals[key]) == pytest.approx(js[key], abs=1e-12)
    assert js["n"] == 100


def test_table_presets():
    assert set(TABLE_SOURCES) == {1, 2, 3, 4}
    cfg = table_config(4)
    assert [s.mean for s in cfg.specs] == [1.0, 2.0, 5.0]
    assert cfg.proportions == (0.2, 0.3, 0.5)


GOOD = """\
[sources]
F1 = { dist = "normal(0, 9)", p = 0.2 }
F2 = { dist = "normal(2, 1)", p = 0.3 }
F3 = { dist = "normal(5, 5)", p = 0.5 }

[run]
loss = "absolute"
n_grid = [100, 200]
reps = 50
seed = 9
"""


def test_parse_config_roundtrip(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text(GOOD)
    cfg = load_config(path)
    assert cfg.loss == "absolute" and cfg.n_grid == (100, 200) and cfg.reps == 50
    assert cfg.master_seed == 9 and cfg.source_labels == ("F1", "F2", "F3")
    assert cfg.specs[0] == DistributionSpec.normal(0, 9)


@pytest.mark.parametrize("text,line,fragment", [
    (GOOD.replace("seed = 9", "seeed = 9"), 10, "unknown key 'seeed'"),
    (GOOD + "[extra]\nx = 1\n", 11, "unknown section"),
    (GOOD.replace('p = 0.3 }', 'p = 0.3, w = 1 }'), 3, "unknown key 'w'"),
    (GOOD.replace('"normal(2, 1)"', '"normal(2, -1)"'), 3, "invalid parameters"),
])
def test_config_errors_report_line(text, line, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, "s.toml")
    msg = str(exc.value)
    assert f"line {line}:" in msg and fragment in msg


def test_config_syntax_and_missing():
    with pytest.raises(ConfigError):
        parse_config("[sources\n")
    with pytest.raises(ConfigError, match="missing"):
        parse_config("[run]\nreps = 3\n")
    with pytest.raises(ConfigError, match="lacks"):
        parse_config('[sources]\na = { dist = "normal(0, 1)" }\n')
