import numpy as np
import pytest

from storagedqn.pricing import default_chain
from storagedqn.scenarios import (
    LengthMismatchError,
    MissingColumnError,
    NegativeValueError,
    NonNumericError,
    Scenario,
    TimeSeries,
    load_scenario_csv,
    resample_interleaved,
    split_train_test,
    synth_load,
    synth_pv,
    synthetic_scenarios,
    write_scenario_csv,
)

SLOT = 5 / 60
PER_DAY = 288


def test_resample_constant():
    raw = TimeSeries(np.full(3000, 7.0), 1.0)
    for seq in resample_interleaved(raw, 300, 25):
        np.testing.assert_array_equal(seq.values, np.full(10, 7.0))


def test_resample_first_block_mean():
    raw = TimeSeries(np.arange(1, 301, dtype=float), 1.0)
    out = resample_interleaved(raw, 300, 25)
    assert len(out) == 25
    assert out[0].values[0] == pytest.approx(6.5)  # mean of 1..12
    assert out[24].values[0] == pytest.approx(np.mean(np.arange(289, 301)))
    assert out[0].resolution_seconds == 300


def test_resample_against_loop():
    rng = np.random.default_rng(0)
    raw = TimeSeries(rng.normal(size=1234), 2.0)
    out = resample_interleaved(raw, 60, 4)  # 30 samples per slot, blocks of 7
    for k, seq in enumerate(out):
        assert len(seq) == 1234 // 30
        for t in range(len(seq)):
            block = raw.values[t * 30 + k * 7 : t * 30 + (k + 1) * 7]
            assert seq.values[t] == pytest.approx(block.mean(), abs=1e-12)


def test_resample_length():
    raw = TimeSeries(np.zeros(300 * 7 + 299), 1.0)
    assert all(len(s) == 7 for s in resample_interleaved(raw, 300, 25))


@pytest.mark.parametrize("slot, n", [(300.5, 25), (300, 301), (300, 0)])
def test_resample_rejects_bad_layout(slot, n):
    raw = TimeSeries(np.zeros(3000), 1.0)
    with pytest.raises(ValueError):
        resample_interleaved(raw, slot, n)


def test_synth_load_properties():
    a = synth_load(5 * PER_DAY, SLOT, seed=1)
    assert np.all(a >= 0)
    np.testing.assert_array_equal(a, synth_load(5 * PER_DAY, SLOT, seed=1))
    quiet = synth_load(3 * PER_DAY, SLOT, seed=1, noise_kw=0.0)
    np.testing.assert_array_equal(quiet[:PER_DAY], quiet[PER_DAY : 2 * PER_DAY])
    # evening peak dominates the night trough
    assert quiet[19 * 12] > quiet[3 * 12]


def test_synth_load_clamped_at_zero():
    a = synth_load(1000, SLOT, seed=4, base_kw=0.0, morning_kw=0.0, evening_kw=0.0)
    assert np.all(a >= 0) and np.any(a == 0)


def test_synth_pv_properties():
    pv = synth_pv(4 * PER_DAY, SLOT, seed=2)
    hour = (np.arange(pv.size) % PER_DAY) / 12
    night = (hour <= 6) | (hour >= 18)
    assert np.all(pv[night] == 0)
    assert np.all(pv >= 0)
    np.testing.assert_array_equal(pv, synth_pv(4 * PER_DAY, SLOT, seed=2))
    quiet = synth_pv(PER_DAY, SLOT, seed=2, cloud_noise=0.0)
    assert int(np.argmax(quiet)) == 12 * 12


def _scenario(n=5):
    return Scenario(np.arange(n) + 1.0, np.zeros(n), np.full(n, 0.1), SLOT)


def test_scenario_validation():
    with pytest.raises(LengthMismatchError):
        Scenario([1, 2], [1], [0.1, 0.1])
    with pytest.raises(NegativeValueError):
        Scenario([1, -2], [1, 1], [0.1, 0.1])
    with pytest.raises(ValueError):
        Scenario([1, np.nan], [1, 1], [0.1, 0.1])
    with pytest.raises(ValueError):
        Scenario([], [], [])


def test_windows_drop_remainder():
    sc = _scenario(10)
    wins = sc.windows(3)
    assert [w.horizon for w in wins] == [3, 3, 3]
    np.testing.assert_array_equal(wins[1].load_kw, [4, 5, 6])


def test_csv_round_trip(tmp_path):
    sc = synthetic_scenarios(1, 50, SLOT, default_chain(), seed=3)[0]
    path = tmp_path / "s.csv"
    write_scenario_csv(path, sc)
    assert load_scenario_csv(path) == sc
    first = path.read_text().splitlines()[:2]
    assert first[0] == "timestamp,load_kw,pv_kw,price_per_kwh"
    assert first[1].startswith("2012-07-01T00:00:00,")


def test_csv_three_rows(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(
        "timestamp,load_kw,pv_kw,price_per_kwh\n"
        "2012-07-01T00:00:00,10,0,0.1\n"
        "2012-07-01T00:05:00,12,1.5,0.1\n"
        "2012-07-01T00:10:00,9,2,0.12\n"
    )
    sc = load_scenario_csv(path)
    assert sc.horizon == 3
    np.testing.assert_allclose(sc.net_demand_kw, [10, 10.5, 7])


def test_csv_column_order_is_free(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("price_per_kwh,pv_kw,load_kw,timestamp\n0.2,1,3,x\n")
    sc = load_scenario_csv(path)
    assert sc.load_kw[0] == 3 and sc.pv_kw[0] == 1 and sc.price_per_kwh[0] == 0.2


@pytest.mark.parametrize(
    "body, error, fragment",
    [
        ("timestamp,load_kw,price_per_kwh\nt,1,0.1\n", MissingColumnError, "pv_kw"),
        ("timestamp,load_kw,pv_kw,price_per_kwh\nt,1,abc,0.1\n", NonNumericError, "pv_kw"),
        ("timestamp,load_kw,pv_kw,price_per_kwh\nt,1,0,0.1\nt,1,0\n", LengthMismatchError, "price_per_kwh=1"),
        ("timestamp,load_kw,pv_kw,price_per_kwh\nt,1,0,0.1\nt,-4,0,0.1\n", NegativeValueError, "row 2"),
        ("timestamp,load_kw,pv_kw,price_per_kwh\nt,nan,0,0.1\n", NonNumericError, "load_kw"),
    ],
)
def test_csv_diagnostics(tmp_path, body, error, fragment):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(error, match=fragment):
        load_scenario_csv(path)


def test_negative_load_names_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("timestamp,load_kw,pv_kw,price_per_kwh\nt,1,0,0.1\nt,-4,0,0.1\n")
    with pytest.raises(NegativeValueError, match="column load_kw"):
        load_scenario_csv(path)


def test_split_train_test():
    items = list(range(25))
    train, test = split_train_test(items, 2, seed=0)
    assert len(train) == 23 and len(test) == 2
    assert set(train) | set(test) == set(items)
    assert not set(train) & set(test)
    assert split_train_test(items, 2, seed=0) == (train, test)
    assert split_train_test(items, 0, seed=0) == (items, [])
    with pytest.raises(ValueError):
        split_train_test(items, 25, seed=0)
    with pytest.raises(ValueError):
        split_train_test(items, -1, seed=0)


def test_synthetic_scenarios_deterministic():
    a = synthetic_scenarios(3, 100, SLOT, default_chain(), seed=11)
    b = synthetic_scenarios(3, 100, SLOT, default_chain(), seed=11)
    assert a == b
    assert a[0] != a[1]
    assert all(s.horizon == 100 for s in a)
