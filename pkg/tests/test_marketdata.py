import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmtfolio import (
    EmptyUniverseError,
    MissingDataError,
    PricePanel,
    PriceParseError,
    filter_fully_liquid,
    log_returns,
    parse_prices,
    serialize_prices,
)
from rmtfolio.synthetic import business_days, returns_to_prices


def _panel(prices, tickers=None):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    tickers = tickers or tuple(f"T{j}" for j in range(prices.shape[1]))
    return PricePanel(business_days(prices.shape[0]), tuple(tickers), prices)


class TestParse:
    def test_minimal_long_file(self):
        panel = parse_prices("date,ticker,close\n2004-01-02,AAA,100\n2004-01-05,AAA,110\n")
        assert panel.shape == (2, 1)
        assert panel.tickers == ("AAA",)
        np.testing.assert_array_equal(panel.prices[:, 0], [100.0, 110.0])

    @pytest.mark.parametrize("bad", ["−5", "-5", "0"])
    def test_non_positive_price_names_the_cell(self, bad):
        text = f"date,ticker,close\n2004-01-02,AAA,100\n2004-01-05,AAA,{bad}\n"
        with pytest.raises(PriceParseError) as info:
            parse_prices(text)
        assert info.value.row == 3
        assert info.value.column == "close"

    def test_wide_non_positive_names_ticker_column(self):
        with pytest.raises(PriceParseError) as info:
            parse_prices("date,AAA,BBB\n2004-01-02,1,2\n2004-01-05,3,−1\n", "wide")
        assert (info.value.row, info.value.column) == (3, "BBB")

    def test_rows_are_sorted_by_date(self):
        panel = parse_prices("date,ticker,close\n2004-01-05,A,2\n2004-01-02,A,1\n")
        assert list(panel.dates.astype(str)) == ["2004-01-02", "2004-01-05"]
        np.testing.assert_array_equal(panel.prices[:, 0], [1.0, 2.0])

    def test_long_missing_observation_becomes_gap(self):
        text = "date,ticker,close\n2004-01-02,A,1\n2004-01-02,B,2\n2004-01-05,A,3\n"
        panel = parse_prices(text)
        assert panel.missing.tolist() == [[False, False], [False, True]]

    @pytest.mark.parametrize("token", ["NA", "-", "null"])
    def test_sentinel_token(self, token):
        panel = parse_prices(f"date,A,B\n2004-01-02,1,{token}\n2004-01-05,2,3\n", "wide", missing_token=token)
        assert panel.missing.sum() == 1

    @pytest.mark.parametrize(
        "text, layout",
        [
            ("date,ticker,close\n2004-01-02,A,1\n2004-01-02,A,2\n", "long"),
            ("date,A\n2004-01-02,1\n2004-01-02,2\n", "wide"),
            ("day,ticker,close\n2004-01-02,A,1\n", "long"),
            ("date,A,A\n2004-01-02,1,2\n", "wide"),
            ("date,ticker,close\n02/01/2004,A,1\n", "long"),
            ("", "long"),
        ],
    )
    def test_malformed_inputs_raise(self, text, layout):
        with pytest.raises(PriceParseError):
            parse_prices(text, layout)

    def test_large_round_trip(self):
        # 248 trading days of 61 tickers, written and read back.
        rng = np.random.default_rng(7)
        prices = returns_to_prices(rng.normal(0, 0.02, size=(247, 61)))
        panel = _panel(prices)
        for layout in ("long", "wide"):
            back = parse_prices(serialize_prices(panel, layout), layout)
            assert back.shape == (248, 61)
            assert back.equals(panel)

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.lists(
                st.one_of(st.none(), st.floats(min_value=1e-6, max_value=1e9, allow_nan=False)),
                min_size=3,
                max_size=3,
            ),
            min_size=1,
            max_size=12,
        ),
        st.sampled_from(["long", "wide"]),
    )
    def test_serialize_parse_is_bit_identical(self, rows, layout):
        prices = np.array([[math.nan if v is None else v for v in r] for r in rows])
        if layout == "long" and (np.isnan(prices[0]).any() or np.all(np.isnan(prices), axis=1).any()):
            # Long form lists tickers in order of first appearance and cannot
            # carry a date on which nothing traded.
            return
        panel = _panel(prices)
        text = serialize_prices(panel, layout)
        again = parse_prices(text, layout)
        assert again.equals(panel)
        assert serialize_prices(again, layout) == text

    def test_panels_are_read_only(self):
        panel = _panel([1.0, 2.0])
        with pytest.raises(ValueError):
            panel.prices[0, 0] = 5.0


class TestLiquidity:
    def test_identity_on_complete_panel(self):
        panel = _panel(np.ones((4, 3)))
        assert filter_fully_liquid(panel).equals(panel)

    def test_single_gap_drops_ticker(self):
        prices = np.ones((5, 3))
        prices[2, 1] = np.nan
        assert filter_fully_liquid(_panel(prices)).tickers == ("T0", "T2")

    def test_all_gappy_raises(self):
        with pytest.raises(EmptyUniverseError):
            filter_fully_liquid(_panel([[1.0, np.nan], [np.nan, 2.0]]))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force_scan(self, seed):
        rng = np.random.default_rng(seed)
        n_dates, n_tickers = 30, 40
        prices = np.full((n_dates, n_tickers), 10.0)
        gappy = rng.random(n_tickers) < 0.5
        for j in np.flatnonzero(gappy):
            prices[rng.integers(n_dates), j] = np.nan
        panel = _panel(prices)
        expected = []
        for j, t in enumerate(panel.tickers):
            if all(not math.isnan(prices[i, j]) for i in range(n_dates)):
                expected.append(t)
        if not expected:
            pytest.skip("every ticker drew a gap")
        out = filter_fully_liquid(panel)
        assert list(out.tickers) == expected
        assert filter_fully_liquid(out).equals(out)


class TestLogReturns:
    def test_single_step(self):
        r = log_returns(_panel([100.0, 110.0]))
        assert r.returns.shape == (1, 1)
        assert r.returns[0, 0] == pytest.approx(math.log(1.1), rel=1e-15)
        assert r.returns[0, 0] == pytest.approx(0.0953, abs=1e-4)

    def test_constant_prices(self):
        np.testing.assert_array_equal(log_returns(_panel([7.0, 7.0, 7.0])).returns[:, 0], [0.0, 0.0])

    def test_round_trip_prices(self):
        r = log_returns(_panel([100.0, 50.0, 100.0])).returns[:, 0]
        np.testing.assert_allclose(r, [-math.log(2), math.log(2)], rtol=1e-15)
        assert r.sum() == pytest.approx(0.0, abs=1e-15)

    def test_missing_raises(self):
        with pytest.raises(MissingDataError):
            log_returns(_panel([1.0, np.nan, 2.0]))

    def test_dates_drop_first(self):
        panel = _panel(np.ones((4, 2)))
        assert np.array_equal(log_returns(panel).dates, panel.dates[1:])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(min_value=1e-3, max_value=1e6), min_size=2, max_size=50))
    def test_telescoping_sum(self, prices):
        r = log_returns(_panel(prices)).returns[:, 0]
        expected = math.log(prices[-1] / prices[0])
        assert r.sum() == pytest.approx(expected, rel=1e-12, abs=1e-12)
