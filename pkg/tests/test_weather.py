"""Tests for weather ingest: adapters, serialization, store, poller."""

import json
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arweather.mockserver import MockWeatherServer, load_fixture
from arweather.weather import (
    InvariantViolation,
    NetworkError,
    NoDataYet,
    ParseError,
    PollConfig,
    SchemaError,
    UnknownCity,
    WeatherRecord,
    WeatherStore,
    _weather_data_path,
    aqi_from_pm25,
    fetch_observations,
    from_json,
    latest,
    load_cities,
    parse_cwb,
    parse_epa,
    poll_loop,
    poll_once,
    to_json,
)

THREE_CITIES = [
    {"city": "Taipei", "uv_index": 4.0, "temperature_c": 22.0, "rainfall_mm_hr": 0.5},
    {"city": "Taichung", "uv_index": 6.5, "temperature_c": 25.5, "rainfall_mm_hr": 0.0},
    {"city": "Kaohsiung", "uv_index": 8.0, "temperature_c": 28.0, "rainfall_mm_hr": 2.5},
]


def cwb_payload(ts=1000, stations=THREE_CITIES):
    return {"source": "cwb", "generated_at": ts, "stations": stations}


def epa_payload(ts=1000, sites=None):
    if sites is None:
        sites = [{"city": s["city"], "pm25_ugm3": 10.0} for s in THREE_CITIES]
    return {"source": "epa", "generated_at": ts, "sites": sites}


@pytest.fixture(scope="module")
def cities():
    return load_cities()


class TestRecordValidation:
    def test_negative_uv_rejected(self):
        with pytest.raises(InvariantViolation):
            WeatherRecord(city="Taipei", timestamp=0, uv_index=-0.1)

    def test_aqi_over_500_rejected(self):
        with pytest.raises(InvariantViolation):
            WeatherRecord(city="Taipei", timestamp=0, pm25_aqi=600)

    def test_negative_rain_rejected(self):
        with pytest.raises(InvariantViolation):
            WeatherRecord(city="Taipei", timestamp=0, rainfall_mm_hr=-1.0)

    def test_merge_fills_only_absent_fields(self):
        old = WeatherRecord("Taipei", 10, uv_index=3.0, pm25_aqi=40)
        new = WeatherRecord("Taipei", 20, uv_index=5.0, temperature_c=21.0)
        merged = new.merged_onto(old)
        assert merged.uv_index == 5.0
        assert merged.temperature_c == 21.0
        assert merged.pm25_aqi == 40
        assert merged.rainfall_mm_hr is None


class TestSerialization:
    def golden_text(self):
        return _weather_data_path("golden_record.json").read_text()

    def test_golden_record_exact_text(self):
        record = WeatherRecord(
            city="Taipei",
            timestamp=1718000000,
            uv_index=5.5,
            temperature_c=28.4,
            pm25_aqi=aqi_from_pm25(16.3),
            rainfall_mm_hr=1.5,
        )
        assert to_json(record) == self.golden_text()

    def test_golden_record_parses_back(self):
        record = from_json(self.golden_text())
        assert record.city == "Taipei"
        assert record.pm25_aqi == 60
        assert record.rainfall_mm_hr == 1.5

    def test_key_order_is_fixed(self):
        record = WeatherRecord("Penghu", 5, uv_index=1.0)
        keys = list(json.loads(to_json(record)).keys())
        assert keys == [
            "city", "timestamp", "uv_index", "temperature_c", "pm25_aqi", "rainfall_mm_hr",
        ]

    def test_negative_aqi_text_rejected(self):
        bad = '{"city":"Taipei","timestamp":0,"uv_index":0,"temperature_c":0,"pm25_aqi":-1,"rainfall_mm_hr":0}'
        with pytest.raises(InvariantViolation):
            from_json(bad)

    def test_not_json(self):
        with pytest.raises(ParseError):
            from_json("{nope")

    def test_missing_field(self):
        with pytest.raises(ParseError):
            from_json('{"city":"Taipei","timestamp":0}')

    def test_non_numeric_field(self):
        bad = '{"city":"Taipei","timestamp":0,"uv_index":"high","temperature_c":0,"pm25_aqi":0,"rainfall_mm_hr":0}'
        with pytest.raises(ParseError):
            from_json(bad)

    @settings(max_examples=200, deadline=None)
    @given(
        uv=st.one_of(st.none(), st.floats(0, 20, allow_nan=False)),
        temp=st.one_of(st.none(), st.floats(-40, 50, allow_nan=False)),
        aqi=st.one_of(st.none(), st.integers(0, 500)),
        rain=st.one_of(st.none(), st.floats(0, 300, allow_nan=False)),
        ts=st.integers(0, 2**33),
    )
    def test_roundtrip_identity(self, uv, temp, aqi, rain, ts):
        record = WeatherRecord(
            city="Hualien", timestamp=ts, uv_index=uv,
            temperature_c=temp, pm25_aqi=aqi, rainfall_mm_hr=rain,
        )
        assert from_json(to_json(record)) == record


class TestAqiConversion:
    @pytest.mark.parametrize(
        "conc,expected",
        [(0.0, 0), (12.0, 50), (35.4, 100), (55.4, 150),
         (150.4, 200), (250.4, 300), (500.4, 500), (9.0, 38), (700.0, 500)],
    )
    def test_breakpoint_anchors(self, conc, expected):
        assert aqi_from_pm25(conc) == expected

    def test_monotone_nondecreasing(self):
        values = [aqi_from_pm25(c / 10) for c in range(0, 5200, 7)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_negative_concentration(self):
        with pytest.raises(InvariantViolation):
            aqi_from_pm25(-1.0)


class TestAdapters:
    def test_cwb_three_cities(self, cities):
        records, dropped = parse_cwb(cwb_payload(), cities)
        assert dropped == 0
        assert [r.city for r in records] == ["Taipei", "Taichung", "Kaohsiung"]
        assert records[0].uv_index == 4.0
        assert records[0].temperature_c == 22.0
        assert records[0].rainfall_mm_hr == 0.5
        assert records[0].pm25_aqi is None
        assert all(r.timestamp == 1000 for r in records)

    def test_cwb_empty_station_list(self, cities):
        records, dropped = parse_cwb(cwb_payload(stations=[]), cities)
        assert records == [] and dropped == 0

    def test_cwb_missing_top_level_key(self, cities):
        with pytest.raises(SchemaError):
            parse_cwb({"source": "cwb", "generated_at": 1}, cities)

    def test_cwb_unknown_city_dropped(self, cities):
        stations = THREE_CITIES + [{"city": "Atlantis", "uv_index": 1.0}]
        records, dropped = parse_cwb(cwb_payload(stations=stations), cities)
        assert len(records) == 3
        assert dropped == 1

    def test_cwb_partial_station_carries_absent(self, cities):
        stations = [{"city": "Yilan", "temperature_c": 19.0}]
        records, _ = parse_cwb(cwb_payload(stations=stations), cities)
        assert records[0].temperature_c == 19.0
        assert records[0].uv_index is None
        assert records[0].rainfall_mm_hr is None

    def test_cwb_bad_metric_type(self, cities):
        stations = [{"city": "Yilan", "uv_index": "three"}]
        with pytest.raises(SchemaError):
            parse_cwb(cwb_payload(stations=stations), cities)

    def test_epa_converts_concentration(self, cities):
        records, dropped = parse_epa(epa_payload(), cities)
        assert dropped == 0
        assert all(r.pm25_aqi == aqi_from_pm25(10.0) for r in records)
        assert all(r.uv_index is None for r in records)

    def test_epa_missing_sites_key(self, cities):
        with pytest.raises(SchemaError):
            parse_epa({"generated_at": 1, "stations": []}, cities)

    def test_shipped_fixtures_cover_all_cities(self, cities):
        cwb = load_fixture("cwb_fixture.json")
        epa = load_fixture("epa_fixture.json")
        cwb_records, d1 = parse_cwb(cwb, cities)
        epa_records, d2 = parse_epa(epa, cities)
        assert d1 == d2 == 0
        assert {r.city for r in cwb_records} == {c.name for c in cities}
        assert {r.city for r in epa_records} == {c.name for c in cities}
        assert len(cities) == 22


class TestFetch:
    def test_fetch_from_mock(self, cities):
        with MockWeatherServer(cwb_payload(), epa_payload()) as mock:
            records = fetch_observations(mock.url("/cwb"), "cwb", cities)
            assert len(records) == 3
            assert records[2].city == "Kaohsiung"
            assert records[2].rainfall_mm_hr == 2.5
            epa_records = fetch_observations(mock.url("/epa"), "epa", cities)
            assert all(r.pm25_aqi == 42 for r in epa_records)

    def test_injected_failure_is_network_error(self, cities):
        with MockWeatherServer(cwb_payload(), epa_payload()) as mock:
            mock.arm_failures("/cwb", 1)
            with pytest.raises(NetworkError):
                fetch_observations(mock.url("/cwb"), "cwb", cities)
            # Armed count consumed: next call succeeds.
            assert len(fetch_observations(mock.url("/cwb"), "cwb", cities)) == 3

    def test_unreachable_endpoint(self, cities):
        with pytest.raises(NetworkError):
            fetch_observations("http://127.0.0.1:9/cwb", "cwb", cities, timeout=0.5)

    def test_schema_error_from_bogus_payload(self, cities):
        with MockWeatherServer({"bogus": True}, epa_payload()) as mock:
            with pytest.raises(SchemaError):
                fetch_observations(mock.url("/cwb"), "cwb", cities)

    def test_unknown_source_name(self, cities):
        with pytest.raises(ValueError):
            fetch_observations("http://example.invalid", "noaa", cities)


class TestStore:
    def test_latest_unknown_city(self):
        store = WeatherStore()
        with pytest.raises(UnknownCity):
            latest(store, "Gotham")

    def test_latest_before_any_poll(self):
        store = WeatherStore()
        with pytest.raises(NoDataYet):
            latest(store, "Taipei")

    def test_cross_source_merge_same_timestamp(self):
        store = WeatherStore()
        store.ingest(WeatherRecord("Taipei", 100, uv_index=4.0, temperature_c=22.0))
        store.ingest(WeatherRecord("Taipei", 100, pm25_aqi=55))
        record = latest(store, "Taipei")
        assert record.uv_index == 4.0
        assert record.pm25_aqi == 55
        assert record.timestamp == 100

    def test_newer_record_inherits_missing_metrics(self):
        store = WeatherStore()
        store.ingest(WeatherRecord("Taipei", 100, uv_index=4.0, pm25_aqi=55))
        store.ingest(WeatherRecord("Taipei", 200, uv_index=5.0))
        record = latest(store, "Taipei")
        assert record.timestamp == 200
        assert record.uv_index == 5.0
        assert record.pm25_aqi == 55

    def test_older_record_ignored(self):
        store = WeatherStore()
        store.ingest(WeatherRecord("Taipei", 200, uv_index=5.0))
        assert store.ingest(WeatherRecord("Taipei", 100, uv_index=9.0)) is False
        assert latest(store, "Taipei").uv_index == 5.0

    def test_identical_ingest_is_noop(self):
        store = WeatherStore()
        record = WeatherRecord("Taipei", 100, uv_index=4.0)
        assert store.ingest(record) is True
        assert store.ingest(record) is False
        assert len(store.history()) == 1

    def test_timestamp_monotonicity_under_shuffled_ingest(self):
        store = WeatherStore()
        import random

        rng = random.Random(7)
        stamps = list(range(50))
        rng.shuffle(stamps)
        seen_max = 0
        for ts in stamps:
            store.ingest(WeatherRecord("Taipei", ts, uv_index=float(ts % 11)))
            seen_max = max(seen_max, ts)
            assert latest(store, "Taipei").timestamp == seen_max

    def test_history_capacity(self):
        store = WeatherStore(history_capacity=5)
        for ts in range(10):
            store.ingest(WeatherRecord("Taipei", ts, uv_index=1.0 + ts))
        assert len(store.history()) == 5
        assert store.history()[-1].timestamp == 9


class TestPolling:
    def test_one_round_populates_all_fixture_cities(self, cities):
        with MockWeatherServer() as mock:
            store = WeatherStore(cities)
            config = PollConfig(
                endpoints=((mock.url("/cwb"), "cwb"), (mock.url("/epa"), "epa")),
                period_s=60,
            )
            poll_once(config, store)
            for city in cities:
                record = latest(store, city.name)
                assert record.is_complete()
            assert latest(store, "Taipei").pm25_aqi == 60

    def test_second_identical_round_changes_nothing(self, cities):
        with MockWeatherServer() as mock:
            store = WeatherStore(cities)
            config = PollConfig(
                endpoints=((mock.url("/cwb"), "cwb"), (mock.url("/epa"), "epa")),
                period_s=60,
            )
            poll_once(config, store)
            before = store.snapshot()
            history_len = len(store.history())
            outcomes = poll_once(config, store)
            assert store.snapshot() == before
            assert len(store.history()) == history_len
            assert all(v == "ok:0" for v in outcomes.values())

    def test_schema_error_skips_source_but_not_round(self, cities):
        with MockWeatherServer(epa_payload={"generated_at": 1}) as mock:
            store = WeatherStore(cities)
            config = PollConfig(
                endpoints=((mock.url("/cwb"), "cwb"), (mock.url("/epa"), "epa")),
                period_s=60,
            )
            outcomes = poll_once(config, store)
            assert outcomes[(mock.url("/epa"), "epa")] == "schema-error"
            assert latest(store, "Taipei").uv_index == 5.5

    def test_loop_recovers_after_transient_500(self, cities):
        with MockWeatherServer() as mock:
            store = WeatherStore(cities)
            config = PollConfig(
                endpoints=((mock.url("/cwb"), "cwb"),),
                period_s=10,
                backoff_initial_s=5,
            )
            mock.arm_failures("/cwb", 1)

            clock = {"now": 0.0}

            def fake_sleep(s):
                clock["now"] += s

            rounds = poll_loop(
                config,
                store,
                max_rounds=3,
                sleep_fn=fake_sleep,
                time_fn=lambda: clock["now"],
            )
            assert rounds == 3
            assert latest(store, "Taipei").uv_index == 5.5

    def test_backoff_doubles_and_caps(self, cities):
        with MockWeatherServer() as mock:
            store = WeatherStore(cities)
            config = PollConfig(
                endpoints=((mock.url("/cwb"), "cwb"),),
                period_s=100,
                backoff_initial_s=80,
                backoff_cap_s=300,
            )
            mock.arm_failures("/cwb", 50)  # fail for the whole test

            clock = {"now": 0.0}
            attempts = []
            real_fetch = fetch_observations

            def fake_sleep(s):
                clock["now"] += s

            import arweather.weather as weather_mod

            def spying_fetch(url, source, cities_arg=None, timeout=5.0):
                attempts.append(clock["now"])
                return real_fetch(url, source, cities_arg, timeout)

            orig = weather_mod.fetch_observations
            weather_mod.fetch_observations = spying_fetch
            try:
                poll_loop(
                    config, store, max_rounds=10,
                    sleep_fn=fake_sleep, time_fn=lambda: clock["now"],
                )
            finally:
                weather_mod.fetch_observations = orig
            # Attempts at t=0 (fails, backoff 80), t=100 (fails, backoff 160),
            # t=300 (fails, backoff 320->cap 300), t=600, t=900.
            assert attempts == [0.0, 100.0, 300.0, 600.0, 900.0]

    def test_stop_event_halts_loop(self, cities):
        with MockWeatherServer() as mock:
            store = WeatherStore(cities)
            config = PollConfig(endpoints=((mock.url("/cwb"), "cwb"),), period_s=0.01)
            stop = threading.Event()
            stop.set()
            rounds = poll_loop(config, store, stop_event=stop)
            assert rounds == 0

    def test_fresh_observation_updates_store(self, cities):
        with MockWeatherServer() as mock:
            store = WeatherStore(cities)
            config = PollConfig(
                endpoints=((mock.url("/cwb"), "cwb"), (mock.url("/epa"), "epa")),
                period_s=60,
            )
            poll_once(config, store)
            mock.set_generated_at(1718000600)
            mock.set_station_value("/cwb", "Taipei", "uv_index", 7.7)
            poll_once(config, store)
            record = latest(store, "Taipei")
            assert record.timestamp == 1718000600
            assert record.uv_index == 7.7
            assert record.pm25_aqi == 60  # carried through the merge
