from __future__ import annotations

import json
import threading

import pytest

from citeweave.model import Kind, Provenance
from citeweave.sources import (
    ClientConfig,
    CountingTransport,
    FixtureMissingError,
    MalformedPayloadError,
    QueryKind,
    RateLimiter,
    Source,
    SourceClient,
    SourceQuery,
    SourceSettings,
    TransportError,
    UnmappableRecordError,
    map_raw_record,
    write_fixture,
)


class FakeClock:
    """Virtual time: sleeping advances the clock instantly."""

    def __init__(self):
        self.now = 0.0
        self.sleeps: list[float] = []

    def time(self) -> float:
        return self.now

    def sleep(self, seconds: float) -> None:
        self.sleeps.append(seconds)
        self.now += seconds


def mag_body(entities):
    return {"entities": entities}


class TestSourceQuery:
    def test_param_order_does_not_change_key(self):
        q1 = SourceQuery(Source.MAG, QueryKind.BY_TITLE_YEAR, (("title", "t"), ("year", "2015")))
        q2 = SourceQuery(Source.MAG, QueryKind.BY_TITLE_YEAR, (("year", "2015"), ("title", "t")))
        assert q1.cache_key() == q2.cache_key()

    def test_distinct_queries_distinct_keys(self):
        q1 = SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/a")
        q2 = SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/b")
        q3 = SourceQuery.make(Source.CR, QueryKind.BY_DOI, doi="10.1/a")
        assert len({q1.cache_key(), q2.cache_key(), q3.cache_key()}) == 3


class TestReplayMode:
    def test_replays_fixture(self, tmp_path):
        query = SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/a")
        write_fixture(tmp_path, query, mag_body([{"Id": 1, "Ti": "a title", "Y": 2015}]))
        client = SourceClient(ClientConfig(mode="replay", fixtures_dir=tmp_path))
        response = client.fetch(query)
        assert response.from_cache
        assert response.records[0]["Id"] == 1

    def test_missing_fixture_raises(self, tmp_path):
        client = SourceClient(ClientConfig(mode="replay", fixtures_dir=tmp_path))
        with pytest.raises(FixtureMissingError):
            client.fetch(SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/zzz"))

    def test_zero_network_operations(self, tmp_path):
        query = SourceQuery.make(Source.CR, QueryKind.BY_DOI, doi="10.1/a")
        write_fixture(tmp_path, query, {"message": {"DOI": "10.1/a", "title": ["T"]}})
        transport = CountingTransport()
        client = SourceClient(ClientConfig(mode="replay", fixtures_dir=tmp_path), transport=transport)
        client.fetch(query)
        assert transport.calls == []

    def test_never_writes_to_fixture_dir(self, tmp_path):
        query = SourceQuery.make(Source.COCI, QueryKind.CITATIONS_OF, doi="10.1/a")
        write_fixture(tmp_path, query, [])
        before = sorted(p.name for p in tmp_path.rglob("*") if p.is_file())
        client = SourceClient(ClientConfig(mode="replay", fixtures_dir=tmp_path))
        client.fetch(query)
        after = sorted(p.name for p in tmp_path.rglob("*") if p.is_file())
        assert before == after


class TestLiveMode:
    def _client(self, tmp_path, responder, clock=None):
        clock = clock or FakeClock()
        transport = CountingTransport(responder)
        config = ClientConfig(mode="live", cache_dir=tmp_path / "cache")
        client = SourceClient(config, transport=transport, clock=clock.time, sleep=clock.sleep)
        return client, transport, clock

    def test_second_call_served_from_cache(self, tmp_path):
        body = json.dumps(mag_body([{"Id": 4, "Ti": "t", "Y": 2012}]))
        client, transport, _ = self._client(tmp_path, lambda url, params: (200, body))
        query = SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/a")
        first = client.fetch(query)
        second = client.fetch(query)
        assert not first.from_cache and second.from_cache
        assert len(transport.calls) == 1

    def test_cache_survives_client_restart(self, tmp_path):
        body = json.dumps(mag_body([]))
        client, transport, _ = self._client(tmp_path, lambda url, params: (200, body))
        query = SourceQuery.make(Source.MAG, QueryKind.CITATIONS_OF, id="9")
        client.fetch(query)
        client2, transport2, _ = self._client(tmp_path, lambda url, params: (200, body))
        response = client2.fetch(query)
        assert response.from_cache
        assert transport2.calls == []

    def test_retries_on_5xx_then_succeeds(self, tmp_path):
        bodies = iter([(500, "oops"), (503, "oops"), (200, json.dumps(mag_body([])))])
        client, transport, clock = self._client(tmp_path, lambda url, params: next(bodies))
        client.fetch(SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/a"))
        assert len(transport.calls) == 3
        assert 1.0 in clock.sleeps and 2.0 in clock.sleeps  # exponential backoff

    def test_gives_up_after_three_attempts(self, tmp_path):
        client, transport, _ = self._client(tmp_path, lambda url, params: (500, "down"))
        with pytest.raises(TransportError):
            client.fetch(SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/a"))
        assert len(transport.calls) == 3

    def test_4xx_fails_without_retry(self, tmp_path):
        client, transport, _ = self._client(tmp_path, lambda url, params: (404, "nope"))
        with pytest.raises(TransportError):
            client.fetch(SourceQuery.make(Source.CR, QueryKind.BY_DOI, doi="10.1/a"))
        assert len(transport.calls) == 1

    def test_malformed_payload_distinguishable(self, tmp_path):
        client, _, _ = self._client(tmp_path, lambda url, params: (200, "not json"))
        with pytest.raises(MalformedPayloadError):
            client.fetch(SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/a"))

    def test_rate_limit_respected(self, tmp_path):
        clock = FakeClock()
        transport = CountingTransport(lambda url, params: (200, json.dumps(mag_body([]))))
        config = ClientConfig(
            mode="live",
            cache_dir=tmp_path / "cache",
            settings={Source.MAG: SourceSettings(base_url="https://mag.test", rate_per_sec=2.0)},
        )
        client = SourceClient(config, transport=transport, clock=clock.time, sleep=clock.sleep)
        stamps = []
        for i in range(5):
            query = SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi=f"10.1/{i}")
            before = clock.now
            client.fetch(query)
            stamps.append(before)
        # five requests at 2/s must span at least 2 virtual seconds
        assert clock.now >= 2.0
        assert len(transport.calls) == 5

    def test_single_flight_concurrent_identical_queries(self, tmp_path):
        release = threading.Event()
        body = json.dumps(mag_body([]))

        def slow_responder(url, params):
            release.wait(timeout=5)
            return 200, body

        transport = CountingTransport(slow_responder)
        config = ClientConfig(mode="live", cache_dir=tmp_path / "cache")
        client = SourceClient(config, transport=transport)
        query = SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi="10.1/a")
        results = []
        threads = [
            threading.Thread(target=lambda: results.append(client.fetch(query))) for _ in range(4)
        ]
        for t in threads:
            t.start()
        release.set()
        for t in threads:
            t.join()
        assert len(results) == 4
        assert len(transport.calls) == 1


class TestParseTruncation:
    def test_cr_keyword_queries_keep_four(self, tmp_path):
        items = [{"DOI": f"10.1/{i}", "title": [f"T{i}"]} for i in range(9)]
        query = SourceQuery.make(Source.CR, QueryKind.BY_KEYWORDS, keywords="t", surname="s")
        write_fixture(tmp_path, query, {"message": {"items": items}})
        client = SourceClient(ClientConfig(mode="replay", fixtures_dir=tmp_path))
        assert len(client.fetch(query).records) == 4

    def test_oa_keyword_queries_keep_one(self, tmp_path):
        results = [{"title": f"T{i}", "doi": f"10.2/{i}"} for i in range(3)]
        query = SourceQuery.make(Source.OA, QueryKind.BY_KEYWORDS, keywords="t", surname="s", year=2015)
        write_fixture(tmp_path, query, {"results": results})
        client = SourceClient(ClientConfig(mode="replay", fixtures_dir=tmp_path))
        records = client.fetch(query).records
        assert len(records) == 1 and records[0]["title"] == "T0"

    def test_record_order_preserved(self, tmp_path):
        items = [{"DOI": f"10.1/{i}", "title": [f"T{i}"]} for i in range(4)]
        query = SourceQuery.make(Source.CR, QueryKind.BY_KEYWORDS, keywords="q", surname="s")
        write_fixture(tmp_path, query, {"message": {"items": items}})
        client = SourceClient(ClientConfig(mode="replay", fixtures_dir=tmp_path))
        fetched = [r["DOI"] for r in client.fetch(query).records]
        assert fetched == ["10.1/0", "10.1/1", "10.1/2", "10.1/3"]


class TestMapRawRecord:
    def test_mag_full_mapping(self):
        raw = {
            "Id": 42,
            "Ti": "open data and peer review",
            "Y": 2018,
            "DOI": "10.1/ABC",
            "AA": [{"AuN": "maria rossi", "AuId": 7}, {"AuN": "ugo verdi", "AuId": 8}],
            "RId": [100, 101],
            "Pt": "1",
        }
        rec = map_raw_record(Source.MAG, raw)
        assert rec.doi == "10.1/abc"
        assert rec.source_ids["mag"] == "42"
        assert rec.source_ids["mag_authors"] == "7,8"
        assert rec.source_ids["mag_refs"] == "100,101"
        assert len(rec.references) == 2
        assert rec.kind is Kind.JOURNAL_ARTICLE
        assert rec.provenance is Provenance.NEIGHBOR
        assert rec.authors[0].surname == "rossi" and rec.authors[0].given == "maria"

    def test_cr_doi_lowercased(self):
        rec = map_raw_record(Source.CR, {"DOI": "10.1/X", "title": ["T"]})
        assert rec.doi == "10.1/x"

    def test_unmappable_record(self):
        with pytest.raises(UnmappableRecordError):
            map_raw_record(Source.CR, {"type": "journal-article"})

    def test_mag_book_kind(self):
        rec = map_raw_record(Source.MAG, {"Id": 1, "Ti": "a book", "Y": 2000, "Pt": "5"})
        assert rec.kind is Kind.BOOK

    def test_cr_year_from_date_parts(self):
        raw = {"DOI": "10.1/y", "title": ["T"], "issued": {"date-parts": [[2016, 5]]}}
        assert map_raw_record(Source.CR, raw).year == 2016

    def test_oa_mapping(self):
        raw = {
            "title": "An open access study",
            "year": 2017,
            "doi": "10.3/Z",
            "type": "article",
            "authors": [{"surname": "Rossi", "given": "Maria"}],
        }
        rec = map_raw_record(Source.OA, raw)
        assert rec.doi == "10.3/z"
        assert rec.kind is Kind.JOURNAL_ARTICLE
        assert rec.authors[0].surname == "Rossi"

    def test_coci_stub(self):
        rec = map_raw_record(Source.COCI, {"doi": "10.4/Q"})
        assert rec.doi == "10.4/q" and rec.title == ""


class TestRateLimiter:
    def test_paces_requests_with_virtual_clock(self):
        clock = FakeClock()
        limiter = RateLimiter(4.0, clock=clock.time, sleep=clock.sleep)
        times = []
        for _ in range(8):
            limiter.acquire()
            times.append(clock.now)
        gaps = [b - a for a, b in zip(times, times[1:])]
        assert all(gap >= 0.25 - 1e-9 for gap in gaps)


class TestClientConfig:
    def test_from_ini(self, tmp_path):
        ini = tmp_path / "sources.ini"
        ini.write_text(
            "[client]\nmode = replay\nfixtures_dir = /tmp/fx\n\n"
            "[source.mag]\nbase_url = https://mag.test/v1\nrate_per_sec = 9\n",
            encoding="utf-8",
        )
        config = ClientConfig.from_ini(ini)
        assert config.mode == "replay"
        assert str(config.fixtures_dir) == "/tmp/fx"
        assert config.settings[Source.MAG].base_url == "https://mag.test/v1"
        assert config.settings[Source.MAG].rate_per_sec == 9.0
        assert config.settings[Source.CR].rate_per_sec == 4.0  # default preserved

    def test_env_vars_fill_dirs(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CITEWEAVE_FIXTURES_DIR", str(tmp_path / "fx"))
        monkeypatch.setenv("CITEWEAVE_CACHE_DIR", str(tmp_path / "cache"))
        config = ClientConfig(mode="live")
        assert config.fixtures_dir == tmp_path / "fx"
        assert config.cache_dir == tmp_path / "cache"
