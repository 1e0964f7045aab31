"""Uniform access to the four bibliographic source shapes.

Four sources are modeled: a MAG-shaped evaluate endpoint (``mag``), an
OpenAIRE-shaped search endpoint (``oa``), a Crossref-shaped works endpoint
(``cr``), and a COCI-shaped DOI-to-DOI citation index (``coci``).  Every
query is content-addressed: the SHA-256 of the source, the query kind, and
the lexicographically sorted parameters.  That key names both cache entries
and replay fixtures, so distinct orderings of the same logical query always
hit the same entry.

Fixture/cache file format (one JSON file per key, ``<dir>/<source>/<key>.json``)::

    {
      "meta": {"source": "...", "kind": "...", "params": {...},
               "url": "...", "status": 200, "fetched_at": "..."},
      "body": "<raw HTTP body, verbatim>"
    }

In replay mode the client performs zero network operations; a query without
a fixture raises :class:`FixtureMissingError`.  In live mode responses are
served from the cache when present, otherwise fetched once per key
(single-flight), under a per-source rate limit, with three attempts and
exponential backoff on transport failures and 5xx statuses.

Raw record shapes accepted by :func:`map_raw_record`:

* ``mag``  - ``{"Id", "Ti", "Y", "DOI"?, "AA": [{"AuN", "AuId"}], "RId": [...], "Pt"}``
  (``Pt`` 1 = journal article, 5 = book, anything else = other; ``AuN`` is a
  lowercase "given surname" display string)
* ``oa``   - ``{"title", "year"?, "doi"?, "id"?, "type"?, "authors": [{"surname", "given"}]}``
* ``cr``   - Crossref work items: ``{"DOI", "title": [...], "author":
  [{"family", "given"}], "issued": {"date-parts": [[y, ...]]}, "type"}``
* ``coci`` - ``{"doi": "..."}`` stubs (citation rows themselves are handled
  by the harvest, not mapped to records)
"""

from __future__ import annotations

import configparser
import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Mapping, Protocol

from .model import (
    Kind,
    PersonName,
    Provenance,
    PublicationRecord,
    local_id_for_doi,
    local_id_for_source,
    local_id_for_title,
)

logger = logging.getLogger(__name__)

ENV_CACHE_DIR = "CITEWEAVE_CACHE_DIR"
ENV_FIXTURES_DIR = "CITEWEAVE_FIXTURES_DIR"


class Source(str, Enum):
    MAG = "mag"
    OA = "oa"
    CR = "cr"
    COCI = "coci"


class QueryKind(str, Enum):
    BY_DOI = "by_doi"
    BY_TITLE_YEAR = "by_title_year"
    BY_KEYWORDS = "by_keywords"
    PAPERS_BY_AUTHOR = "papers_by_author"
    REFERENCES_OF = "references_of"
    CITATIONS_OF = "citations_of"


class SourceError(Exception):
    """Base class for all source-client failures."""


class FixtureMissingError(SourceError):
    """Replay mode was asked for a query that has no recorded fixture."""


class TransportError(SourceError):
    """The HTTP transport failed after bounded retries, or returned 4xx."""


class MalformedPayloadError(SourceError):
    """The response body could not be parsed into the source's record shape."""


class UnmappableRecordError(SourceError):
    """A raw record carries neither a title nor a DOI."""


@dataclass(frozen=True)
class SourceQuery:
    """One logical query against one source; params are stored in the order
    given but hashed in sorted order so the cache key is canonical."""

    source: Source
    kind: QueryKind
    params: tuple[tuple[str, str], ...] = ()

    @classmethod
    def make(cls, source: Source, kind: QueryKind, **params: object) -> "SourceQuery":
        return cls(
            source=source,
            kind=kind,
            params=tuple((k, str(v)) for k, v in params.items()),
        )

    @property
    def params_dict(self) -> dict[str, str]:
        return dict(self.params)

    def cache_key(self) -> str:
        canonical = json.dumps(
            {
                "source": self.source.value,
                "kind": self.kind.value,
                "params": sorted(self.params),
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class SourceResponse:
    """Parsed records in exact source order, plus provenance of the bytes."""

    records: list[dict]
    fetched_at: str
    from_cache: bool


class Transport(Protocol):
    def get(self, url: str, params: Mapping[str, str], headers: Mapping[str, str]) -> tuple[int, str]:
        """Perform one GET; returns (status_code, body).  Raises OSError-like
        exceptions on connection failure."""


class RequestsTransport:
    """Default transport over a shared requests session."""

    def __init__(self, timeout: float = 30.0):
        import requests

        self._session = requests.Session()
        self._timeout = timeout

    def get(self, url, params, headers):
        response = self._session.get(url, params=dict(params), headers=dict(headers), timeout=self._timeout)
        return response.status_code, response.text


class CountingTransport:
    """Test transport that records every request and replays canned bodies."""

    def __init__(self, responses: Callable[[str, Mapping[str, str]], tuple[int, str]] | None = None):
        self.calls: list[tuple[str, dict[str, str]]] = []
        self._responses = responses

    def get(self, url, params, headers):
        self.calls.append((url, dict(params)))
        if self._responses is None:
            raise AssertionError(f"unexpected network request: {url}")
        return self._responses(url, params)


@dataclass
class SourceSettings:
    base_url: str = ""
    rate_per_sec: float = 4.0
    api_key: str | None = None


_DEFAULT_BASE_URLS = {
    Source.MAG: "https://mag.example.org/evaluate",
    Source.OA: "https://api.openaire.example.org/search/publications",
    Source.CR: "https://api.crossref.org/works",
    Source.COCI: "https://opencitations.net/index/coci/api/v1",
}


@dataclass
class ClientConfig:
    """Replay/live mode plus per-source endpoint settings.

    The INI config file has one ``[source.<name>]`` section per source with
    ``base_url``, ``rate_per_sec``, and ``api_key`` keys, and an optional
    ``[client]`` section with ``mode``, ``fixtures_dir``, ``cache_dir``.
    """

    mode: str = "replay"  # "replay" | "live"
    fixtures_dir: Path | None = None
    cache_dir: Path | None = None
    settings: dict[Source, SourceSettings] = field(default_factory=dict)
    retries: int = 3
    backoff_start: float = 1.0

    def __post_init__(self) -> None:
        if self.mode not in ("replay", "live"):
            raise ValueError(f"unknown mode: {self.mode}")
        if self.fixtures_dir is None and ENV_FIXTURES_DIR in os.environ:
            self.fixtures_dir = Path(os.environ[ENV_FIXTURES_DIR])
        if self.cache_dir is None and ENV_CACHE_DIR in os.environ:
            self.cache_dir = Path(os.environ[ENV_CACHE_DIR])
        for source in Source:
            self.settings.setdefault(source, SourceSettings(base_url=_DEFAULT_BASE_URLS[source]))

    @classmethod
    def from_ini(cls, path: str | Path, **overrides) -> "ClientConfig":
        parser = configparser.ConfigParser()
        parser.read(path, encoding="utf-8")
        kwargs: dict = {}
        if parser.has_section("client"):
            section = parser["client"]
            kwargs["mode"] = section.get("mode", "replay")
            if section.get("fixtures_dir"):
                kwargs["fixtures_dir"] = Path(section["fixtures_dir"])
            if section.get("cache_dir"):
                kwargs["cache_dir"] = Path(section["cache_dir"])
        settings: dict[Source, SourceSettings] = {}
        for source in Source:
            name = f"source.{source.value}"
            if parser.has_section(name):
                section = parser[name]
                settings[source] = SourceSettings(
                    base_url=section.get("base_url", _DEFAULT_BASE_URLS[source]),
                    rate_per_sec=section.getfloat("rate_per_sec", 4.0),
                    api_key=section.get("api_key") or None,
                )
        kwargs["settings"] = settings
        kwargs.update(overrides)
        return cls(**kwargs)


class PayloadStore:
    """One JSON file per query key under ``root/<source>/<key>.json``."""

    def __init__(self, root: Path, readonly: bool = False):
        self.root = Path(root)
        self.readonly = readonly

    def path_for(self, query: SourceQuery) -> Path:
        return self.root / query.source.value / f"{query.cache_key()}.json"

    def load(self, query: SourceQuery) -> dict | None:
        path = self.path_for(query)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def save(self, query: SourceQuery, meta: dict, body: str) -> None:
        if self.readonly:
            raise SourceError("store is read-only")
        path = self.path_for(query)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps({"meta": meta, "body": body}, ensure_ascii=False, sort_keys=True, indent=2)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)  # atomic on POSIX


class RateLimiter:
    """Min-interval pacing: consecutive acquires are at least 1/rate apart."""

    def __init__(
        self,
        rate_per_sec: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._interval = 1.0 / rate_per_sec if rate_per_sec > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_free = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next_free - now
            if wait > 0:
                self._sleep(wait)
                now = self._clock()
            self._next_free = max(now, self._next_free) + self._interval


def build_request(query: SourceQuery, settings: SourceSettings) -> tuple[str, dict[str, str], dict[str, str]]:
    """URL, query params, and headers for a live request."""
    params = query.params_dict
    headers: dict[str, str] = {}
    base = settings.base_url.rstrip("/")
    source, kind = query.source, query.kind
    if settings.api_key:
        if source is Source.MAG:
            headers["Ocp-Apim-Subscription-Key"] = settings.api_key
        else:
            headers["Authorization"] = f"Bearer {settings.api_key}"

    if source is Source.MAG:
        if kind is QueryKind.BY_DOI:
            expr = f"DOI='{params['doi']}'"
        elif kind is QueryKind.BY_TITLE_YEAR:
            expr = f"Ti='{params['title']}'"
        elif kind is QueryKind.PAPERS_BY_AUTHOR:
            expr = f"Composite(AA.AuId={params['author_id']})"
        elif kind is QueryKind.REFERENCES_OF:
            ids = params["ids"].split(",")
            expr = "Or(" + ",".join(f"Id={i}" for i in ids) + ")" if len(ids) > 1 else f"Id={ids[0]}"
        elif kind is QueryKind.CITATIONS_OF:
            expr = f"RId={params['id']}"
        else:
            raise SourceError(f"unsupported MAG query kind: {kind}")
        out = {"expr": expr, "count": params.get("count", "50"), "attributes": "Id,Ti,Y,DOI,AA.AuN,AA.AuId,RId,Pt"}
        if "offset" in params:
            out["offset"] = params["offset"]
        return base, out, headers

    if source is Source.OA:
        if kind is QueryKind.BY_KEYWORDS:
            return base, {
                "keywords": params["keywords"],
                "author": params.get("surname", ""),
                "year": params.get("year", ""),
                "format": "json",
                "size": "1",
            }, headers
        if kind is QueryKind.BY_DOI:
            return base, {"doi": params["doi"], "format": "json"}, headers
        raise SourceError(f"unsupported OA query kind: {kind}")

    if source is Source.CR:
        if kind is QueryKind.BY_KEYWORDS:
            return base, {
                "query.bibliographic": params["keywords"],
                "query.author": params.get("surname", ""),
                "rows": params.get("rows", "4"),
            }, headers
        if kind is QueryKind.BY_DOI:
            return f"{base}/{params['doi']}", {}, headers
        raise SourceError(f"unsupported CR query kind: {kind}")

    if source is Source.COCI:
        if kind is QueryKind.REFERENCES_OF:
            return f"{base}/references/{params['doi']}", {}, headers
        if kind is QueryKind.CITATIONS_OF:
            return f"{base}/citations/{params['doi']}", {}, headers
        raise SourceError(f"unsupported COCI query kind: {kind}")

    raise SourceError(f"unknown source: {source}")


def parse_records(source: Source, kind: QueryKind, body: str) -> list[dict]:
    """Extract the raw record list from a response body, preserving order.

    Keyword responses are truncated here to the rows the pipeline actually
    consumes: the first four CR results, the first OA result.
    """
    try:
        payload = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedPayloadError(f"{source.value} body is not JSON: {exc}") from exc
    try:
        if source is Source.MAG:
            records = list(payload["entities"])
        elif source is Source.OA:
            records = list(payload["results"])
        elif source is Source.CR:
            message = payload["message"]
            records = list(message["items"]) if "items" in message else [message]
        elif source is Source.COCI:
            records = list(payload)
        else:  # pragma: no cover
            raise MalformedPayloadError(f"unknown source {source}")
    except (KeyError, TypeError) as exc:
        raise MalformedPayloadError(f"{source.value} payload missing expected shape: {exc}") from exc
    if kind is QueryKind.BY_KEYWORDS:
        if source is Source.CR:
            records = records[:4]
        elif source is Source.OA:
            records = records[:1]
    return records


class SourceClient:
    """Fetches source responses with caching, rate limits, and replay.

    Safe for concurrent callers: per-source token pacing, single-flight per
    cache key, and atomic cache writes.
    """

    def __init__(
        self,
        config: ClientConfig,
        transport: Transport | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        if config.mode == "replay":
            if config.fixtures_dir is None:
                raise ValueError("replay mode needs a fixtures directory")
            self._fixtures = PayloadStore(config.fixtures_dir, readonly=True)
            self._cache = None
            self._transport = transport  # never used in replay
        else:
            self._fixtures = None
            self._cache = PayloadStore(config.cache_dir) if config.cache_dir else None
            self._transport = transport or RequestsTransport()
        self._limiters = {
            source: RateLimiter(config.settings[source].rate_per_sec, clock=clock, sleep=sleep)
            for source in Source
        }
        self._inflight: dict[str, threading.Lock] = {}
        self._inflight_guard = threading.Lock()

    def fetch(self, query: SourceQuery) -> SourceResponse:
        if self.config.mode == "replay":
            payload = self._fixtures.load(query)
            if payload is None:
                raise FixtureMissingError(
                    f"no fixture for {query.source.value}/{query.kind.value} "
                    f"params={query.params_dict} key={query.cache_key()}"
                )
            return self._response_from_payload(query, payload, from_cache=True)

        if self._cache is not None:
            payload = self._cache.load(query)
            if payload is not None:
                return self._response_from_payload(query, payload, from_cache=True)

        lock = self._key_lock(query.cache_key())
        with lock:
            if self._cache is not None:
                payload = self._cache.load(query)
                if payload is not None:
                    return self._response_from_payload(query, payload, from_cache=True)
            status, body = self._request_with_retries(query)
            fetched_at = datetime.now(timezone.utc).isoformat()
            records = parse_records(query.source, query.kind, body)
            if self._cache is not None:
                meta = {
                    "source": query.source.value,
                    "kind": query.kind.value,
                    "params": query.params_dict,
                    "url": build_request(query, self.config.settings[query.source])[0],
                    "status": status,
                    "fetched_at": fetched_at,
                }
                self._cache.save(query, meta, body)
            return SourceResponse(records=records, fetched_at=fetched_at, from_cache=False)

    def _key_lock(self, key: str) -> threading.Lock:
        with self._inflight_guard:
            lock = self._inflight.get(key)
            if lock is None:
                lock = threading.Lock()
                self._inflight[key] = lock
            return lock

    def _request_with_retries(self, query: SourceQuery) -> tuple[int, str]:
        settings = self.config.settings[query.source]
        url, params, headers = build_request(query, settings)
        delay = self.config.backoff_start
        last_error: str = ""
        for attempt in range(self.config.retries):
            self._limiters[query.source].acquire()
            try:
                status, body = self._transport.get(url, params, headers)
            except Exception as exc:  # connection-level failure
                last_error = str(exc)
                logger.warning("%s request failed (attempt %d): %s", query.source.value, attempt + 1, exc)
            else:
                if status < 400:
                    return status, body
                if status < 500:
                    raise TransportError(f"{query.source.value} returned HTTP {status} for {url}")
                last_error = f"HTTP {status}"
                logger.warning("%s returned %d (attempt %d)", query.source.value, status, attempt + 1)
            if attempt + 1 < self.config.retries:
                self._sleep(delay)
                delay *= 2
        raise TransportError(f"{query.source.value} failed after {self.config.retries} attempts: {last_error}")

    def _response_from_payload(self, query: SourceQuery, payload: dict, from_cache: bool) -> SourceResponse:
        try:
            body = payload["body"]
            fetched_at = payload["meta"].get("fetched_at", "")
        except (KeyError, TypeError) as exc:
            raise MalformedPayloadError(f"stored payload missing meta/body: {exc}") from exc
        records = parse_records(query.source, query.kind, body)
        return SourceResponse(records=records, fetched_at=fetched_at, from_cache=from_cache)


# -- raw-record mapping -----------------------------------------------------

_CR_KIND_MAP = {
    "journal-article": Kind.JOURNAL_ARTICLE,
    "book": Kind.BOOK,
    "monograph": Kind.BOOK,
    "edited-book": Kind.BOOK,
}

_GENERIC_KIND_MAP = {
    "journal_article": Kind.JOURNAL_ARTICLE,
    "journal-article": Kind.JOURNAL_ARTICLE,
    "article": Kind.JOURNAL_ARTICLE,
    "book": Kind.BOOK,
    "monograph": Kind.BOOK,
}


def _parse_display_name(display: str) -> PersonName:
    # MAG AuN strings are lowercase "given [middle] surname"
    tokens = display.split()
    if not tokens:
        return PersonName(surname="", given="")
    if len(tokens) == 1:
        return PersonName(surname=tokens[0], given="")
    return PersonName(surname=tokens[-1], given=" ".join(tokens[:-1]))


def map_raw_record(source: Source, raw: Mapping) -> PublicationRecord:
    """Turn one raw source record into a :class:`PublicationRecord`.

    The mapped record has provenance ``neighbor`` (callers reassign), a
    lowercased DOI, and a local id derived from the source id when present,
    else the DOI, else the normalized title and year.  Raises
    :class:`UnmappableRecordError` when the raw record has neither a title
    nor a DOI.
    """
    from .matching import normalize_title

    if source is Source.MAG:
        title = str(raw.get("Ti") or "")
        doi = str(raw["DOI"]).lower() if raw.get("DOI") else None
        if not title and not doi:
            raise UnmappableRecordError("MAG record lacks both Ti and DOI")
        year = int(raw["Y"]) if raw.get("Y") is not None else None
        paper_id = str(raw["Id"]) if raw.get("Id") is not None else None
        authors = [_parse_display_name(str(a.get("AuN", ""))) for a in raw.get("AA", [])]
        author_ids = [str(a["AuId"]) for a in raw.get("AA", []) if a.get("AuId") is not None]
        ref_ids = [str(r) for r in raw.get("RId", [])]
        pt = str(raw.get("Pt", ""))
        kind = {"1": Kind.JOURNAL_ARTICLE, "5": Kind.BOOK}.get(pt, Kind.OTHER)
        source_ids = {}
        if paper_id:
            source_ids["mag"] = paper_id
        if author_ids:
            source_ids["mag_authors"] = ",".join(author_ids)
        if ref_ids:
            source_ids["mag_refs"] = ",".join(ref_ids)
        norm = normalize_title(title)
        if paper_id:
            local_id = local_id_for_source("mag", paper_id)
        elif doi:
            local_id = local_id_for_doi(doi)
        else:
            local_id = local_id_for_title(norm, year)
        return PublicationRecord(
            local_id=local_id,
            title=title,
            norm_title=norm,
            year=year,
            authors=authors,
            kind=kind,
            provenance=Provenance.NEIGHBOR,
            doi=doi,
            source_ids=source_ids,
            references=[local_id_for_source("mag", rid) for rid in ref_ids],
        )

    if source is Source.OA:
        title = str(raw.get("title") or "")
        doi = str(raw["doi"]).lower() if raw.get("doi") else None
        if not title and not doi:
            raise UnmappableRecordError("OA record lacks both title and doi")
        year = int(raw["year"]) if raw.get("year") is not None else None
        authors = [
            PersonName(surname=str(a.get("surname", "")), given=str(a.get("given", "")))
            for a in raw.get("authors", [])
        ]
        kind = _GENERIC_KIND_MAP.get(str(raw.get("type", "")).lower(), Kind.OTHER)
        norm = normalize_title(title)
        source_ids = {"oa": str(raw["id"])} if raw.get("id") else {}
        if source_ids:
            local_id = local_id_for_source("oa", source_ids["oa"])
        elif doi:
            local_id = local_id_for_doi(doi)
        else:
            local_id = local_id_for_title(norm, year)
        return PublicationRecord(
            local_id=local_id,
            title=title,
            norm_title=norm,
            year=year,
            authors=authors,
            kind=kind,
            provenance=Provenance.NEIGHBOR,
            doi=doi,
            source_ids=source_ids,
        )

    if source is Source.CR:
        titles = raw.get("title") or []
        title = str(titles[0]) if isinstance(titles, (list, tuple)) and titles else str(titles or "")
        doi = str(raw["DOI"]).lower() if raw.get("DOI") else None
        if not title and not doi:
            raise UnmappableRecordError("CR record lacks both title and DOI")
        year = None
        issued = raw.get("issued") or {}
        parts = issued.get("date-parts") or []
        if parts and parts[0] and parts[0][0] is not None:
            year = int(parts[0][0])
        authors = [
            PersonName(surname=str(a.get("family", "")), given=str(a.get("given", "")))
            for a in raw.get("author", [])
        ]
        kind = _CR_KIND_MAP.get(str(raw.get("type", "")).lower(), Kind.OTHER)
        norm = normalize_title(title)
        local_id = local_id_for_doi(doi) if doi else local_id_for_title(norm, year)
        source_ids = {"cr": doi} if doi else {}
        return PublicationRecord(
            local_id=local_id,
            title=title,
            norm_title=norm,
            year=year,
            authors=authors,
            kind=kind,
            provenance=Provenance.NEIGHBOR,
            doi=doi,
            source_ids=source_ids,
        )

    if source is Source.COCI:
        doi = str(raw.get("doi", "")).lower()
        if not doi:
            raise UnmappableRecordError("COCI stub lacks a doi")
        return PublicationRecord(
            local_id=local_id_for_doi(doi),
            title="",
            norm_title="",
            year=None,
            authors=[],
            kind=Kind.OTHER,
            provenance=Provenance.NEIGHBOR,
            doi=doi,
        )

    raise SourceError(f"unknown source: {source}")  # pragma: no cover


def write_fixture(
    root: Path,
    query: SourceQuery,
    body_obj: object,
    fetched_at: str = "2020-10-01T00:00:00+00:00",
) -> Path:
    """Record ``body_obj`` (JSON-serialized) as the fixture for ``query``.

    Used by the sample-data generator and by tests to build replay worlds.
    """
    store = PayloadStore(root)
    body = json.dumps(body_obj, ensure_ascii=False, sort_keys=True)
    meta = {
        "source": query.source.value,
        "kind": query.kind.value,
        "params": query.params_dict,
        "url": "fixture://" + query.source.value,
        "status": 200,
        "fetched_at": fetched_at,
    }
    store.save(query, meta, body)
    return store.path_for(query)
