"""Four-step harvest: ingest, resolve, author expansion, neighbor fetch.

Stage 1 ingests structured CV JSON files and commission CSV exports into a
corpus.  Stage 2 resolves each publication against the sources in order:
MAG by DOI (exact lowercase match) or by title and year (two-year margin),
then, for records still lacking a DOI, OpenAIRE by title keywords, surname
and year (first result trusted), then Crossref by keywords and surname with
the A/B/C score gate over the first four results.  Stage 3 expands each
candidate's MAG author ids and files unmatched works as extras.  Stage 4
pulls citing/cited neighbors from MAG reference ids and from COCI DOI
pairs (Crossref supplying metadata), deduplicating neighbors by DOI.

Per-application bookkeeping (which CV items each dataset found, the extras,
the author ids) lives in a :class:`HarvestLog`, persisted as
``harvest_log.json`` next to the corpus files.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .matching import (
    dedupe_records_with_map,
    match_by_doi,
    match_by_title_year,
    normalize_title,
    rank_search_results,
    score_author,
    select_keywords,
)
from .model import (
    FLAG_METADATA_MISSING,
    FLAG_UNRESOLVED,
    Application,
    Commission,
    Corpus,
    Kind,
    Outcome,
    PersonName,
    Provenance,
    PublicationRecord,
    Role,
    Section,
    local_id_for_doi,
    local_id_for_title,
    merge_record,
)
from .sources import (
    FixtureMissingError,
    QueryKind,
    Source,
    SourceClient,
    SourceQuery,
    TransportError,
    map_raw_record,
)

logger = logging.getLogger(__name__)

MAG_PAGE_SIZE = 50

#: Section-B "comparable total" rule: combined retrieved publications must
#: reach this fraction of the CV size.  Overridable via --section-ratio.
DEFAULT_SECTION_RATIO = Fraction(7, 10)


class IngestError(Exception):
    """Malformed or incomplete input file."""


# -- stage 1: ingestion ------------------------------------------------------

_CV_HEADER_FIELDS = ("app_id", "candidate", "field", "role", "term", "outcome",
                     "nd_m1", "nd_m2", "nd_m3")


def _person_from_json(obj: Mapping) -> PersonName:
    if "surname" not in obj or not obj["surname"]:
        raise IngestError("author entry lacks a surname")
    return PersonName(surname=str(obj["surname"]), given=str(obj.get("given", "")))


def _record_from_cv_item(item: Mapping, candidate: PersonName, provenance: Provenance) -> PublicationRecord:
    title = str(item.get("title") or "")
    if not title:
        raise IngestError("CV publication lacks a title")
    year = int(item["year"]) if item.get("year") is not None else None
    doi = str(item["doi"]).lower() if item.get("doi") else None
    authors = [_person_from_json(a) for a in item.get("authors", [])] or [candidate]
    kind = Kind(item["kind"]) if item.get("kind") in {k.value for k in Kind} else Kind.OTHER
    norm = normalize_title(title)
    local_id = local_id_for_doi(doi) if doi else local_id_for_title(norm, year)
    return PublicationRecord(
        local_id=local_id,
        title=title,
        norm_title=norm,
        year=year,
        authors=authors,
        kind=kind,
        provenance=provenance,
        doi=doi,
    )


def ingest_cv(path_or_obj: str | Path | Mapping, corpus: Corpus) -> Application:
    """Load one structured CV document into the corpus.

    The two publication lists ("publications" and "publications for
    indicators") are merged and deduplicated by DOI or title and year;
    survivors keep the stronger cv provenance.
    """
    if isinstance(path_or_obj, Mapping):
        doc = path_or_obj
    else:
        doc = json.loads(Path(path_or_obj).read_text(encoding="utf-8"))
    missing = [name for name in _CV_HEADER_FIELDS if name not in doc]
    if missing:
        raise IngestError(f"CV document missing mandatory fields: {', '.join(missing)}")
    candidate = _person_from_json(doc["candidate"])
    records = [
        _record_from_cv_item(item, candidate, Provenance.CV)
        for item in doc.get("publications", [])
    ] + [
        _record_from_cv_item(item, candidate, Provenance.INDICATOR_LIST)
        for item in doc.get("publications_for_indicators", [])
    ]
    survivors, id_map = dedupe_records_with_map(records)
    app = Application(
        app_id=str(doc["app_id"]),
        candidate=candidate,
        field=str(doc["field"]),
        role=Role(doc["role"]),
        term=int(doc["term"]),
        outcome=Outcome(doc["outcome"]),
        cv_publications=[],
        nd_m1=int(doc["nd_m1"]),
        nd_m2=int(doc["nd_m2"]),
        nd_m3=int(doc["nd_m3"]),
    )
    corpus.add_application(app)  # raises on duplicate app_id before touching records
    canonical: dict[str, str] = {}
    for rec in survivors:
        canonical[rec.local_id] = corpus.upsert_record(rec)
    app.cv_publications = list(
        dict.fromkeys(canonical[id_map[rec.local_id]] for rec in records)
    )
    return app


def ingest_commission(path: str | Path, corpus: Corpus) -> Commission:
    """Load one commission CSV export (one file per field and term).

    Expected columns: field, term, member_surname, member_given, title,
    year, doi, kind.  A publication listed by several members collapses to
    one record carrying all of them as authors.
    """
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    if not rows:
        raise IngestError(f"commission file {path} has no rows")
    field_code = rows[0]["field"]
    term = int(rows[0]["term"])
    members: list[PersonName] = []
    by_key: dict[object, PublicationRecord] = {}
    order: list[object] = []
    for row in rows:
        if row["field"] != field_code or int(row["term"]) != term:
            raise IngestError(f"mixed (field, term) pairs in commission file {path}")
        member = PersonName(surname=row["member_surname"], given=row.get("member_given", ""))
        if member not in members:
            members.append(member)
        title = row.get("title") or ""
        if not title:
            continue  # member row without a publication
        year = int(row["year"]) if row.get("year") else None
        doi = row["doi"].lower() if row.get("doi") else None
        norm = normalize_title(title)
        key = ("doi", doi) if doi else ("ty", norm, year)
        rec = by_key.get(key)
        if rec is None:
            kind = Kind(row["kind"]) if row.get("kind") in {k.value for k in Kind} else Kind.OTHER
            rec = PublicationRecord(
                local_id=local_id_for_doi(doi) if doi else local_id_for_title(norm, year),
                title=title,
                norm_title=norm,
                year=year,
                authors=[member],
                kind=kind,
                provenance=Provenance.COMMISSION,
                doi=doi,
            )
            by_key[key] = rec
            order.append(key)
        elif member not in rec.authors:
            rec.authors.append(member)
    commission = Commission(
        field=field_code,
        term=term,
        members=members,
        publications=[],
    )
    corpus.add_commission(commission)
    for key in order:
        lid = corpus.upsert_record(by_key[key])
        if lid not in commission.publications:
            commission.publications.append(lid)
    return commission


# -- harvest bookkeeping -----------------------------------------------------

DATASETS = ("mag", "oa", "cr")
COMBINED = "combined"


@dataclass
class AppLog:
    app_id: str
    found: dict[str, set[str]] = field(default_factory=lambda: {ds: set() for ds in DATASETS})
    extras: set[str] = field(default_factory=set)
    author_ids: set[str] = field(default_factory=set)
    unresolved: set[str] = field(default_factory=set)

    def found_any(self) -> set[str]:
        out: set[str] = set()
        for ids in self.found.values():
            out |= ids
        return out


class HarvestLog:
    """Per-application findings, persisted as harvest_log.json."""

    FILENAME = "harvest_log.json"

    def __init__(self) -> None:
        self.apps: dict[str, AppLog] = {}

    def app(self, app_id: str) -> AppLog:
        if app_id not in self.apps:
            self.apps[app_id] = AppLog(app_id=app_id)
        return self.apps[app_id]

    def save(self, directory: str | Path) -> None:
        payload = {
            "apps": {
                app_id: {
                    "found": {ds: sorted(ids) for ds, ids in entry.found.items()},
                    "extras": sorted(entry.extras),
                    "author_ids": sorted(entry.author_ids),
                    "unresolved": sorted(entry.unresolved),
                }
                for app_id, entry in sorted(self.apps.items())
            }
        }
        path = Path(directory) / self.FILENAME
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, directory: str | Path) -> "HarvestLog":
        log = cls()
        path = Path(directory) / cls.FILENAME
        if not path.exists():
            return log
        payload = json.loads(path.read_text(encoding="utf-8"))
        for app_id, entry in payload.get("apps", {}).items():
            record = log.app(app_id)
            for ds in DATASETS:
                record.found[ds] = set(entry.get("found", {}).get(ds, []))
            record.extras = set(entry.get("extras", []))
            record.author_ids = set(entry.get("author_ids", []))
            record.unresolved = set(entry.get("unresolved", []))
        return log


def _has_duplicate_surname(*author_lists: Sequence[PersonName]) -> bool:
    # the full-name author check only applies when a surname is ambiguous
    # within one publication's author list
    for authors in author_lists:
        counts = Counter(normalize_title(a.surname) for a in authors)
        if any(count >= 2 for surname, count in counts.items() if surname):
            return True
    return False


class Harvester:
    """Single-writer orchestrator for stages 2-4 over one corpus."""

    def __init__(
        self,
        corpus: Corpus,
        client: SourceClient,
        log: HarvestLog | None = None,
        stopwords: set[str] | None = None,
    ):
        self.corpus = corpus
        self.client = client
        self.log = log if log is not None else HarvestLog()
        if stopwords is None:
            from .matching import load_stopwords

            stopwords = load_stopwords()
        self.stopwords = stopwords

    # -- stage 2 -----------------------------------------------------------

    def resolve_application(self, app: Application) -> None:
        entry = self.log.app(app.app_id)
        for lid in app.cv_publications:
            rec = self.corpus.publications[lid]
            dataset = self._resolve_record(rec, principal=app.candidate, candidate=app.candidate, entry=entry)
            if dataset is not None:
                entry.found[dataset].add(lid)
                entry.unresolved.discard(lid)
            else:
                entry.unresolved.add(lid)

    def resolve_commission(self, commission: Commission) -> None:
        for lid in commission.publications:
            rec = self.corpus.publications[lid]
            principal = rec.authors[0] if rec.authors else commission.members[0]
            self._resolve_record(rec, principal=principal, candidate=None, entry=None)

    def _resolve_record(
        self,
        rec: PublicationRecord,
        principal: PersonName,
        candidate: PersonName | None,
        entry: AppLog | None,
    ) -> str | None:
        """Run the MAG -> OA -> CR ladder for one record; returns the dataset
        that matched, or None after flagging the record unresolved."""
        matched_raw = None
        if rec.doi:
            response = self.client.fetch(SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi=rec.doi))
            for raw in response.records:
                mapped = map_raw_record(Source.MAG, raw)
                if mapped.doi and match_by_doi(rec.doi, mapped.doi):
                    matched_raw = raw
                    break
        elif rec.year is not None and rec.norm_title:
            response = self.client.fetch(
                SourceQuery.make(
                    Source.MAG, QueryKind.BY_TITLE_YEAR, title=rec.norm_title, year=rec.year
                )
            )
            for raw in response.records:
                mapped = map_raw_record(Source.MAG, raw)
                flag = _has_duplicate_surname(rec.authors, mapped.authors)
                if match_by_title_year(rec, mapped, duplicate_surname_in_scope=flag):
                    matched_raw = raw
                    break
        if matched_raw is not None:
            self._merge_source_match(rec, Source.MAG, matched_raw)
            if entry is not None and candidate is not None:
                entry.author_ids |= _candidate_author_ids(matched_raw, candidate)
            rec.flags.discard(FLAG_UNRESOLVED)
            return "mag"

        keywords = select_keywords(rec.title, self.stopwords)
        surname = normalize_title(principal.surname)
        if rec.doi is None and rec.year is not None and keywords:
            response = self.client.fetch(
                SourceQuery.make(
                    Source.OA,
                    QueryKind.BY_KEYWORDS,
                    keywords=" ".join(keywords),
                    surname=surname,
                    year=rec.year,
                )
            )
            if response.records:
                # the source returns exact attribute matches only, so the
                # first entity is trusted
                self._merge_source_match(rec, Source.OA, response.records[0])
                rec.flags.discard(FLAG_UNRESOLVED)
                return "oa"

        if rec.doi is None and keywords:
            response = self.client.fetch(
                SourceQuery.make(
                    Source.CR, QueryKind.BY_KEYWORDS, keywords=" ".join(keywords), surname=surname
                )
            )
            mapped_results = [map_raw_record(Source.CR, raw) for raw in response.records]
            accepted = rank_search_results(rec, mapped_results)
            if accepted is not None:
                merge_record(rec, _without_references(accepted))
                self.corpus.reindex(rec.local_id)
                rec.flags.discard(FLAG_UNRESOLVED)
                return "cr"

        rec.flags.add(FLAG_UNRESOLVED)
        return None

    def _merge_source_match(self, rec: PublicationRecord, source: Source, raw: Mapping) -> None:
        mapped = map_raw_record(source, raw)
        merge_record(rec, _without_references(mapped))
        self.corpus.reindex(rec.local_id)

    # -- stage 3 -----------------------------------------------------------

    def expand_application(self, app: Application) -> list[str]:
        """Query MAG by each of the candidate's author ids; returns the local
        ids of extra records added (or matched outside the CV)."""
        entry = self.log.app(app.app_id)
        cv_ids = set(app.cv_publications)
        extras: list[str] = []
        for author_id in sorted(entry.author_ids):
            offset = 0
            while True:
                response = self.client.fetch(
                    SourceQuery.make(
                        Source.MAG,
                        QueryKind.PAPERS_BY_AUTHOR,
                        author_id=author_id,
                        offset=offset,
                        count=MAG_PAGE_SIZE,
                    )
                )
                for raw in response.records:
                    lid = self._absorb_expansion_entity(raw, app, cv_ids, entry)
                    if lid is not None and lid not in extras:
                        extras.append(lid)
                if len(response.records) < MAG_PAGE_SIZE:
                    break
                offset += MAG_PAGE_SIZE
        entry.extras |= set(extras)
        return extras

    def _absorb_expansion_entity(
        self, raw: Mapping, app: Application, cv_ids: set[str], entry: AppLog
    ) -> str | None:
        mapped = map_raw_record(Source.MAG, raw)
        target = None
        mag_id = mapped.source_ids.get("mag")
        if mag_id:
            target = self.corpus.find_by_source_id("mag", mag_id)
        if target is None and mapped.doi:
            target = self.corpus.find_by_doi(mapped.doi)
        if target is None:
            for lid in cv_ids:
                rec = self.corpus.publications[lid]
                if match_by_title_year(rec, mapped):
                    target = rec
                    break
        if target is not None and target.local_id in cv_ids:
            # known CV publication: fill in the missing information only
            merge_record(target, _without_references(mapped))
            self.corpus.reindex(target.local_id)
            entry.found["mag"].add(target.local_id)
            entry.unresolved.discard(target.local_id)
            target.flags.discard(FLAG_UNRESOLVED)
            return None
        mapped.provenance = Provenance.EXTRA_FROM_AUTHOR_EXPANSION
        mapped.references = []
        return self.corpus.upsert_record(mapped)

    # -- stage 4 -----------------------------------------------------------

    def fetch_neighbors(self, record_ids: Iterable[str]) -> list[tuple[str, str]]:
        """Fetch citing/cited neighbors for the given records; returns the
        citation pairs added.  Neighbors found via both MAG and COCI merge
        on DOI; a failed Crossref metadata fetch leaves a flagged stub."""
        pairs: list[tuple[str, str]] = []
        for lid in sorted(set(record_ids)):
            rec = self.corpus.publications[lid]
            mag_id = rec.source_ids.get("mag")
            if mag_id:
                ref_ids = [part for part in rec.source_ids.get("mag_refs", "").split(",") if part]
                if ref_ids:
                    response = self.client.fetch(
                        SourceQuery.make(Source.MAG, QueryKind.REFERENCES_OF, ids=",".join(ref_ids))
                    )
                    for raw in response.records:
                        cited = self._add_neighbor(map_raw_record(Source.MAG, raw))
                        pairs.append((lid, cited))
                response = self.client.fetch(
                    SourceQuery.make(Source.MAG, QueryKind.CITATIONS_OF, id=mag_id)
                )
                for raw in response.records:
                    citing = self._add_neighbor(map_raw_record(Source.MAG, raw))
                    pairs.append((citing, lid))
            if rec.doi:
                response = self.client.fetch(
                    SourceQuery.make(Source.COCI, QueryKind.REFERENCES_OF, doi=rec.doi)
                )
                for row in response.records:
                    cited = self._neighbor_for_doi(str(row["cited"]).lower())
                    pairs.append((lid, cited))
                response = self.client.fetch(
                    SourceQuery.make(Source.COCI, QueryKind.CITATIONS_OF, doi=rec.doi)
                )
                for row in response.records:
                    citing = self._neighbor_for_doi(str(row["citing"]).lower())
                    pairs.append((citing, lid))
        for citing, cited in pairs:
            self.corpus.add_citation(citing, cited)
        return pairs

    def _add_neighbor(self, mapped: PublicationRecord) -> str:
        mapped.provenance = Provenance.NEIGHBOR
        mapped.references = []
        return self.corpus.upsert_record(mapped)

    def _neighbor_for_doi(self, doi: str) -> str:
        existing = self.corpus.find_by_doi(doi)
        if existing is not None:
            return existing.local_id
        try:
            response = self.client.fetch(SourceQuery.make(Source.CR, QueryKind.BY_DOI, doi=doi))
            if response.records:
                return self._add_neighbor(map_raw_record(Source.CR, response.records[0]))
        except (TransportError, FixtureMissingError) as exc:
            logger.warning("CR metadata fetch failed for %s: %s", doi, exc)
        # degradation rule: keep the citation pair, flag the stub
        stub = PublicationRecord(
            local_id=local_id_for_doi(doi),
            title="",
            norm_title="",
            year=None,
            authors=[],
            kind=Kind.OTHER,
            provenance=Provenance.NEIGHBOR,
            doi=doi,
            flags={FLAG_METADATA_MISSING},
        )
        return self.corpus.upsert_record(stub)

    # -- convenience: run everything --------------------------------------

    def run_all(self) -> None:
        for app in self.corpus.applications:
            self.resolve_application(app)
        for commission in self.corpus.commissions:
            self.resolve_commission(commission)
        for app in self.corpus.applications:
            self.expand_application(app)
        targets: list[str] = []
        for app in self.corpus.applications:
            entry = self.log.app(app.app_id)
            targets += [lid for lid in app.cv_publications if lid in entry.found_any()]
            targets += sorted(entry.extras)
        for commission in self.corpus.commissions:
            targets += [
                lid
                for lid in commission.publications
                if FLAG_UNRESOLVED not in self.corpus.publications[lid].flags
            ]
        self.fetch_neighbors(targets)


def _without_references(mapped: PublicationRecord) -> PublicationRecord:
    # raw reference ids stay in source_ids["mag_refs"] until stage 4 turns
    # them into in-corpus citation pairs
    mapped.references = []
    return mapped


def _candidate_author_ids(raw: Mapping, candidate: PersonName) -> set[str]:
    out = set()
    for author in raw.get("AA", []):
        if author.get("AuId") is None:
            continue
        name = str(author.get("AuN", ""))
        tokens = name.split()
        if not tokens:
            continue
        person = PersonName(surname=tokens[-1], given=" ".join(tokens[:-1]))
        if score_author(candidate, [person]) >= 1:
            out.add(str(author["AuId"]))
    return out


# -- coverage sections and statistics ----------------------------------------


def section_for(
    cv_total: int, found: int, extras: int, ratio: Fraction = DEFAULT_SECTION_RATIO
) -> Section:
    """A when more than 15 CV items were retrieved or the retrieved share
    reaches the ratio; B when CV hits plus extras reach a comparable total
    (the same ratio of the CV size); C otherwise.  Exact arithmetic."""
    if cv_total <= 0:
        raise ValueError("empty CV")
    if found > 15 or Fraction(found, cv_total) >= ratio:
        return Section.A
    if Fraction(found + extras, cv_total) >= ratio:
        return Section.B
    return Section.C


def harvest_counts(app: Application, corpus: Corpus) -> tuple[int, int, int]:
    """(cv_total, found, extras) derived from corpus state: resolved CV
    records count as found, author-expansion extras authored by the
    candidate count as extras."""
    from .graphs import authored_by

    cv_total = len(app.cv_publications)
    found = sum(
        1
        for lid in app.cv_publications
        if FLAG_UNRESOLVED not in corpus.publications[lid].flags
    )
    extras = sum(
        1
        for rec in corpus.publications.values()
        if rec.provenance is Provenance.EXTRA_FROM_AUTHOR_EXPANSION
        and authored_by(app.candidate, rec)
    )
    return cv_total, found, extras


def assign_coverage_section(
    app: Application, corpus: Corpus, ratio: Fraction = DEFAULT_SECTION_RATIO
) -> Section:
    cv_total, found, extras = harvest_counts(app, corpus)
    return section_for(cv_total, found, extras, ratio)


def assign_all_sections(corpus: Corpus, ratio: Fraction = DEFAULT_SECTION_RATIO) -> None:
    for app in corpus.applications:
        app.coverage_section = assign_coverage_section(app, corpus, ratio)


@dataclass(frozen=True)
class DatasetFinding:
    """What one dataset yielded for one application."""

    found: frozenset[str]
    extras: frozenset[str] = frozenset()


def log_findings(corpus: Corpus, log: HarvestLog) -> dict[str, dict[str, DatasetFinding]]:
    """Shape the harvest log for :func:`coverage_stats`: per application,
    per dataset (plus the combined union), the found CV ids and extras.
    Extras ride with the dataset that discovered them (MAG) and the union."""
    out: dict[str, dict[str, DatasetFinding]] = {}
    for app in corpus.applications:
        entry = log.app(app.app_id)
        per_ds = {
            ds: DatasetFinding(
                found=frozenset(entry.found[ds]),
                extras=frozenset(entry.extras) if ds == "mag" else frozenset(),
            )
            for ds in DATASETS
        }
        per_ds[COMBINED] = DatasetFinding(
            found=frozenset(entry.found_any()), extras=frozenset(entry.extras)
        )
        out[app.app_id] = per_ds
    return out


@dataclass
class CoverageStats:
    per_application: dict[str, dict[str, float]]
    per_field_median: dict[tuple[str, str], float]
    mode: str


def _median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2.0


def coverage_stats(
    corpus: Corpus,
    per_dataset_found: Mapping[str, Mapping[str, DatasetFinding]],
    mode: str,
) -> CoverageStats:
    """Per-application coverage percentages plus per-(field, dataset) medians.

    Strict mode: found CV items over the CV size, in [0, 100].  Selection
    mode: found plus extras over the CV size, which can exceed 100.
    """
    if mode not in ("strict", "selection"):
        raise ValueError(f"unknown coverage mode: {mode}")
    per_application: dict[str, dict[str, float]] = {}
    by_field_dataset: dict[tuple[str, str], list[float]] = {}
    for app in corpus.applications:
        findings = per_dataset_found.get(app.app_id, {})
        cv_total = len(app.cv_publications)
        if cv_total == 0:
            raise ValueError(f"empty CV for {app.app_id}")
        row: dict[str, float] = {}
        for dataset, finding in findings.items():
            hits = len(finding.found)
            if mode == "selection":
                hits += len(finding.extras)
            pct = 100.0 * hits / cv_total
            row[dataset] = pct
            by_field_dataset.setdefault((app.field, dataset), []).append(pct)
        per_application[app.app_id] = row
    per_field_median = {
        key: _median(values) for key, values in sorted(by_field_dataset.items())
    }
    return CoverageStats(
        per_application=per_application, per_field_median=per_field_median, mode=mode
    )


def five_number_summary(values: Sequence[float]) -> tuple[float, float, float, float, float]:
    """(min, Q1, median, Q3, max) with median-exclusive quartiles."""
    ordered = sorted(values)
    if not ordered:
        raise ValueError("no values")
    n = len(ordered)
    lower = ordered[: n // 2]
    upper = ordered[(n + 1) // 2 :]
    q1 = _median(lower) if lower else ordered[0]
    q3 = _median(upper) if upper else ordered[-1]
    return (ordered[0], q1, _median(ordered), q3, ordered[-1])


def coverage_summary_rows(corpus: Corpus, log: HarvestLog) -> list[list]:
    """Boxplot-ready five-number rows per (dataset, field, role, mode)."""
    findings = log_findings(corpus, log)
    rows = []
    for mode in ("strict", "selection"):
        stats = coverage_stats(corpus, findings, mode)
        grouped: dict[tuple[str, str, str], list[float]] = {}
        for app in corpus.applications:
            for dataset, pct in stats.per_application[app.app_id].items():
                grouped.setdefault((dataset, app.field, app.role.value), []).append(pct)
        for (dataset, field_code, role), values in sorted(grouped.items()):
            mn, q1, med, q3, mx = five_number_summary(values)
            rows.append(
                [dataset, field_code, role, mode, len(values),
                 f"{mn:.4f}", f"{q1:.4f}", f"{med:.4f}", f"{q3:.4f}", f"{mx:.4f}"]
            )
    return rows


COVERAGE_SUMMARY_HEADER = [
    "dataset", "field", "role", "mode", "n", "min", "q1", "median", "q3", "max",
]

SECTIONS_HEADER = ["app_id", "section", "found_cv", "extras", "cv_total"]


def section_rows(corpus: Corpus) -> list[list]:
    rows = []
    for app in sorted(corpus.applications, key=lambda a: a.app_id):
        cv_total, found, extras = harvest_counts(app, corpus)
        rows.append([app.app_id, app.coverage_section.value, found, extras, cv_total])
    return rows


COVERAGE_CSV_HEADER = ["app_id", "dataset", "mode", "percentage"]


def coverage_rows(corpus: Corpus, log: HarvestLog, modes: Sequence[str]) -> list[list]:
    findings = log_findings(corpus, log)
    rows = []
    for mode in modes:
        stats = coverage_stats(corpus, findings, mode)
        for app_id in sorted(stats.per_application):
            for dataset in sorted(stats.per_application[app_id]):
                pct = stats.per_application[app_id][dataset]
                rows.append([app_id, dataset, mode, f"{pct:.4f}"])
    return rows
