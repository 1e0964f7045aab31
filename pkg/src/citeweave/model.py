"""Domain types for the bibliographic pipeline and their directory serialization.

A :class:`Corpus` is the shared store every stage reads and writes: one global
pool of publication records, the applications and commissions that reference
them, and the citation pairs among them.  Constructors stay permissive so that
malformed data can be represented and then reported by :func:`validate_corpus`;
ingestion is responsible for storing clean values in the first place.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator


class Kind(str, Enum):
    """Three-way publication type split used by the basic metrics."""

    BOOK = "book"
    JOURNAL_ARTICLE = "journal_article"
    OTHER = "other"


class Provenance(str, Enum):
    """Where a record entered the corpus."""

    CV = "cv"
    INDICATOR_LIST = "indicator_list"
    EXTRA_FROM_AUTHOR_EXPANSION = "extra_from_author_expansion"
    COMMISSION = "commission"
    NEIGHBOR = "neighbor"


#: Merge priority when duplicate records collapse: higher rank wins.
PROVENANCE_RANK = {
    Provenance.CV: 4,
    Provenance.INDICATOR_LIST: 3,
    Provenance.COMMISSION: 2,
    Provenance.EXTRA_FROM_AUTHOR_EXPANSION: 1,
    Provenance.NEIGHBOR: 0,
}


class Role(str, Enum):
    FULL_PROFESSOR = "FP"
    ASSOCIATE_PROFESSOR = "AP"


class Outcome(str, Enum):
    PASSED = "passed"
    FAILED = "failed"


class Section(str, Enum):
    """Per-application data-quality tier from the harvest."""

    A = "A"
    B = "B"
    C = "C"
    UNASSIGNED = "unassigned"


#: Record flags used by the harvest stages.
FLAG_UNRESOLVED = "unresolved"
FLAG_METADATA_MISSING = "metadata_missing"


@dataclass(frozen=True)
class PersonName:
    """A surname plus given name; the given-name initial is derived."""

    surname: str
    given: str = ""

    @property
    def initial(self) -> str:
        return self.given[:1]

    def to_json(self) -> dict:
        return {"surname": self.surname, "given": self.given}

    @classmethod
    def from_json(cls, obj: dict) -> "PersonName":
        return cls(surname=obj["surname"], given=obj.get("given", ""))


@dataclass
class PublicationRecord:
    """One bibliographic item with identifiers, provenance, and known citations.

    ``references`` holds local ids of records this one is known to cite; it is
    only ever populated with ids that resolve inside the owning corpus.  Raw
    source-side identifier lists (e.g. reference ids not yet fetched) live in
    ``source_ids`` under the documented ``*_refs`` / ``*_authors`` keys.
    """

    local_id: str
    title: str
    norm_title: str
    year: int | None
    authors: list[PersonName]
    kind: Kind
    provenance: Provenance
    doi: str | None = None
    source_ids: dict[str, str] = field(default_factory=dict)
    references: list[str] = field(default_factory=list)
    flags: set[str] = field(default_factory=set)

    def to_json(self) -> dict:
        return {
            "local_id": self.local_id,
            "doi": self.doi,
            "source_ids": dict(sorted(self.source_ids.items())),
            "title": self.title,
            "norm_title": self.norm_title,
            "year": self.year,
            "authors": [a.to_json() for a in self.authors],
            "kind": self.kind.value,
            "provenance": self.provenance.value,
            "references": list(self.references),
            "flags": sorted(self.flags),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PublicationRecord":
        return cls(
            local_id=obj["local_id"],
            title=obj["title"],
            norm_title=obj["norm_title"],
            year=obj["year"],
            authors=[PersonName.from_json(a) for a in obj["authors"]],
            kind=Kind(obj["kind"]),
            provenance=Provenance(obj["provenance"]),
            doi=obj.get("doi"),
            source_ids=dict(obj.get("source_ids", {})),
            references=list(obj.get("references", [])),
            flags=set(obj.get("flags", [])),
        )


@dataclass
class Application:
    """One candidate's submission to one (field, role, term)."""

    app_id: str
    candidate: PersonName
    field: str
    role: Role
    term: int
    outcome: Outcome
    cv_publications: list[str]
    nd_m1: int
    nd_m2: int
    nd_m3: int
    coverage_section: Section = Section.UNASSIGNED

    def to_json(self) -> dict:
        return {
            "app_id": self.app_id,
            "candidate": self.candidate.to_json(),
            "field": self.field,
            "role": self.role.value,
            "term": self.term,
            "outcome": self.outcome.value,
            "cv_publications": list(self.cv_publications),
            "nd_m1": self.nd_m1,
            "nd_m2": self.nd_m2,
            "nd_m3": self.nd_m3,
            "coverage_section": self.coverage_section.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Application":
        return cls(
            app_id=obj["app_id"],
            candidate=PersonName.from_json(obj["candidate"]),
            field=obj["field"],
            role=Role(obj["role"]),
            term=obj["term"],
            outcome=Outcome(obj["outcome"]),
            cv_publications=list(obj["cv_publications"]),
            nd_m1=obj["nd_m1"],
            nd_m2=obj["nd_m2"],
            nd_m3=obj["nd_m3"],
            coverage_section=Section(obj.get("coverage_section", "unassigned")),
        )


@dataclass
class Commission:
    """The evaluation committee for one (field, term) and its publications."""

    field: str
    term: int
    members: list[PersonName]
    publications: list[str]

    def to_json(self) -> dict:
        return {
            "field": self.field,
            "term": self.term,
            "members": [m.to_json() for m in self.members],
            "publications": list(self.publications),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Commission":
        return cls(
            field=obj["field"],
            term=obj["term"],
            members=[PersonName.from_json(m) for m in obj["members"]],
            publications=list(obj["publications"]),
        )


def make_local_id(*parts: str) -> str:
    """Stable 16-hex-char id from the given identity parts."""
    joined = "\x1f".join(parts)
    return hashlib.sha256(joined.encode("utf-8")).hexdigest()[:16]


def local_id_for_source(source: str, source_id: str) -> str:
    return make_local_id("src", source, str(source_id))


def local_id_for_doi(doi: str) -> str:
    return make_local_id("doi", doi.lower())


def local_id_for_title(norm_title: str, year: int | None) -> str:
    return make_local_id("title", norm_title, "" if year is None else str(year))


class CorpusError(Exception):
    """Raised for structural misuse of a corpus (duplicate ids, unknown ids)."""


@dataclass
class Corpus:
    """The shared publication store plus applications, commissions, citations.

    Mutation happens only through the ``upsert_record`` / ``add_citation`` /
    ``attach_doi`` helpers during single-writer ingestion and harvest phases;
    afterwards a corpus is treated as an immutable snapshot that concurrent
    readers may share.
    """

    publications: dict[str, PublicationRecord] = field(default_factory=dict)
    applications: list[Application] = field(default_factory=list)
    commissions: list[Commission] = field(default_factory=list)
    citations: set[tuple[str, str]] = field(default_factory=set)

    def __post_init__(self) -> None:
        self._doi_index: dict[str, str] = {}
        self._source_index: dict[tuple[str, str], str] = {}
        for rec in self.publications.values():
            self._index_record(rec)

    # -- identity indexes -------------------------------------------------

    def _index_record(self, rec: PublicationRecord) -> None:
        if rec.doi:
            self._doi_index.setdefault(rec.doi.lower(), rec.local_id)
        for key in ("mag", "oa", "cr"):
            sid = rec.source_ids.get(key)
            if sid:
                self._source_index.setdefault((key, sid), rec.local_id)

    def find_by_doi(self, doi: str) -> PublicationRecord | None:
        lid = self._doi_index.get(doi.lower())
        return self.publications.get(lid) if lid else None

    def find_by_source_id(self, source: str, source_id: str) -> PublicationRecord | None:
        lid = self._source_index.get((source, str(source_id)))
        return self.publications.get(lid) if lid else None

    # -- single-writer mutation helpers -----------------------------------

    def upsert_record(self, rec: PublicationRecord) -> str:
        """Insert ``rec`` or merge it into an existing record with the same
        identity (local id, source id, or DOI).  Returns the canonical id."""
        existing = self.publications.get(rec.local_id)
        if existing is None and rec.doi:
            existing = self.find_by_doi(rec.doi)
        if existing is None:
            for key in ("mag", "oa", "cr"):
                sid = rec.source_ids.get(key)
                if sid:
                    existing = self.find_by_source_id(key, sid)
                    if existing is not None:
                        break
        if existing is None:
            self.publications[rec.local_id] = rec
            self._index_record(rec)
            return rec.local_id
        merge_record(existing, rec)
        self._index_record(existing)
        return existing.local_id

    def attach_doi(self, local_id: str, doi: str) -> None:
        rec = self.publications[local_id]
        if rec.doi is None:
            rec.doi = doi.lower()
        self._index_record(rec)

    def reindex(self, local_id: str) -> None:
        """Refresh identity indexes after an in-place merge on a record."""
        self._index_record(self.publications[local_id])

    def add_citation(self, citing: str, cited: str) -> None:
        if citing == cited:
            return
        if citing not in self.publications or cited not in self.publications:
            raise CorpusError(f"citation endpoint not in corpus: {citing} -> {cited}")
        if (citing, cited) not in self.citations:
            self.citations.add((citing, cited))
            rec = self.publications[citing]
            if cited not in rec.references:
                rec.references.append(cited)

    def add_application(self, app: Application) -> None:
        if any(a.app_id == app.app_id for a in self.applications):
            raise CorpusError(f"duplicate app_id: {app.app_id}")
        self.applications.append(app)

    def add_commission(self, commission: Commission) -> None:
        if any(
            c.field == commission.field and c.term == commission.term
            for c in self.commissions
        ):
            raise CorpusError(
                f"duplicate commission for ({commission.field}, term {commission.term})"
            )
        self.commissions.append(commission)

    def commission_for(self, field_code: str, term: int) -> Commission | None:
        for c in self.commissions:
            if c.field == field_code and c.term == term:
                return c
        return None

    def application(self, app_id: str) -> Application:
        for a in self.applications:
            if a.app_id == app_id:
                return a
        raise CorpusError(f"unknown app_id: {app_id}")


def merge_record(base: PublicationRecord, other: PublicationRecord) -> None:
    """Fold ``other`` into ``base``: union identifiers and references, fill
    missing metadata, and keep the strongest provenance."""
    if base.doi is None and other.doi:
        base.doi = other.doi.lower()
    for key, value in other.source_ids.items():
        if key.endswith("_refs") or key.endswith("_authors"):
            merged = list(dict.fromkeys(_split_ids(base.source_ids.get(key, "")) + _split_ids(value)))
            if merged:
                base.source_ids[key] = ",".join(merged)
        else:
            base.source_ids.setdefault(key, value)
    if not base.title and other.title:
        base.title = other.title
        base.norm_title = other.norm_title
    if base.year is None:
        base.year = other.year
    if not base.authors and other.authors:
        base.authors = list(other.authors)
    if base.kind is Kind.OTHER and other.kind is not Kind.OTHER:
        base.kind = other.kind
    if PROVENANCE_RANK[other.provenance] > PROVENANCE_RANK[base.provenance]:
        base.provenance = other.provenance
    for ref in other.references:
        if ref not in base.references and ref != base.local_id:
            base.references.append(ref)
    if base.title and FLAG_METADATA_MISSING in base.flags:
        base.flags.discard(FLAG_METADATA_MISSING)


def _split_ids(joined: str) -> list[str]:
    return [part for part in joined.split(",") if part]


@dataclass(frozen=True)
class Violation:
    """One broken invariant: the rule name, the offending id, and a message."""

    rule: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.subject}: {self.message}"


def validate_corpus(corpus: Corpus) -> list[Violation]:
    """Check every type invariant; violations are data, not failures.

    Returns an empty list iff the corpus is well formed.  The result does not
    depend on record insertion order and repeated calls return equal lists.
    """
    from .matching import normalize_title  # local import: matching builds on model

    out: list[Violation] = []
    seen_dois: dict[str, str] = {}
    for lid in sorted(corpus.publications):
        rec = corpus.publications[lid]
        if rec.local_id != lid:
            out.append(Violation("record-key", lid, f"stored under {lid} but local_id is {rec.local_id}"))
        if rec.doi is not None:
            if not rec.doi:
                out.append(Violation("doi-nonempty", lid, "doi present but empty"))
            elif rec.doi != rec.doi.lower():
                out.append(Violation("doi-lowercase", lid, f"doi {rec.doi!r} is not lowercase"))
            else:
                prior = seen_dois.get(rec.doi)
                if prior is not None:
                    out.append(Violation("doi-unique", lid, f"doi {rec.doi!r} already used by {prior}"))
                else:
                    seen_dois[rec.doi] = lid
        if rec.norm_title != normalize_title(rec.title):
            out.append(Violation("norm-title", lid, "norm_title does not match normalize_title(title)"))
        if len(set(rec.references)) != len(rec.references):
            out.append(Violation("refs-unique", lid, "duplicate ids in references"))
        if lid in rec.references:
            out.append(Violation("refs-no-self", lid, "record cites itself"))
        for ref in rec.references:
            if ref not in corpus.publications:
                out.append(Violation("refs-resolve", lid, f"reference {ref} not in corpus"))
        for author in rec.authors:
            if not author.surname:
                out.append(Violation("author-surname", lid, "author with empty surname"))

    seen_apps: set[str] = set()
    for app in corpus.applications:
        aid = app.app_id
        if aid in seen_apps:
            out.append(Violation("app-unique", aid, "duplicate app_id"))
        seen_apps.add(aid)
        if not 1 <= app.term <= 5:
            out.append(Violation("app-term", aid, f"term {app.term} outside 1..5"))
        for name, value in (("nd_m1", app.nd_m1), ("nd_m2", app.nd_m2), ("nd_m3", app.nd_m3)):
            if value < 0:
                out.append(Violation("app-nd-nonnegative", aid, f"{name} is negative"))
        if len(set(app.cv_publications)) != len(app.cv_publications):
            out.append(Violation("app-cv-unique", aid, "duplicate local_ids in cv_publications"))
        for lid in app.cv_publications:
            if lid not in corpus.publications:
                out.append(Violation("app-cv-resolve", aid, f"cv publication {lid} not in corpus"))
        if not app.candidate.surname:
            out.append(Violation("app-candidate", aid, "candidate surname empty"))

    for commission in corpus.commissions:
        cid = f"{commission.field}/term{commission.term}"
        if not commission.members:
            out.append(Violation("commission-members", cid, "commission has no members"))
        if len(set(commission.publications)) != len(commission.publications):
            out.append(Violation("commission-pubs-unique", cid, "duplicate publications"))
        for lid in commission.publications:
            if lid not in corpus.publications:
                out.append(Violation("commission-pubs-resolve", cid, f"publication {lid} not in corpus"))

    ref_pairs = {
        (lid, ref)
        for lid, rec in corpus.publications.items()
        for ref in rec.references
    }
    for citing, cited in sorted(corpus.citations - ref_pairs):
        out.append(Violation("citations-consistent", citing, f"pair ({citing}, {cited}) missing from references"))
    for citing, cited in sorted(ref_pairs - corpus.citations):
        out.append(Violation("citations-consistent", citing, f"reference ({citing}, {cited}) missing from citations"))
    return out


# -- directory persistence -------------------------------------------------

PUBLICATIONS_FILE = "publications.jsonl"
APPLICATIONS_FILE = "applications.json"
COMMISSIONS_FILE = "commissions.json"
CITATIONS_FILE = "citations.csv"


def save_corpus(corpus: Corpus, directory: str | Path) -> None:
    """Write the corpus as a directory of UTF-8 text files, deterministically
    ordered so identical corpora serialize to identical bytes."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    with open(root / PUBLICATIONS_FILE, "w", encoding="utf-8", newline="\n") as fh:
        for lid in sorted(corpus.publications):
            fh.write(json.dumps(corpus.publications[lid].to_json(), sort_keys=True, ensure_ascii=False))
            fh.write("\n")
    apps = sorted(corpus.applications, key=lambda a: a.app_id)
    (root / APPLICATIONS_FILE).write_text(
        json.dumps([a.to_json() for a in apps], sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    comms = sorted(corpus.commissions, key=lambda c: (c.field, c.term))
    (root / COMMISSIONS_FILE).write_text(
        json.dumps([c.to_json() for c in comms], sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    with open(root / CITATIONS_FILE, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["citing", "cited"])
        for citing, cited in sorted(corpus.citations):
            writer.writerow([citing, cited])


def load_corpus(directory: str | Path) -> Corpus:
    root = Path(directory)
    publications: dict[str, PublicationRecord] = {}
    with open(root / PUBLICATIONS_FILE, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = PublicationRecord.from_json(json.loads(line))
            publications[rec.local_id] = rec
    applications = [
        Application.from_json(obj)
        for obj in json.loads((root / APPLICATIONS_FILE).read_text(encoding="utf-8"))
    ]
    commissions = [
        Commission.from_json(obj)
        for obj in json.loads((root / COMMISSIONS_FILE).read_text(encoding="utf-8"))
    ]
    citations: set[tuple[str, str]] = set()
    with open(root / CITATIONS_FILE, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is not None and header != ["citing", "cited"]:
            citations.add((header[0], header[1]))
        for row in reader:
            if row:
                citations.add((row[0], row[1]))
    return Corpus(
        publications=publications,
        applications=applications,
        commissions=commissions,
        citations=citations,
    )


def derive_citations(publications: Iterable[PublicationRecord]) -> set[tuple[str, str]]:
    """The citation pair set implied by the records' reference lists."""
    return {(rec.local_id, ref) for rec in publications for ref in rec.references}


def iter_records_sorted(corpus: Corpus) -> Iterator[PublicationRecord]:
    for lid in sorted(corpus.publications):
        yield corpus.publications[lid]
