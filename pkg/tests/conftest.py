from __future__ import annotations

from pathlib import Path

import pytest

from citeweave.matching import normalize_title
from citeweave.model import (
    Application,
    Corpus,
    Kind,
    Outcome,
    PersonName,
    Provenance,
    PublicationRecord,
    Role,
    local_id_for_title,
)

REPO_ROOT = Path(__file__).resolve().parent.parent


def make_record(
    title: str,
    year: int | None = 2015,
    doi: str | None = None,
    authors: list[PersonName] | None = None,
    kind: Kind = Kind.JOURNAL_ARTICLE,
    provenance: Provenance = Provenance.CV,
    local_id: str | None = None,
    **extra,
) -> PublicationRecord:
    norm = normalize_title(title)
    return PublicationRecord(
        local_id=local_id or local_id_for_title(norm, year),
        title=title,
        norm_title=norm,
        year=year,
        authors=authors if authors is not None else [PersonName("Rossi", "Maria")],
        kind=kind,
        provenance=provenance,
        doi=doi.lower() if doi else None,
        **extra,
    )


def make_application(
    app_id: str = "app-1",
    candidate: PersonName = PersonName("Rossi", "Maria"),
    field: str = "10/G1",
    role: Role = Role.FULL_PROFESSOR,
    term: int = 1,
    outcome: Outcome = Outcome.PASSED,
    cv_publications: list[str] | None = None,
    nd_m1: int = 3,
    nd_m2: int = 1,
    nd_m3: int = 1,
) -> Application:
    return Application(
        app_id=app_id,
        candidate=candidate,
        field=field,
        role=role,
        term=term,
        outcome=outcome,
        cv_publications=cv_publications or [],
        nd_m1=nd_m1,
        nd_m2=nd_m2,
        nd_m3=nd_m3,
    )


@pytest.fixture
def empty_corpus() -> Corpus:
    return Corpus()


def build_corpus(records, applications=(), commissions=()) -> Corpus:
    corpus = Corpus()
    for rec in records:
        corpus.upsert_record(rec)
    for app in applications:
        corpus.add_application(app)
    for commission in commissions:
        corpus.add_commission(commission)
    return corpus
