"""Deterministic synthetic input bundle: CVs, commission exports, fixtures.

Builds a small self-consistent world (16 applications over 2 fields x 2
roles x terms {1, 2, 3|4, 5}, two commissions, extras, gray neighbors) and
records every source response the harvest will request, keyed by query
hash, so the full pipeline runs offline and byte-reproducibly.

Resolution paths are spread across the ladder: per application some records
hit MAG by DOI, some by title and year, one lands in OpenAIRE, one in
Crossref through the score gate, and the rest stay unresolved.  One
application per role pair sits in coverage section B (extras compensating a
weak CV match rate) and one in section C.  One COCI citing DOI per field
deliberately lacks its Crossref fixture to exercise the flagged-stub
degradation path.

Usage::

    python -m citeweave.sampledata --out sample_data
"""

from __future__ import annotations

import argparse
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .matching import load_stopwords, normalize_title, select_keywords
from .sources import QueryKind, Source, SourceQuery, write_fixture

FIELDS = ("10/G1", "13/D4")
ROLES = ("FP", "AP")

_TOPICS = {
    "10/G1": ["dialect syntax", "loanword phonology", "manuscript glosses", "verb morphology"],
    "13/D4": ["risk premia", "annuity pricing", "market volatility", "pension models"],
}


@dataclass
class Pub:
    handle: str
    title: str
    year: int
    kind: str
    authors: list[tuple[str, str]]  # (surname, given)
    doi: str | None = None
    mag_id: int | None = None
    au_ids: dict[tuple[str, str], int] = field(default_factory=dict)
    rids: list[int] = field(default_factory=list)  # mag ids this pub cites
    resolution: str = "none"  # mag_doi | mag_title | oa | cr | none
    coci_refs: list[str] = field(default_factory=list)  # cited DOIs
    coci_cites: list[str] = field(default_factory=list)  # citing DOIs
    granted_doi: str | None = None  # doi supplied by the OA/CR stage

    def final_doi(self) -> str | None:
        return self.doi or self.granted_doi

    def mag_entity(self) -> dict:
        entity = {
            "Id": self.mag_id,
            "Ti": self.title.lower(),
            "Y": self.year,
            "AA": [
                {
                    "AuN": f"{given.lower()} {surname.lower()}",
                    # authors without an assigned id (gray neighbors) get a
                    # stable synthetic one derived from the entity
                    "AuId": self.au_ids.get((surname, given), 900000 + self.mag_id * 10 + idx),
                }
                for idx, (surname, given) in enumerate(self.authors)
            ],
            "RId": list(self.rids),
            "Pt": {"journal_article": "1", "book": "5"}.get(self.kind, "0"),
        }
        if self.doi:
            entity["DOI"] = self.doi
        return entity


@dataclass
class AppSpec:
    app_id: str
    field: str
    role: str
    term: int
    outcome: str
    candidate: tuple[str, str]
    section: str  # target coverage section: A | B | C
    pubs: list[Pub] = field(default_factory=list)
    indicator_dup: Pub | None = None
    indicator_new: Pub | None = None
    green: Pub | None = None
    extras: list[Pub] = field(default_factory=list)
    candidate_au: int = 0
    nd: tuple[int, int, int] = (0, 0, 0)


@dataclass
class World:
    apps: list[AppSpec] = field(default_factory=list)
    commission_pubs: dict[str, list[Pub]] = field(default_factory=dict)
    members: dict[str, list[tuple[str, str]]] = field(default_factory=dict)
    member_au: dict[tuple[str, str], int] = field(default_factory=dict)
    grays: list[Pub] = field(default_factory=list)
    broken_dois: set[str] = field(default_factory=set)

    def all_pubs(self) -> list[Pub]:
        out = []
        for app in self.apps:
            out += app.pubs + app.extras
            if app.green is not None:
                out.append(app.green)
        for pubs in self.commission_pubs.values():
            out += pubs
        out += self.grays
        return out


def build_world() -> World:
    world = World()
    mag_counter = iter(range(1000, 100000))
    title_counter = iter(range(1, 100000))

    def title_for(field_code: str, kind_hint: str) -> tuple[str, int]:
        n = next(title_counter)
        topic = _TOPICS[field_code][n % len(_TOPICS[field_code])]
        year = 2004 + (n * 7) % 14
        return f"Essays on {topic} volume {n}", year

    for field_code in FIELDS:
        short = field_code.replace("/", "").lower()
        members = [(f"Chair{short.capitalize()}", "Anna"), (f"Board{short.capitalize()}", "Luca"),
                   (f"Panel{short.capitalize()}", "Rita")]
        world.members[field_code] = members
        for idx, member in enumerate(members):
            world.member_au[member] = 500 + FIELDS.index(field_code) * 10 + idx
        pubs = []
        for i in range(8):
            title, year = title_for(field_code, "journal_article")
            member = members[i % 3]
            authors = [member] if i % 4 else [member, members[(i + 1) % 3]]
            pub = Pub(
                handle=f"{short}-c{i}",
                title=title,
                year=year,
                kind="journal_article" if i % 3 else "book",
                authors=authors,
                doi=f"10.50/{short}-c{i}",
                mag_id=next(mag_counter),
                resolution="mag_doi",
            )
            for author in authors:
                pub.au_ids[author] = world.member_au[author]
            pubs.append(pub)
        world.commission_pubs[field_code] = pubs

    app_index = 0
    for field_code in FIELDS:
        short = field_code.replace("/", "").lower()
        comm = world.commission_pubs[field_code]
        for role in ROLES:
            mid_term = 3 if role == "FP" else 4
            plan = [
                (1, "passed", "A"),
                (2, "failed", "A"),
                (mid_term, "passed" if role == "FP" else "failed", "B" if role == "FP" else "C"),
                (5, "passed" if app_index % 2 == 0 else "failed", "A"),
            ]
            for term, outcome, section in plan:
                app_id = f"{short}-{role.lower()}-t{term}"
                candidate = (f"Cand{app_index:02d}", "Elena" if app_index % 2 else "Marco")
                app = AppSpec(
                    app_id=app_id,
                    field=field_code,
                    role=role,
                    term=term,
                    outcome=outcome,
                    candidate=candidate,
                    section=section,
                    candidate_au=100 + app_index,
                )
                app.nd = (
                    (8 + app_index % 4, 4, 2) if outcome == "passed" else (3 + app_index % 3, 1, 1)
                )
                strength = 3 if outcome == "passed" else 1

                if section == "A":
                    tags = ["mag_doi"] * 3 + ["mag_title"] * 2 + ["oa", "cr", "none", "none"]
                elif section == "B":
                    tags = ["mag_doi"] * 2 + ["mag_title"] + ["none"] * 6
                else:
                    tags = ["mag_doi", "mag_title"] + ["none"] * 7
                for i, tag in enumerate(tags):
                    title, year = title_for(field_code, "x")
                    kind = "book" if i == 2 else ("other" if i == 4 else "journal_article")
                    pub = Pub(
                        handle=f"{app_id}-p{i}",
                        title=title,
                        year=year,
                        kind=kind,
                        authors=[candidate],
                        resolution=tag,
                    )
                    if tag == "mag_doi":
                        pub.doi = f"10.50/{app_id}-p{i}"
                        pub.mag_id = next(mag_counter)
                        pub.au_ids[candidate] = app.candidate_au
                    elif tag == "mag_title":
                        pub.mag_id = next(mag_counter)
                        pub.au_ids[candidate] = app.candidate_au
                    elif tag == "oa":
                        pub.granted_doi = f"10.51/{app_id}-p{i}"
                    elif tag == "cr":
                        pub.granted_doi = f"10.52/{app_id}-p{i}"
                    app.pubs.append(pub)
                app.indicator_dup = app.pubs[0]
                app.indicator_new = app.pubs[-1]

                # citation structure: candidate -> commission strength edges
                mag_pubs = [p for p in app.pubs if p.mag_id is not None]
                mag_pubs[0].rids = [comm[j].mag_id for j in range(min(strength, 3))]

                # extras discovered through the author id
                n_extras = {"A": 2, "B": 4, "C": 0}[section]
                for k in range(n_extras):
                    title, year = title_for(field_code, "x")
                    extra = Pub(
                        handle=f"{app_id}-x{k}",
                        title=title,
                        year=year,
                        kind="journal_article",
                        authors=[candidate],
                        doi=f"10.53/{app_id}-x{k}" if k % 2 == 0 else None,
                        mag_id=next(mag_counter),
                        resolution="expansion",
                    )
                    extra.au_ids[candidate] = app.candidate_au
                    if k == 0 and outcome == "passed":
                        extra.rids = [comm[3].mag_id]
                    app.extras.append(extra)

                # gray neighbors: co-citation, coupled reference, plain citers
                if outcome == "passed" and section == "A":
                    title, year = title_for(field_code, "x")
                    cc_gray = Pub(
                        handle=f"{app_id}-gcc",
                        title=title,
                        year=year,
                        kind="journal_article",
                        authors=[(f"Reader{app_index}", "Ugo")],
                        mag_id=next(mag_counter),
                        rids=[mag_pubs[0].mag_id, comm[0].mag_id],
                    )
                    world.grays.append(cc_gray)
                    title, year = title_for(field_code, "x")
                    bc_gray = Pub(
                        handle=f"{app_id}-gbc",
                        title=title,
                        year=year,
                        kind="journal_article",
                        authors=[(f"Classic{app_index}", "Ida")],
                        mag_id=next(mag_counter),
                    )
                    world.grays.append(bc_gray)
                    mag_pubs[1].rids = mag_pubs[1].rids + [bc_gray.mag_id]
                    comm[2].rids = comm[2].rids + [bc_gray.mag_id]
                for k in range(1 + strength):
                    title, year = title_for(field_code, "x")
                    citer = Pub(
                        handle=f"{app_id}-goc{k}",
                        title=title,
                        year=year,
                        kind="journal_article",
                        authors=[(f"Citer{app_index}x{k}", "Pia")],
                        mag_id=next(mag_counter),
                        rids=[mag_pubs[min(2, len(mag_pubs) - 1)].mag_id],
                    )
                    world.grays.append(citer)

                # COCI layer over granted DOIs
                oa_pub = next((p for p in app.pubs if p.resolution == "oa"), None)
                cr_pub = next((p for p in app.pubs if p.resolution == "cr"), None)
                if oa_pub is not None:
                    oa_pub.coci_refs = [comm[1].doi]
                if cr_pub is not None:
                    external = f"10.54/{app_id}-ext"
                    cr_pub.coci_cites = [external]
                    if term == 1 and role == "FP":
                        broken = f"10.77/{app_id}-miss"
                        cr_pub.coci_cites.append(broken)
                        world.broken_dois.add(broken)

                # one coauthored publication per (field, FP, term 1)
                if term == 1 and role == "FP":
                    title, year = title_for(field_code, "x")
                    green = Pub(
                        handle=f"{app_id}-green",
                        title=title,
                        year=year,
                        kind="journal_article",
                        authors=[candidate, world.members[field_code][0]],
                        doi=f"10.50/{app_id}-green",
                        mag_id=next(mag_counter),
                        resolution="mag_doi",
                    )
                    green.au_ids[candidate] = app.candidate_au
                    green.au_ids[world.members[field_code][0]] = world.member_au[
                        world.members[field_code][0]
                    ]
                    app.green = green

                world.apps.append(app)
                app_index += 1
    return world


def _pub_item(pub: Pub) -> dict:
    item = {
        "title": pub.title,
        "year": pub.year,
        "kind": pub.kind,
        "authors": [{"surname": s, "given": g} for s, g in pub.authors],
    }
    if pub.doi:
        item["doi"] = pub.doi
    return item


def write_inputs(world: World, root: Path) -> None:
    cv_dir = root / "cv"
    cv_dir.mkdir(parents=True, exist_ok=True)
    for app in world.apps:
        pubs = [_pub_item(p) for p in app.pubs[:-1]]
        if app.green is not None:
            pubs.append(_pub_item(app.green))
        indicators = [_pub_item(app.indicator_dup), _pub_item(app.indicator_new)]
        doc = {
            "app_id": app.app_id,
            "candidate": {"surname": app.candidate[0], "given": app.candidate[1]},
            "field": app.field,
            "role": app.role,
            "term": app.term,
            "outcome": app.outcome,
            "nd_m1": app.nd[0],
            "nd_m2": app.nd[1],
            "nd_m3": app.nd[2],
            "publications": pubs,
            "publications_for_indicators": indicators,
        }
        path = cv_dir / f"{app.app_id}.json"
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    comm_dir = root / "commissions"
    comm_dir.mkdir(parents=True, exist_ok=True)
    greens_by_field: dict[str, list[Pub]] = {}
    for app in world.apps:
        if app.green is not None:
            greens_by_field.setdefault(app.field, []).append(app.green)
    for field_code in FIELDS:
        short = field_code.replace("/", "").lower()
        for term in range(1, 6):
            path = comm_dir / f"{short}-t{term}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(
                    ["field", "term", "member_surname", "member_given", "title", "year", "doi", "kind"]
                )
                for pub in world.commission_pubs[field_code]:
                    for surname, given in pub.authors:
                        writer.writerow(
                            [field_code, term, surname, given, pub.title, pub.year, pub.doi or "", pub.kind]
                        )
                for green in greens_by_field.get(field_code, []):
                    member = world.members[field_code][0]
                    writer.writerow(
                        [field_code, term, member[0], member[1], green.title, green.year,
                         green.doi, green.kind]
                    )


def write_fixtures(world: World, fixtures: Path) -> int:
    stopwords = load_stopwords()
    count = 0

    def emit(query: SourceQuery, body) -> None:
        nonlocal count
        write_fixture(fixtures, query, body)
        count += 1

    by_mag: dict[int, Pub] = {p.mag_id: p for p in world.all_pubs() if p.mag_id is not None}
    by_doi: dict[str, Pub] = {}
    for pub in world.all_pubs():
        doi = pub.final_doi()
        if doi:
            by_doi[doi] = pub
    citers: dict[int, list[Pub]] = {}
    for pub in world.all_pubs():
        for rid in pub.rids:
            citers.setdefault(rid, []).append(pub)

    def cr_item(pub: Pub, year_shift: int = 0) -> dict:
        return {
            "DOI": pub.final_doi() or "",
            "title": [pub.title],
            "author": [{"family": s, "given": g} for s, g in pub.authors],
            "issued": {"date-parts": [[pub.year + year_shift]]},
            "type": "journal-article" if pub.kind == "journal_article" else pub.kind,
        }

    emitted_mag_doi: set[str] = set()
    for app in world.apps:
        cv_pubs = list(app.pubs)
        if app.green is not None:
            cv_pubs.append(app.green)
        for pub in cv_pubs:
            keywords = " ".join(select_keywords(pub.title, stopwords))
            surname = normalize_title(app.candidate[0])
            if pub.doi:
                if pub.doi not in emitted_mag_doi:
                    body = {"entities": [pub.mag_entity()] if pub.mag_id else []}
                    emit(SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi=pub.doi), body)
                    emitted_mag_doi.add(pub.doi)
                continue
            body = {"entities": [pub.mag_entity()] if pub.resolution == "mag_title" else []}
            emit(
                SourceQuery.make(
                    Source.MAG, QueryKind.BY_TITLE_YEAR,
                    title=normalize_title(pub.title), year=pub.year,
                ),
                body,
            )
            if pub.resolution == "mag_title":
                continue
            oa_results = []
            if pub.resolution == "oa":
                oa_results = [
                    {
                        "title": pub.title,
                        "year": pub.year,
                        "doi": pub.granted_doi,
                        "type": pub.kind,
                        "authors": [{"surname": s, "given": g} for s, g in pub.authors],
                        "id": f"oa-{pub.handle}",
                    }
                ]
            emit(
                SourceQuery.make(
                    Source.OA, QueryKind.BY_KEYWORDS,
                    keywords=keywords, surname=surname, year=pub.year,
                ),
                {"results": oa_results},
            )
            if pub.resolution == "oa":
                continue
            items = []
            if pub.resolution == "cr":
                items = [
                    cr_item(Pub(
                        handle="decoy",
                        title="nothing in common here at all",
                        year=1980,
                        kind="journal_article",
                        authors=[("Unrelated", "Zoe")],
                        granted_doi="10.52/decoy",
                    )),
                    {**cr_item(pub, year_shift=1), "DOI": pub.granted_doi},
                ]
            emit(
                SourceQuery.make(
                    Source.CR, QueryKind.BY_KEYWORDS, keywords=keywords, surname=surname
                ),
                {"message": {"items": items}},
            )

    for field_code in FIELDS:
        for pub in world.commission_pubs[field_code]:
            if pub.doi not in emitted_mag_doi:
                emit(
                    SourceQuery.make(Source.MAG, QueryKind.BY_DOI, doi=pub.doi),
                    {"entities": [pub.mag_entity()]},
                )
                emitted_mag_doi.add(pub.doi)

    for app in world.apps:
        page = [
            p.mag_entity()
            for p in sorted(
                (p for p in world.all_pubs() if p.au_ids.get(app.candidate) == app.candidate_au),
                key=lambda p: p.mag_id,
            )
        ]
        if any(p.mag_id is not None for p in app.pubs) or app.green is not None:
            emit(
                SourceQuery.make(
                    Source.MAG, QueryKind.PAPERS_BY_AUTHOR,
                    author_id=app.candidate_au, offset=0, count=50,
                ),
                {"entities": page},
            )

    # neighbor-stage fixtures for every potential target (found CV pubs,
    # extras, commission pubs, greens)
    targets: list[Pub] = []
    for app in world.apps:
        targets += [p for p in app.pubs if p.resolution != "none"]
        targets += app.extras
        if app.green is not None:
            targets.append(app.green)
    for field_code in FIELDS:
        targets += world.commission_pubs[field_code]

    foreign_dois: set[str] = set()
    seen: set[str] = set()
    for pub in targets:
        if pub.handle in seen:
            continue
        seen.add(pub.handle)
        if pub.mag_id is not None:
            if pub.rids:
                emit(
                    SourceQuery.make(
                        Source.MAG, QueryKind.REFERENCES_OF,
                        ids=",".join(str(r) for r in pub.rids),
                    ),
                    {"entities": [by_mag[r].mag_entity() for r in pub.rids]},
                )
            emit(
                SourceQuery.make(Source.MAG, QueryKind.CITATIONS_OF, id=pub.mag_id),
                {"entities": [c.mag_entity() for c in citers.get(pub.mag_id, [])]},
            )
        doi = pub.final_doi()
        if doi:
            emit(
                SourceQuery.make(Source.COCI, QueryKind.REFERENCES_OF, doi=doi),
                [{"citing": doi, "cited": cited} for cited in pub.coci_refs],
            )
            emit(
                SourceQuery.make(Source.COCI, QueryKind.CITATIONS_OF, doi=doi),
                [{"citing": citing, "cited": doi} for citing in pub.coci_cites],
            )
            foreign_dois.update(pub.coci_refs)
            foreign_dois.update(pub.coci_cites)

    for doi in sorted(foreign_dois):
        if doi in world.broken_dois:
            continue  # the deliberate Crossref gap -> flagged stub
        pub = by_doi.get(doi)
        if pub is not None:
            body = {"message": cr_item(pub)}
        else:
            body = {
                "message": {
                    "DOI": doi,
                    "title": [f"External work {doi.rsplit('/', 1)[-1]}"],
                    "author": [{"family": "External", "given": "Eva"}],
                    "issued": {"date-parts": [[2019]]},
                    "type": "journal-article",
                }
            }
        emit(SourceQuery.make(Source.CR, QueryKind.BY_DOI, doi=doi), body)

    return count


def generate(root: str | Path) -> dict:
    """Write the full bundle under ``root``; returns a small summary."""
    root = Path(root)
    world = build_world()
    write_inputs(world, root)
    n_fixtures = write_fixtures(world, root / "fixtures")
    summary = {
        "applications": len(world.apps),
        "fields": list(FIELDS),
        "fixtures": n_fixtures,
    }
    (root / "WORLD.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return summary


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="generate the bundled synthetic input world")
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    summary = generate(args.out)
    print(json.dumps(summary))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
