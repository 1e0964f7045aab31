"""Title normalization, similarity scoring, and the record-matching rules.

All functions here are pure and safe for unrestricted concurrent use.  The
matching cascade works on three scores per candidate result:

* ``a`` (0..3) - publication-date proximity: 3 for the same year, 2 for one
  year apart, 1 for two years apart, 0 beyond that;
* ``b`` (0..2) - author correspondence: 2 for a full surname + given-name
  match, 1 for surname + initial, 0 otherwise;
* ``c`` ([0, 1]) - normalized title similarity, 1 - distance / max length.

A result is accepted only when ``c > 0.8`` and both ``a >= 1`` and ``b >= 1``.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

from .model import PROVENANCE_RANK, PersonName, PublicationRecord

_TOKEN_RE = re.compile(r"[^\W\d_]+", re.UNICODE)


def normalize_title(title: str) -> str:
    """Collapse a title to lowercase ASCII letters and digits.

    Case folding runs first (so e.g. "ß" becomes "ss"), then compatibility
    decomposition; combining marks and every other non-alphanumeric character
    are dropped.  The output always matches ``[a-z0-9]*`` and the function is
    idempotent.
    """
    decomposed = unicodedata.normalize("NFKD", title.casefold())
    return "".join(ch for ch in decomposed if "a" <= ch <= "z" or "0" <= ch <= "9")


def levenshtein(a: str, b: str) -> int:
    """Edit distance with unit-cost insertions, deletions, substitutions."""
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) < len(b):
        a, b = b, a
    previous = list(range(len(b) + 1))
    for i, ch_a in enumerate(a, start=1):
        current = [i]
        for j, ch_b in enumerate(b, start=1):
            cost = 0 if ch_a == ch_b else 1
            current.append(min(previous[j] + 1, current[j - 1] + 1, previous[j - 1] + cost))
        previous = current
    return previous[-1]


def title_similarity(t1: str, t2: str) -> float:
    """1 - distance / max length over already-normalized titles.

    Both-empty inputs compare as identical (1.0).  Symmetric, range [0, 1].
    """
    if not t1 and not t2:
        return 1.0
    longest = max(len(t1), len(t2))
    return 1.0 - levenshtein(t1, t2) / longest


def score_date(orig_year: int, found_year: int) -> int:
    """Date-proximity points: 3 / 2 / 1 for gaps of 0 / 1 / 2 years, else 0."""
    gap = abs(orig_year - found_year)
    return {0: 3, 1: 2, 2: 1}.get(gap, 0)


def _norm_name_part(part: str) -> str:
    return normalize_title(part)


def score_author(orig: PersonName, found_authors: Sequence[PersonName]) -> int:
    """Author-correspondence points against a list of candidate authors.

    2 when some author matches on surname and full given name, 1 when some
    author matches on surname and given-name initial, 0 otherwise.  Name parts
    are compared after accent stripping and case folding; empty given names
    never attest a match, so surname-only records score 0.
    """
    surname = _norm_name_part(orig.surname)
    given = _norm_name_part(orig.given)
    best = 0
    for author in found_authors:
        if _norm_name_part(author.surname) != surname:
            continue
        other_given = _norm_name_part(author.given)
        if given and other_given and given == other_given:
            return 2
        if given and other_given and given[0] == other_given[0]:
            best = max(best, 1)
    return best


def select_keywords(title: str, stopwords: set[str]) -> list[str]:
    """First six lowercase title words that are not stopwords.

    Words are maximal runs of letters (hyphens, digits, and punctuation all
    act as separators), kept in their original order.
    """
    out = []
    for token in _TOKEN_RE.findall(title.lower()):
        if token in stopwords:
            continue
        out.append(token)
        if len(out) == 6:
            break
    return out


def match_by_doi(orig_doi: str, found_doi: str) -> bool:
    """Exact correspondence between DOIs, which are case-insensitive."""
    return orig_doi.lower() == found_doi.lower()


def match_by_title_year(
    orig: PublicationRecord,
    found: PublicationRecord,
    duplicate_surname_in_scope: bool = False,
) -> bool:
    """Title-and-year correspondence with a two-year margin.

    Normalized titles must be equal and the years within two of each other.
    When two or more authors in scope share a surname the caller sets
    ``duplicate_surname_in_scope`` and a full name + surname correspondence
    between some pair of authors is additionally required.
    """
    if not orig.norm_title or orig.norm_title != found.norm_title:
        return False
    if orig.year is None or found.year is None:
        return False
    if abs(orig.year - found.year) > 2:
        return False
    if duplicate_surname_in_scope:
        return any(score_author(a, found.authors) == 2 for a in orig.authors)
    return True


@dataclass(frozen=True)
class MatchScores:
    """The (a, b, c) score triple for one candidate result."""

    a: int
    b: int
    c: float

    def __post_init__(self) -> None:
        if not 0 <= self.a <= 3:
            raise ValueError(f"score a out of range: {self.a}")
        if not 0 <= self.b <= 2:
            raise ValueError(f"score b out of range: {self.b}")
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"score c out of range: {self.c}")

    @property
    def accepted(self) -> bool:
        return self.c > 0.8 and self.a >= 1 and self.b >= 1


def score_result(orig: PublicationRecord, found: PublicationRecord) -> MatchScores:
    a = 0
    if orig.year is not None and found.year is not None:
        a = score_date(orig.year, found.year)
    b = max((score_author(author, found.authors) for author in orig.authors), default=0)
    c = title_similarity(orig.norm_title, found.norm_title)
    return MatchScores(a=a, b=b, c=c)


def rank_search_results(
    orig: PublicationRecord,
    results: Sequence[PublicationRecord],
) -> PublicationRecord | None:
    """Rank candidate results by title similarity and gate the best one.

    ``results`` is expected to already be the first (at most four) rows in
    source order; ties on the c score keep that order.  The top result is
    accepted only when its scores pass ``c > 0.8 and a >= 1 and b >= 1``.
    """
    if not results:
        return None
    scored = [(score_result(orig, rec), idx, rec) for idx, rec in enumerate(results)]
    scored.sort(key=lambda item: (-item[0].c, item[1]))
    best_scores, _, best = scored[0]
    return best if best_scores.accepted else None


def _dedupe_key_groups(records: Sequence[PublicationRecord]) -> list[list[int]]:
    """Group record indexes via union-find over shared DOI or (title, year)."""
    parent = list(range(len(records)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(i: int, j: int) -> None:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    by_doi: dict[str, int] = {}
    by_title_year: dict[tuple[str, int | None], int] = {}
    for idx, rec in enumerate(records):
        if rec.doi:
            doi = rec.doi.lower()
            if doi in by_doi:
                union(idx, by_doi[doi])
            else:
                by_doi[doi] = idx
        if rec.norm_title:
            key = (rec.norm_title, rec.year)
            if key in by_title_year:
                union(idx, by_title_year[key])
            else:
                by_title_year[key] = idx

    groups: dict[int, list[int]] = {}
    for idx in range(len(records)):
        groups.setdefault(find(idx), []).append(idx)
    return [groups[root] for root in sorted(groups)]


def dedupe_records(records: Sequence[PublicationRecord]) -> list[PublicationRecord]:
    """Disambiguate records by DOI when present, else by title and year.

    Duplicates merge their identifier and reference sets; the survivor keeps
    the strongest provenance (cv > indicator_list > commission > extras >
    neighbor) and the position of its group's earliest member.  Idempotent;
    the survivor count does not depend on input order.
    """
    survivors, _ = dedupe_records_with_map(records)
    return survivors


def dedupe_records_with_map(
    records: Sequence[PublicationRecord],
) -> tuple[list[PublicationRecord], dict[str, str]]:
    """Like :func:`dedupe_records` but also maps each input local id to the
    local id of its surviving record."""
    from .model import merge_record  # deferred: shares the corpus merge rules
    import copy

    survivors: list[PublicationRecord] = []
    id_map: dict[str, str] = {}
    for group in _dedupe_key_groups(records):
        ranked = sorted(
            group,
            key=lambda idx: (-PROVENANCE_RANK[records[idx].provenance], idx),
        )
        base = copy.deepcopy(records[ranked[0]])
        for idx in ranked[1:]:
            merge_record(base, records[idx])
        for idx in group:
            id_map[records[idx].local_id] = base.local_id
        survivors.append((group[0], base))
    survivors.sort(key=lambda pair: pair[0])
    return [rec for _, rec in survivors], id_map


_DEFAULT_STOPWORDS: set[str] | None = None


def load_stopwords(path: str | Path | None = None) -> set[str]:
    """The bundled English stopword list, or one read from ``path``.

    The file format is one lowercase token per line; blank lines and lines
    starting with ``#`` are ignored.
    """
    global _DEFAULT_STOPWORDS
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        return _parse_stopwords(text)
    if _DEFAULT_STOPWORDS is None:
        text = resources.files("citeweave").joinpath("data/stopwords.txt").read_text("utf-8")
        _DEFAULT_STOPWORDS = _parse_stopwords(text)
    return set(_DEFAULT_STOPWORDS)


def _parse_stopwords(text: str) -> set[str]:
    out = set()
    for line in text.splitlines():
        word = line.strip()
        if word and not word.startswith("#"):
            out.add(word.lower())
    return out
