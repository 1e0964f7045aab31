"""Per-application candidate/commission citation graphs and overlap metrics.

Each application gets a directed graph whose nodes are publications classed
as ``candidate`` (authored by the candidate), ``commission`` (authored by a
committee member), ``coauthored`` (both), or ``other`` (anything else that
cites or is cited by the first three).  A coauthored node belongs to both
the candidate side and the commission side; edge metrics between the sides
skip only the edges whose two endpoints are both coauthored.

The eleven open-data features, in the fixed column order used everywhere
(CSV outputs, feature masks), are ``FEATURE_ORDER`` below: the six
citation-network counts first, then the five production counts, then the
three externally supplied nd metrics.
"""

from __future__ import annotations

import xml.sax.saxutils as saxutils
from dataclasses import dataclass
from enum import Enum

from .matching import score_author
from .model import (
    FLAG_UNRESOLVED,
    Application,
    Commission,
    Corpus,
    Kind,
    PersonName,
    Provenance,
    PublicationRecord,
)

FEATURE_ORDER: tuple[str, ...] = (
    "cand_comm",
    "comm_cand",
    "bc",
    "cc",
    "cand_other",
    "other_cand",
    "cand",
    "co_au",
    "books",
    "articles",
    "other_pubbs",
    "nd_m1",
    "nd_m2",
    "nd_m3",
)

N_FEATURES = len(FEATURE_ORDER)


class NodeClass(str, Enum):
    CANDIDATE = "candidate"
    COMMISSION = "commission"
    COAUTHORED = "coauthored"
    OTHER = "other"


_NODE_COLORS = {
    NodeClass.CANDIDATE: "blue",
    NodeClass.COMMISSION: "red",
    NodeClass.COAUTHORED: "green",
    NodeClass.OTHER: "gray",
}


@dataclass
class CitationGraph:
    """Class-labeled directed citation graph restricted to one application."""

    nodes: dict[str, NodeClass]
    edges: set[tuple[str, str]]

    def __post_init__(self) -> None:
        for citing, cited in self.edges:
            if citing == cited:
                raise ValueError(f"self-loop on {citing}")
            if citing not in self.nodes or cited not in self.nodes:
                raise ValueError(f"edge endpoint missing from nodes: ({citing}, {cited})")

    def candidate_side(self) -> set[str]:
        return {
            n for n, c in self.nodes.items() if c in (NodeClass.CANDIDATE, NodeClass.COAUTHORED)
        }

    def commission_side(self) -> set[str]:
        return {
            n for n, c in self.nodes.items() if c in (NodeClass.COMMISSION, NodeClass.COAUTHORED)
        }

    def others(self) -> set[str]:
        return {n for n, c in self.nodes.items() if c is NodeClass.OTHER}


def authored_by(person: PersonName, record: PublicationRecord) -> bool:
    """Surname plus at-least-initial correspondence against a record's authors."""
    return score_author(person, record.authors) >= 1


def build_graph(app: Application, commission: Commission, corpus: Corpus) -> CitationGraph:
    """Build the application's citation graph from the harvested corpus.

    Candidate-side nodes are the application's resolved CV publications plus
    author-expansion extras authored by the candidate; commission-side nodes
    are the commission's resolved publications.  A node in both sets, or in
    one set with an author from the opposite side, is classed coauthored.
    Every other corpus record with a citation edge touching a side node joins
    as class ``other``; edges are the corpus pairs among included nodes.
    """
    if commission.field != app.field or commission.term != app.term:
        raise ValueError(
            f"commission ({commission.field}, term {commission.term}) does not match "
            f"application ({app.field}, term {app.term})"
        )

    def resolved(lid: str) -> bool:
        rec = corpus.publications.get(lid)
        return rec is not None and FLAG_UNRESOLVED not in rec.flags

    cand_set = {lid for lid in app.cv_publications if resolved(lid)}
    for lid, rec in corpus.publications.items():
        if (
            rec.provenance is Provenance.EXTRA_FROM_AUTHOR_EXPANSION
            and authored_by(app.candidate, rec)
        ):
            cand_set.add(lid)
    comm_set = {lid for lid in commission.publications if resolved(lid)}

    nodes: dict[str, NodeClass] = {}
    for lid in cand_set | comm_set:
        rec = corpus.publications[lid]
        by_member = any(authored_by(member, rec) for member in commission.members)
        by_candidate = authored_by(app.candidate, rec)
        if (lid in cand_set and lid in comm_set) or (lid in cand_set and by_member) or (
            lid in comm_set and by_candidate
        ):
            nodes[lid] = NodeClass.COAUTHORED
        elif lid in cand_set:
            nodes[lid] = NodeClass.CANDIDATE
        else:
            nodes[lid] = NodeClass.COMMISSION

    side_ids = set(nodes)
    for citing, cited in corpus.citations:
        if citing in side_ids and cited not in side_ids:
            nodes.setdefault(cited, NodeClass.OTHER)
        elif cited in side_ids and citing not in side_ids:
            nodes.setdefault(citing, NodeClass.OTHER)

    edges = {
        (citing, cited)
        for citing, cited in corpus.citations
        if citing in nodes and cited in nodes and citing != cited
    }
    return CitationGraph(nodes=nodes, edges=edges)


def basic_metrics(app: Application, graph: CitationGraph, corpus: Corpus) -> dict[str, int]:
    """Production counts over the candidate's publications in the graph."""
    cand_nodes = graph.candidate_side()
    books = articles = other_pubbs = 0
    for lid in cand_nodes:
        kind = corpus.publications[lid].kind
        if kind is Kind.BOOK:
            books += 1
        elif kind is Kind.JOURNAL_ARTICLE:
            articles += 1
        else:
            other_pubbs += 1
    co_au = sum(1 for c in graph.nodes.values() if c is NodeClass.COAUTHORED)
    return {
        "cand": len(cand_nodes),
        "books": books,
        "articles": articles,
        "other_pubbs": other_pubbs,
        "co_au": co_au,
    }


def citation_metrics(graph: CitationGraph) -> dict[str, int]:
    """The six citation-network counts between the candidate and commission.

    ``cand_comm`` / ``comm_cand`` count directed edges from one side to the
    other, skipping edges whose endpoints are both coauthored (those are
    internal to both sides at once).  ``bc`` counts distinct nodes cited by
    at least one candidate-side and at least one commission-side node;
    ``cc`` counts distinct nodes citing both sides.  ``cand_other`` /
    ``other_cand`` count edges between candidate-side and other-class nodes.
    """
    cls = graph.nodes
    cs = graph.candidate_side()
    ms = graph.commission_side()
    others = graph.others()

    cand_comm = comm_cand = cand_other = other_cand = 0
    cited_by_cs: set[str] = set()
    cited_by_ms: set[str] = set()
    citing_cs: set[str] = set()
    citing_ms: set[str] = set()
    for citing, cited in graph.edges:
        both_green = cls[citing] is NodeClass.COAUTHORED and cls[cited] is NodeClass.COAUTHORED
        if citing in cs and cited in ms and not both_green:
            cand_comm += 1
        if citing in ms and cited in cs and not both_green:
            comm_cand += 1
        if citing in cs and cited in others:
            cand_other += 1
        if citing in others and cited in cs:
            other_cand += 1
        if citing in cs:
            cited_by_cs.add(cited)
        if citing in ms:
            cited_by_ms.add(cited)
        if cited in cs:
            citing_cs.add(citing)
        if cited in ms:
            citing_ms.add(citing)

    return {
        "cand_comm": cand_comm,
        "comm_cand": comm_cand,
        "bc": len(cited_by_cs & cited_by_ms),
        "cc": len(citing_cs & citing_ms),
        "cand_other": cand_other,
        "other_cand": other_cand,
    }


def venn_summary(app: Application, graph: CitationGraph, corpus: Corpus) -> dict[str, int]:
    """Set sizes and the four directed citation totals between the sets."""
    basic = basic_metrics(app, graph, corpus)
    cites = citation_metrics(graph)
    return {
        "cand": basic["cand"],
        "commission": len(graph.commission_side()),
        "co_au": basic["co_au"],
        "cand_comm": cites["cand_comm"],
        "comm_cand": cites["comm_cand"],
        "cand_other": cites["cand_other"],
        "other_cand": cites["other_cand"],
    }


def connector_counts(graph: CitationGraph) -> dict[str, int]:
    """Per gray node: how many side publications it cites plus how many cite it.

    Drives the shading attribute on exported gray nodes; a node that both
    cites and is cited by side publications counts each direction.
    """
    sides = graph.candidate_side() | graph.commission_side()
    out: dict[str, int] = {n: 0 for n in graph.others()}
    for citing, cited in graph.edges:
        if citing in out and cited in sides:
            out[citing] += 1
        if cited in out and citing in sides:
            out[cited] += 1
    return out


def export_graph(graph: CitationGraph, fmt: str) -> str:
    """Serialize the graph as ``dot`` or ``graphml`` text, deterministically.

    Nodes are sorted by id and carry their class color (blue, red, green,
    gray); gray nodes additionally carry their connector count.
    """
    if fmt == "dot":
        return _export_dot(graph)
    if fmt == "graphml":
        return _export_graphml(graph)
    raise ValueError(f"unknown graph format: {fmt}")


def _export_dot(graph: CitationGraph) -> str:
    connectors = connector_counts(graph)
    lines = ["digraph citations {"]
    for node in sorted(graph.nodes):
        cls = graph.nodes[node]
        attrs = [f'color="{_NODE_COLORS[cls]}"', f'class="{cls.value}"']
        if cls is NodeClass.OTHER:
            attrs.append(f"connectors={connectors[node]}")
        lines.append(f'  "{node}" [{", ".join(attrs)}];')
    for citing, cited in sorted(graph.edges):
        lines.append(f'  "{citing}" -> "{cited}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _export_graphml(graph: CitationGraph) -> str:
    connectors = connector_counts(graph)
    esc = saxutils.escape
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns">',
        '  <key id="d0" for="node" attr.name="color" attr.type="string"/>',
        '  <key id="d1" for="node" attr.name="class" attr.type="string"/>',
        '  <key id="d2" for="node" attr.name="connectors" attr.type="int"/>',
        '  <graph id="citations" edgedefault="directed">',
    ]
    for node in sorted(graph.nodes):
        cls = graph.nodes[node]
        lines.append(f'    <node id="{esc(node)}">')
        lines.append(f'      <data key="d0">{_NODE_COLORS[cls]}</data>')
        lines.append(f'      <data key="d1">{cls.value}</data>')
        if cls is NodeClass.OTHER:
            lines.append(f'      <data key="d2">{connectors[node]}</data>')
        lines.append("    </node>")
    for idx, (citing, cited) in enumerate(sorted(graph.edges)):
        lines.append(f'    <edge id="e{idx}" source="{esc(citing)}" target="{esc(cited)}"/>')
    lines.append("  </graph>")
    lines.append("</graphml>")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MetricsVector:
    """The 14 features for one application, in FEATURE_ORDER."""

    cand_comm: int
    comm_cand: int
    bc: int
    cc: int
    cand_other: int
    other_cand: int
    cand: int
    co_au: int
    books: int
    articles: int
    other_pubbs: int
    nd_m1: int
    nd_m2: int
    nd_m3: int

    def __post_init__(self) -> None:
        for name in FEATURE_ORDER:
            if getattr(self, name) < 0:
                raise ValueError(f"negative metric {name}")
        if self.cand != self.books + self.articles + self.other_pubbs:
            raise ValueError("cand must equal books + articles + other_pubbs")
        if self.co_au > self.cand:
            raise ValueError("co_au cannot exceed cand")

    def as_row(self) -> list[int]:
        return [getattr(self, name) for name in FEATURE_ORDER]


def metrics_vector(app: Application, commission: Commission, corpus: Corpus) -> MetricsVector:
    graph = build_graph(app, commission, corpus)
    values = {**basic_metrics(app, graph, corpus), **citation_metrics(graph)}
    return MetricsVector(
        nd_m1=app.nd_m1,
        nd_m2=app.nd_m2,
        nd_m3=app.nd_m3,
        **values,
    )


METRICS_CSV_HEADER = [
    "app_id",
    "field",
    "role",
    "term",
    "outcome",
    "coverage_section",
    *FEATURE_ORDER,
]


def metrics_rows(corpus: Corpus) -> list[list]:
    """One metrics.csv row per application, sorted by app id.

    Requires every application to have a commission for its (field, term)
    and an assigned coverage section.
    """
    rows = []
    for app in sorted(corpus.applications, key=lambda a: a.app_id):
        commission = corpus.commission_for(app.field, app.term)
        if commission is None:
            raise ValueError(f"no commission for ({app.field}, term {app.term})")
        if app.coverage_section.value == "unassigned":
            raise ValueError(f"coverage section unassigned for {app.app_id}; run sections first")
        vector = metrics_vector(app, commission, corpus)
        rows.append(
            [
                app.app_id,
                app.field,
                app.role.value,
                app.term,
                app.outcome.value,
                app.coverage_section.value,
                *vector.as_row(),
            ]
        )
    return rows
