"""Path-by-link filter matrix R with transpose, range, domain, robustness.

Rows are links (tree edges), columns are paths between endpoint pairs;
entry 1 means the path traverses the link. Matrices at this scale are a
handful of rows and columns, so storage is a plain dense list of lists.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .errors import ValidationError
from .phylo import PhyloTree


@dataclass
class IncidenceMatrix:
    """0/1 relation between links (rows) and paths (columns)."""

    link_labels: list[str]
    path_labels: list[str]
    entries: list[list[int]]

    def __post_init__(self) -> None:
        if len(self.entries) != len(self.link_labels):
            raise ValidationError(
                f"{len(self.entries)} rows for {len(self.link_labels)} link labels"
            )
        for label, row in zip(self.link_labels, self.entries):
            if len(row) != len(self.path_labels):
                raise ValidationError(
                    f"row {label!r} has {len(row)} entries for "
                    f"{len(self.path_labels)} path labels"
                )
            for value in row:
                if value not in (0, 1):
                    raise ValidationError(f"row {label!r} holds non-0/1 entry {value!r}")
        if len(set(self.link_labels)) != len(self.link_labels):
            raise ValidationError("duplicate link labels")
        if len(set(self.path_labels)) != len(self.path_labels):
            raise ValidationError("duplicate path labels")

    def entry(self, link: str, path: str) -> int:
        try:
            i = self.link_labels.index(link)
        except ValueError:
            raise ValidationError(f"unknown link label {link!r}") from None
        try:
            j = self.path_labels.index(path)
        except ValueError:
            raise ValidationError(f"unknown path label {path!r}") from None
        return self.entries[i][j]

    def column(self, path: str) -> list[int]:
        try:
            j = self.path_labels.index(path)
        except ValueError:
            raise ValidationError(f"unknown path label {path!r}") from None
        return [row[j] for row in self.entries]


def build_incidence(tree: PhyloTree, endpoints) -> IncidenceMatrix:
    """Build R from a tree: one row per tree edge, one column per
    endpoint pair, 1 where the pair's unique path uses the edge.

    A pair (x, x) has an empty path and yields an all-zero column.
    """
    link_labels = [edge.label for edge in tree.edges]
    path_labels = [f"P{i + 1}" for i in range(len(endpoints))]
    columns = []
    for a, b in endpoints:
        used = {edge.label for edge in tree.path_edges(a, b)}
        columns.append([1 if label in used else 0 for label in link_labels])
    entries = [[col[i] for col in columns] for i in range(len(link_labels))]
    return IncidenceMatrix(link_labels, path_labels, entries)


def incidence_from_paths(link_labels, paths) -> IncidenceMatrix:
    """Build R from an explicit path set: mapping of path label to the
    link labels that path uses."""
    links = list(link_labels)
    link_set = set(links)
    path_items = list(paths.items())
    for label, used in path_items:
        unknown = [l for l in used if l not in link_set]
        if unknown:
            raise ValidationError(
                f"path {label!r} references unknown link(s) {', '.join(map(repr, unknown))}"
            )
    entries = [
        [1 if link in set(used) else 0 for _, used in path_items]
        for link in links
    ]
    return IncidenceMatrix(links, [label for label, _ in path_items], entries)


def transpose(m: IncidenceMatrix) -> IncidenceMatrix:
    """Exchange rows with columns, and link labels with path labels."""
    flipped = [[m.entries[i][j] for i in range(len(m.link_labels))]
               for j in range(len(m.path_labels))]
    return IncidenceMatrix(list(m.path_labels), list(m.link_labels), flipped)


def range_of(m: IncidenceMatrix) -> set[str]:
    """Path labels that appear in at least one (path, link) pair."""
    return {
        path
        for j, path in enumerate(m.path_labels)
        if any(row[j] for row in m.entries)
    }


def domain_of(m: IncidenceMatrix) -> set[str]:
    """Link labels that appear in at least one (path, link) pair; links
    outside the domain are the unused ones."""
    return {
        link
        for link, row in zip(m.link_labels, m.entries)
        if any(row)
    }


def robustness(m: IncidenceMatrix, link: str, path: str) -> int:
    """1 if the link serves the path, else 0."""
    return m.entry(link, path)


def write_incidence_csv(m: IncidenceMatrix, path, corner: str = "R") -> None:
    """Write the matrix with a path-label header and one labeled row per
    link. Pass a transposed matrix (corner "R^T") for the inverse layout."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([corner, *m.path_labels])
        for label, row in zip(m.link_labels, m.entries):
            writer.writerow([label, *row])


def read_paths_json(data) -> tuple[list[str], dict[str, list[str]]]:
    """Validate a parsed explicit-path-set document:
    {"links": [...], "paths": {"P1": ["L1", ...], ...}}."""
    if not isinstance(data, dict) or "links" not in data or "paths" not in data:
        raise ValidationError('path set document needs "links" and "paths" keys')
    links = data["links"]
    paths = data["paths"]
    if not isinstance(links, list) or not all(isinstance(l, str) for l in links):
        raise ValidationError('"links" must be a list of labels')
    if not isinstance(paths, dict) or not all(
        isinstance(k, str) and isinstance(v, list) for k, v in paths.items()
    ):
        raise ValidationError('"paths" must map path labels to link-label lists')
    return links, paths
