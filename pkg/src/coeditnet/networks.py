"""Network projections of a co-edit store and rolling-window analytics.

Developers are identified by their lower-cased author email; every timestamp
used for windowing is the author date (UTC) of the editing commit.
"""

from __future__ import annotations

import csv
import io
import json
from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from itertools import combinations
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .coedit import apportion
from .errors import InvalidWindow, IoFailure, PathNotFound
from .records import BLOCK, DELETION, CoEditRecord, CommitRecord
from .store import JoinedCoEdit, Store

DAY = 86400

COEDIT = "coedit"
BIPARTITE = "bipartite"
DAG = "dag"

CSV_HEADERS = {
    "temporal": ("source", "target", "timestamp", "weight"),
    COEDIT: ("source", "target", "weight"),
    BIPARTITE: ("developer", "file", "weight"),
    DAG: ("pre_commit", "post_commit"),
}

ROLLING_COLUMNS = ("developers", "unique_edges", "mean_out_degree", "degree_centralization")
OWNERSHIP_COLUMNS = ("own_levenshtein", "foreign_levenshtein", "own_fraction", "coedit_count")
DELTA_COLUMNS = ("m_f", "m_l", "delta")


@dataclass(frozen=True)
class TemporalEdge:
    source: str
    target: str
    timestamp: int
    weight: float


@dataclass
class AggregatedGraph:
    directed: bool
    nodes: list[str]
    edges: list[tuple[str, str, float]]
    kind: str = COEDIT

    def weight(self, u: str, v: str) -> float:
        for a, b, w in self.edges:
            if (a, b) == (u, v):
                return w
        return 0

    def pairs(self) -> set[tuple[str, str]]:
        return {(u, v) for u, v, _ in self.edges}

    def in_degree(self) -> dict[str, int]:
        degree = {n: 0 for n in self.nodes}
        for _, v, _ in self.edges:
            degree[v] += 1
        return degree

    def out_degree(self) -> dict[str, int]:
        degree = {n: 0 for n in self.nodes}
        for u, _, _ in self.edges:
            degree[u] += 1
        return degree

    def roots(self) -> list[str]:
        return [n for n, d in self.in_degree().items() if d == 0]

    def leaves(self) -> list[str]:
        return [n for n, d in self.out_degree().items() if d == 0]

    def intermediaries(self) -> list[str]:
        ins, outs = self.in_degree(), self.out_degree()
        return [n for n in self.nodes if ins[n] > 0 and outs[n] > 0]

    def is_acyclic(self) -> bool:
        indeg = self.in_degree()
        succ = defaultdict(list)
        for u, v, _ in self.edges:
            succ[u].append(v)
        ready = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while ready:
            node = ready.pop()
            seen += 1
            for nxt in succ[node]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
        return seen == len(self.nodes)


@dataclass
class WindowPoint:
    window_start: int
    window_end: int
    values: dict


@dataclass
class WindowSeries:
    window_days: int
    step_days: int
    columns: tuple[str, ...]
    points: list[WindowPoint] = field(default_factory=list)

    def column(self, name: str) -> list:
        return [p.values[name] for p in self.points]


def developer(commit: CommitRecord) -> str:
    return commit.author_email.lower()


def apportioned_levenshtein(records: Iterable[CoEditRecord]) -> dict[int, int]:
    """Per-row share of Levenshtein distance, keyed by row id.

    Rows of a multi-origin block event split the block's distance in
    proportion to ``attributed_line_count``; the shares sum to the block
    distance exactly. Rows without a distance (deletions) are absent.
    """
    events: dict[tuple, list[CoEditRecord]] = defaultdict(list)
    shares: dict[int, int] = {}
    for record in records:
        if record.levenshtein_dist is None:
            continue
        if record.granularity == BLOCK and record.pre_commit is not None:
            events[record.event_key()].append(record)
        else:
            shares[record.id] = record.levenshtein_dist
    for rows in events.values():
        split = apportion(rows[0].levenshtein_dist, [r.attributed_line_count for r in rows])
        for row, share in zip(rows, split):
            shares[row.id] = share
    return shares


def _coedit_rows(store: Store) -> list[JoinedCoEdit]:
    """Rows that are co-edits: the edited code has a known original commit."""
    return [j for j in store.query_coedits() if j.pre is not None]


def coedit_edges(store: Store, weighting: str = "count", include_self: bool = False,
                 include_deletions: bool = True) -> list[TemporalEdge]:
    """One time-stamped edge (editor, original author) per qualifying co-edit row."""
    if weighting not in ("count", "levenshtein"):
        raise ValueError(f"unknown weighting {weighting!r}")
    rows = _coedit_rows(store)
    shares = apportioned_levenshtein(j.record for j in rows) if weighting == "levenshtein" else {}
    edges = []
    for joined in rows:
        record = joined.record
        source, target = developer(joined.post), developer(joined.pre)
        if source == target and not include_self:
            continue
        if weighting == "count":
            if record.kind == DELETION and not include_deletions:
                continue
            weight = 1
        else:
            weight = shares.get(record.id, 0)
            if weight <= 0:
                continue
        edges.append(TemporalEdge(source, target, joined.post.author_date, weight))
    return edges


def _check_window(window: Optional[tuple[int, int]]) -> None:
    if window is not None and window[1] <= window[0]:
        raise InvalidWindow(f"window end {window[1]} must be after start {window[0]}")


def _in_window(ts: int, window: Optional[tuple[int, int]]) -> bool:
    return window is None or window[0] <= ts < window[1]


def aggregate(edges: Iterable[TemporalEdge], window: Optional[tuple[int, int]] = None) -> AggregatedGraph:
    """Sum edge weights per (source, target) over ``[start, end)``, or all time."""
    _check_window(window)
    totals: dict[tuple[str, str], float] = defaultdict(int)
    for edge in edges:
        if _in_window(edge.timestamp, window):
            totals[(edge.source, edge.target)] += edge.weight
    nodes = sorted({n for pair in totals for n in pair})
    return AggregatedGraph(True, nodes, [(u, v, w) for (u, v), w in sorted(totals.items())], COEDIT)


def bipartite_edges(store: Store, window: Optional[tuple[int, int]] = None) -> AggregatedGraph:
    """Developer -> file links; weight counts the developer's commits touching the file."""
    _check_window(window)
    commits = {c.hash: c for c in store.commits()}
    seen: dict[tuple[str, str], set] = defaultdict(set)
    for mod in store.modifications():
        commit = commits[mod.commit_hash]
        if _in_window(commit.author_date, window):
            seen[(developer(commit), mod.path)].add(commit.hash)
    developers = sorted({d for d, _ in seen})
    files = sorted({f for _, f in seen})
    edges = [(d, f, len(hashes)) for (d, f), hashes in sorted(seen.items())]
    return AggregatedGraph(True, developers + files, edges, BIPARTITE)


def commit_dag(store: Store, path: str) -> AggregatedGraph:
    """Commits touching ``path``, linked origin commit -> editing commit."""
    commits = {c.hash: c for c in store.commits()}
    touching = {m.commit_hash for m in store.modifications() if path in (m.old_path, m.new_path)}
    if not touching:
        raise PathNotFound(f"{path} is not modified by any mined commit")
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for record in store.coedits():
        if record.pre_commit is None or path not in (record.mod_new_path, record.mod_old_path):
            continue
        counts[(record.pre_commit, record.post_commit)] += 1
    nodes = touching | {n for pair in counts for n in pair}

    def order(sha: str) -> tuple:
        commit = commits.get(sha)
        return (commit.author_date if commit else 0, sha)

    edges = [(u, v, w) for (u, v), w in sorted(counts.items(), key=lambda kv: (order(kv[0][0]), order(kv[0][1])))]
    return AggregatedGraph(True, sorted(nodes, key=order), edges, DAG)


# -- rolling windows ------------------------------------------------------


def midnight(ts: int) -> int:
    return ts - ts % DAY


def window_bounds(first_ts: int, last_ts: int, window_days: int, step_days: int) -> list[tuple[int, int]]:
    """Half-open windows starting at the first timestamp's UTC midnight.

    Windows advance by ``step_days`` until a window would start after
    ``last_ts``.
    """
    if window_days <= 0 or step_days <= 0:
        raise InvalidWindow("window and step must be positive")
    bounds = []
    start = midnight(first_ts)
    while start <= last_ts:
        bounds.append((start, start + window_days * DAY))
        start += step_days * DAY
    return bounds


def _store_windows(store: Store, window_days: int, step_days: int) -> list[tuple[int, int]]:
    dates = [c.author_date for c in store.commits()]
    if not dates:
        if window_days <= 0 or step_days <= 0:
            raise InvalidWindow("window and step must be positive")
        return []
    return window_bounds(min(dates), max(dates), window_days, step_days)


class _TimeIndex:
    """Items sorted by timestamp with half-open range lookup."""

    def __init__(self, items: Iterable[tuple[int, object]]):
        ordered = sorted(items, key=lambda item: item[0])
        self.times = [t for t, _ in ordered]
        self.items = [x for _, x in ordered]

    def between(self, start: int, end: int) -> list:
        return self.items[bisect_left(self.times, start):bisect_left(self.times, end)]


def degree_centralization(pairs: Iterable[tuple[str, str]]) -> float:
    """Freeman degree centralization of the undirected simple collapse of ``pairs``."""
    neighbours: dict[str, set] = defaultdict(set)
    for u, v in pairs:
        if u != v:
            neighbours[u].add(v)
            neighbours[v].add(u)
    n = len(neighbours)
    if n < 3:
        return 0.0
    degrees = [len(s) for s in neighbours.values()]
    top = max(degrees)
    return sum(top - d for d in degrees) / ((n - 1) * (n - 2))


def _cross_pairs(rows: Iterable[JoinedCoEdit]) -> set[tuple[str, str]]:
    pairs = set()
    for joined in rows:
        source, target = developer(joined.post), developer(joined.pre)
        if source != target:
            pairs.add((source, target))
    return pairs


def rolling_metrics(store: Store, window_days: int = 365, step_days: int = 30) -> WindowSeries:
    index = _TimeIndex((j.post.author_date, j) for j in _coedit_rows(store))
    series = WindowSeries(window_days, step_days, ROLLING_COLUMNS)
    for start, end in _store_windows(store, window_days, step_days):
        pairs = _cross_pairs(index.between(start, end))
        nodes = {n for pair in pairs for n in pair}
        series.points.append(WindowPoint(start, end, {
            "developers": len(nodes),
            "unique_edges": len(pairs),
            "mean_out_degree": len(pairs) / len(nodes) if nodes else 0.0,
            "degree_centralization": degree_centralization(pairs),
        }))
    return series


def ownership_series(store: Store, window_days: int = 90, step_days: int = 30) -> WindowSeries:
    """Levenshtein effort spent on the editor's own code vs. other people's code."""
    rows = _coedit_rows(store)
    shares = apportioned_levenshtein(j.record for j in rows)
    index = _TimeIndex((j.post.author_date, j) for j in rows)
    series = WindowSeries(window_days, step_days, OWNERSHIP_COLUMNS)
    for start, end in _store_windows(store, window_days, step_days):
        own = foreign = count = 0
        for joined in index.between(start, end):
            count += 1
            share = shares.get(joined.record.id)
            if share is None:
                continue
            if developer(joined.post) == developer(joined.pre):
                own += share
            else:
                foreign += share
        total = own + foreign
        series.points.append(WindowPoint(start, end, {
            "own_levenshtein": own,
            "foreign_levenshtein": foreign,
            "own_fraction": own / total if total else None,
            "coedit_count": count,
        }))
    return series


def file_lineages(store: Store) -> dict[str, str]:
    """Map every path to a representative of its rename lineage."""
    parent: dict[str, str] = {}

    def find(path: str) -> str:
        parent.setdefault(path, path)
        while parent[path] != path:
            parent[path] = parent[parent[path]]
            path = parent[path]
        return path

    for mod in store.modifications():
        for path in (mod.old_path, mod.new_path):
            if path is not None:
                find(path)
        if mod.old_path is not None and mod.new_path is not None and mod.old_path != mod.new_path:
            a, b = find(mod.old_path), find(mod.new_path)
            if a != b:
                parent[max(a, b)] = min(a, b)
    return {path: find(path) for path in list(parent)}


def coauthorship_pairs(touches: Iterable[tuple[str, str]]) -> set[frozenset]:
    """Undirected developer pairs sharing a file, from (developer, file) touches."""
    by_file: dict[str, set] = defaultdict(set)
    for dev, file_id in touches:
        by_file[file_id].add(dev)
    pairs = set()
    for devs in by_file.values():
        pairs.update(frozenset(p) for p in combinations(sorted(devs), 2))
    return pairs


def delta_series(store: Store, window_days: int = 90, step_days: int = 30) -> WindowSeries:
    """File-based co-authorship links vs. line-based co-editing links per window.

    Files are identified by rename lineage, so a rename does not split a
    file's history into two files.
    """
    commits = {c.hash: c for c in store.commits()}
    lineage = file_lineages(store)
    touches = _TimeIndex(
        (commits[m.commit_hash].author_date, (developer(commits[m.commit_hash]), lineage[m.path]))
        for m in store.modifications()
    )
    coedits = _TimeIndex((j.post.author_date, j) for j in _coedit_rows(store))
    series = WindowSeries(window_days, step_days, DELTA_COLUMNS)
    for start, end in _store_windows(store, window_days, step_days):
        m_f = len(coauthorship_pairs(touches.between(start, end)))
        m_l = len({frozenset(p) for p in _cross_pairs(coedits.between(start, end))})
        series.points.append(WindowPoint(start, end, {
            "m_f": m_f,
            "m_l": m_l,
            "delta": m_f / m_l if m_l else None,
        }))
    return series


# -- export ---------------------------------------------------------------


def _number(value):
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value


def _graph_rows(graph) -> tuple[str, tuple, list, list, bool]:
    if isinstance(graph, AggregatedGraph):
        if graph.kind == DAG:
            rows = [(u, v) for u, v, _ in graph.edges]
        else:
            rows = [(u, v, _number(w)) for u, v, w in graph.edges]
        return graph.kind, CSV_HEADERS[graph.kind], rows, list(graph.nodes), graph.directed
    edges = list(graph)
    rows = [(e.source, e.target, e.timestamp, _number(e.weight)) for e in edges]
    nodes = sorted({n for e in edges for n in (e.source, e.target)})
    return "temporal", CSV_HEADERS["temporal"], rows, nodes, True


def graph_to_csv(graph) -> str:
    _, header, rows, _, _ = _graph_rows(graph)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buffer.getvalue()


def graph_to_json(graph) -> str:
    _, header, rows, nodes, directed = _graph_rows(graph)
    document = {
        "directed": directed,
        "nodes": nodes,
        "edges": [dict(zip(header, row)) for row in rows],
    }
    return json.dumps(document, indent=2, ensure_ascii=False) + "\n"


def export_graph(graph: Union[AggregatedGraph, Sequence[TemporalEdge]], fmt: str, out_path) -> None:
    if fmt == "csv":
        text = graph_to_csv(graph)
    elif fmt == "json":
        text = graph_to_json(graph)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    try:
        Path(out_path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {out_path}: {exc}") from exc


def _parse_number(text: str):
    try:
        return int(text)
    except ValueError:
        return float(text)


def _from_rows(header: tuple, rows: list[list], nodes: Optional[list] = None, directed: bool = True):
    kinds = {v: k for k, v in CSV_HEADERS.items()}
    kind = kinds.get(tuple(header))
    if kind is None:
        raise ValueError(f"unrecognised header {header}")
    if kind == "temporal":
        return [TemporalEdge(s, t, int(ts), _parse_number(str(w))) for s, t, ts, w in rows]
    if kind == DAG:
        edges = [(u, v, 1) for u, v in rows]
    else:
        edges = [(u, v, _parse_number(str(w))) for u, v, w in rows]
    if nodes is None:
        nodes = sorted({n for u, v, _ in edges for n in (u, v)})
    return AggregatedGraph(directed, nodes, edges, kind)


def parse_graph(text: str, fmt: str):
    """Inverse of :func:`graph_to_csv` / :func:`graph_to_json`."""
    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        return _from_rows(header, [row for row in reader])
    document = json.loads(text)
    edges = document["edges"]
    if not edges:
        return AggregatedGraph(document["directed"], document["nodes"], [], COEDIT)
    header = tuple(edges[0].keys())
    return _from_rows(header, [[e[k] for k in header] for e in edges],
                      nodes=document["nodes"], directed=document["directed"])


def load_graph(path):
    path = Path(path)
    fmt = "json" if path.suffix == ".json" else "csv"
    return parse_graph(path.read_text(encoding="utf-8"), fmt)


def iso_date(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%d")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def series_to_csv(series: WindowSeries) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(("window_start", "window_end") + series.columns)
    for point in series.points:
        writer.writerow(
            [iso_date(point.window_start), iso_date(point.window_end)]
            + [_cell(point.values[c]) for c in series.columns]
        )
    return buffer.getvalue()


def export_series(series: WindowSeries, out_path) -> None:
    try:
        Path(out_path).write_text(series_to_csv(series), encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {out_path}: {exc}") from exc


def _parse_cell(text: str):
    if text == "":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def parse_series(text: str) -> WindowSeries:
    """Inverse of :func:`series_to_csv`.

    The step is read off the first two rows; a single-row series is given a
    step equal to its window.
    """
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    if tuple(header[:2]) != ("window_start", "window_end"):
        raise ValueError(f"not a window series header: {header}")
    columns = tuple(header[2:])
    points = []
    for row in body:
        start, end = (int(datetime.strptime(v, "%Y-%m-%d").replace(tzinfo=timezone.utc).timestamp())
                      for v in row[:2])
        points.append(WindowPoint(start, end, dict(zip(columns, map(_parse_cell, row[2:])))))
    window_days = (points[0].window_end - points[0].window_start) // DAY if points else 0
    step_days = (points[1].window_start - points[0].window_start) // DAY if len(points) > 1 else window_days
    return WindowSeries(window_days, step_days, columns, points)
