"""Ingest, clean, and partition timestamped node-labeled event streams.

The canonical on-disk form is JSONL, one event per line with fields
{tau, node, text, domain, url}. Raw inputs are CSV (with header) or JSONL
carrying {timestamp, domain, title, url, language}.
"""

import csv
import fnmatch
import io
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import requests

from .errors import EmptyInputError, InputError, SplitError, TaxonomyError, TransportError

HOURS_PER_SECOND = 1.0 / 3600.0
DEFAULT_TIE_OFFSET_HOURS = HOURS_PER_SECOND  # one second
DEFAULT_ARTICLE_API = "https://api.gdeltproject.org/api/v2/doc/doc"

RAW_FIELDS = ("timestamp", "domain", "title", "url", "language")


@dataclass(frozen=True)
class RawRecord:
    """One article-metadata row prior to node assignment."""

    timestamp: datetime
    domain: str
    title: str
    url: str
    language: str = ""


@dataclass(frozen=True)
class RejectedRow:
    line_no: int
    reason: str


@dataclass
class ParseResult:
    records: list
    rejects: list


def parse_timestamp(value):
    """Parse ISO-8601 or the compact 14-digit UTC form to an aware datetime."""
    text = str(value).strip()
    if not text:
        raise ValueError("empty timestamp")
    compact = text.replace("T", "").rstrip("Zz")
    if compact.isdigit() and len(compact) == 14:
        return datetime.strptime(compact, "%Y%m%d%H%M%S").replace(tzinfo=timezone.utc)
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    parsed = datetime.fromisoformat(iso)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def _record_from_mapping(row, line_no):
    try:
        ts = parse_timestamp(row.get("timestamp", ""))
    except (ValueError, TypeError) as exc:
        return None, RejectedRow(line_no, f"bad timestamp: {exc}")
    title = str(row.get("title", "") or "").strip()
    if not title:
        return None, RejectedRow(line_no, "empty title")
    url = str(row.get("url", "") or "").strip()
    if not url:
        return None, RejectedRow(line_no, "empty url")
    domain = str(row.get("domain", "") or "").strip()
    language = str(row.get("language", "") or "").strip()
    return RawRecord(ts, domain, title, url, language), None


def parse_records(payload, fmt):
    """Parse a CSV or JSONL payload into RawRecords plus a rejects list.

    Raises EmptyInputError when no row survives; malformed rows are
    collected with reasons rather than raised.
    """
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"format must be 'csv' or 'jsonl', got {fmt!r}")
    if isinstance(payload, bytes):
        try:
            text = payload.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InputError(f"payload is not valid UTF-8: {exc}") from exc
    else:
        text = payload

    records, rejects = [], []
    if fmt == "csv":
        reader = csv.DictReader(io.StringIO(text))
        for line_no, row in enumerate(reader, start=2):
            record, reject = _record_from_mapping(row, line_no)
            if record is not None:
                records.append(record)
            else:
                rejects.append(reject)
    else:
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                rejects.append(RejectedRow(line_no, f"bad json: {exc}"))
                continue
            if not isinstance(row, dict):
                rejects.append(RejectedRow(line_no, "row is not an object"))
                continue
            record, reject = _record_from_mapping(row, line_no)
            if record is not None:
                records.append(record)
            else:
                rejects.append(reject)

    if not records:
        raise EmptyInputError(
            f"no valid rows in input ({len(rejects)} rejected)"
        )
    return ParseResult(records, rejects)


def fetch_articles(query, start, end, cap, base_url=DEFAULT_ARTICLE_API,
                   timeout=30.0, session=None, mode="article-list"):
    """Fetch up to `cap` article records in [start, end] from the metadata API.

    The endpoint is expected to answer GET with an `articles` JSON array whose
    items carry {seendate, domain, title, url, language}. Some deployments
    spell the list mode differently; override `mode` to match.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    params = {
        "query": query,
        "mode": mode,
        "format": "json",
        "maxrecords": int(cap),
        "startdatetime": start.astimezone(timezone.utc).strftime("%Y%m%d%H%M%S"),
        "enddatetime": end.astimezone(timezone.utc).strftime("%Y%m%d%H%M%S"),
    }
    http = session or requests
    try:
        response = http.get(base_url, params=params, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"article fetch failed: {exc}") from exc
    if response.status_code != 200:
        raise TransportError(
            f"article fetch returned HTTP {response.status_code}",
            status=response.status_code,
            body_excerpt=response.text[:200],
        )
    try:
        body = response.json()
    except ValueError as exc:
        raise TransportError(
            "article fetch returned non-JSON body",
            status=response.status_code,
            body_excerpt=response.text[:200],
        ) from exc

    records = []
    for item in body.get("articles", [])[: int(cap)]:
        record, _ = _record_from_mapping(
            {
                "timestamp": item.get("seendate", ""),
                "domain": item.get("domain", ""),
                "title": item.get("title", ""),
                "url": item.get("url", ""),
                "language": item.get("language", ""),
            },
            line_no=-1,
        )
        if record is not None:
            records.append(record)
    return records


def _normalize(text):
    return " ".join(text.casefold().split())


def deduplicate(records):
    """Keep the first occurrence per normalized URL and per normalized title."""
    seen_urls, seen_titles = set(), set()
    kept = []
    for record in records:
        url_key = _normalize(record.url)
        title_key = _normalize(record.title)
        if url_key in seen_urls or title_key in seen_titles:
            continue
        seen_urls.add(url_key)
        seen_titles.add(title_key)
        kept.append(record)
    return kept


def filter_language(records, language="English"):
    """Keep records whose language tag matches (case-insensitive)."""
    if language is None:
        return list(records)
    wanted = language.casefold()
    return [r for r in records if r.language.casefold() == wanted]


@dataclass(frozen=True)
class NodeSpec:
    id: int
    label: str


@dataclass
class NodeTaxonomy:
    """Hand-curated outlet categories acting as the cascade's agents.

    `domain_map` patterns match a record's domain exactly, as a suffix
    ("example.com" matches "news.example.com"), or by fnmatch wildcard
    when the pattern contains '*' or '?'.
    """

    nodes: list
    domain_map: dict
    fallback_node: int | None
    instructions: dict

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if ids != list(range(1, len(ids) + 1)):
            raise TaxonomyError(f"node ids must be contiguous 1..N, got {ids}")
        valid = set(ids)
        for pattern, node_id in self.domain_map.items():
            if node_id not in valid:
                raise TaxonomyError(f"domain pattern {pattern!r} maps to unknown node {node_id}")
        if self.fallback_node is not None and self.fallback_node not in valid:
            raise TaxonomyError(f"fallback node {self.fallback_node} not in taxonomy")
        for node_id in ids:
            if not str(self.instructions.get(node_id, "")).strip():
                raise TaxonomyError(f"node {node_id} has no instruction string")

    @property
    def n_nodes(self):
        return len(self.nodes)

    def label(self, node_id):
        return self.nodes[node_id - 1].label

    def instruction(self, node_id):
        return self.instructions[node_id]

    def node_for_domain(self, domain):
        domain = domain.strip().casefold()
        for pattern, node_id in self.domain_map.items():
            pat = pattern.strip().casefold()
            if "*" in pat or "?" in pat:
                if fnmatch.fnmatch(domain, pat):
                    return node_id
            elif domain == pat or domain.endswith("." + pat):
                return node_id
        if self.fallback_node is not None:
            return self.fallback_node
        raise TaxonomyError(f"domain {domain!r} matches no pattern and no fallback is set")

    @classmethod
    def from_dict(cls, data):
        nodes = [NodeSpec(int(n["id"]), str(n["label"])) for n in data["nodes"]]
        instructions = {int(k): str(v) for k, v in data.get("instructions", {}).items()}
        return cls(
            nodes=nodes,
            domain_map={str(k): int(v) for k, v in data.get("domain_map", {}).items()},
            fallback_node=(int(data["fallback_node"]) if data.get("fallback_node") is not None else None),
            instructions=instructions,
        )

    @classmethod
    def load(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {
            "nodes": [{"id": n.id, "label": n.label} for n in self.nodes],
            "domain_map": dict(self.domain_map),
            "fallback_node": self.fallback_node,
            "instructions": {str(k): v for k, v in self.instructions.items()},
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class Event:
    """One timestamped node activation with its text."""

    tau: float
    node: int
    text: str
    source: RawRecord | None = None

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError(f"tau must be >= 0, got {self.tau}")
        if self.node < 1:
            raise ValueError(f"node id must be >= 1, got {self.node}")


@dataclass
class EventStream:
    """Events sorted by strictly increasing tau over [0, horizon_hours]."""

    events: list
    origin: datetime
    horizon_hours: float

    def __post_init__(self):
        if self.horizon_hours <= 0:
            raise ValueError("horizon must be positive")
        taus = [e.tau for e in self.events]
        for prev, cur in zip(taus, taus[1:]):
            if cur <= prev:
                raise ValueError(f"event taus must be strictly increasing ({prev} -> {cur})")
        if taus and taus[-1] > self.horizon_hours:
            raise ValueError("event tau exceeds horizon")

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def projection(self):
        """Node-time projection: list of (tau, node) pairs."""
        return [(e.tau, e.node) for e in self.events]

    def max_node(self):
        return max((e.node for e in self.events), default=0)

    def save_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.events:
                row = {
                    "tau": e.tau,
                    "node": e.node,
                    "text": e.text,
                    "domain": e.source.domain if e.source else "",
                    "url": e.source.url if e.source else "",
                }
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")

    @classmethod
    def load_jsonl(cls, path, origin=None, horizon_hours=None,
                   tie_offset=DEFAULT_TIE_OFFSET_HOURS):
        events = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                events.append(Event(float(row["tau"]), int(row["node"]), str(row.get("text", ""))))
        if not events:
            raise EmptyInputError(f"no events in {path}")
        if horizon_hours is None:
            horizon_hours = events[-1].tau + tie_offset
        if origin is None:
            origin = datetime(1970, 1, 1, tzinfo=timezone.utc)
        return cls(events, origin, float(horizon_hours))


def build_stream(records, taxonomy, tie_offset=DEFAULT_TIE_OFFSET_HOURS):
    """Order records in time, break ties by small offsets, and assign nodes.

    tau is measured in hours from the earliest record. Within a group of
    identical timestamps the g-th record (file order, 0-indexed) is offset by
    g * tie_offset; the offset shrinks automatically when a group would
    otherwise overrun the next distinct timestamp, so the output is strictly
    increasing for any input. The horizon is the last tau plus one tie_offset.
    """
    if not records:
        raise EmptyInputError("cannot build a stream from zero records")
    if tie_offset <= 0:
        raise ValueError("tie_offset must be positive")

    ordered = sorted(records, key=lambda r: r.timestamp)
    origin = ordered[0].timestamp

    groups = []
    for record in ordered:
        if groups and record.timestamp == groups[-1][0]:
            groups[-1][1].append(record)
        else:
            groups.append((record.timestamp, [record]))

    events = []
    for gi, (ts, members) in enumerate(groups):
        base_tau = (ts - origin).total_seconds() * HOURS_PER_SECOND
        if gi + 1 < len(groups):
            gap = (groups[gi + 1][0] - ts).total_seconds() * HOURS_PER_SECOND
            step = min(tie_offset, gap / len(members))
        else:
            step = tie_offset
        for g, record in enumerate(members):
            node = taxonomy.node_for_domain(record.domain)
            events.append(Event(base_tau + g * step, node, record.title, source=record))

    horizon = events[-1].tau + tie_offset
    return EventStream(events, origin, horizon)


def chronological_split(stream, train_fraction):
    """Split a stream into a training prefix and a test suffix.

    The training side takes floor(train_fraction * M) events; the test side
    keeps the original horizon, the training horizon ends where the test
    side begins.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    m = len(stream.events)
    if m < 2:
        raise SplitError("need at least 2 events to split")
    n_train = math.floor(train_fraction * m)
    if n_train == 0 or n_train == m:
        raise SplitError(f"fraction {train_fraction} leaves an empty side for {m} events")
    train_events = stream.events[:n_train]
    test_events = stream.events[n_train:]
    train = EventStream(train_events, stream.origin, test_events[0].tau)
    test = EventStream(test_events, stream.origin, stream.horizon_hours)
    return train, test
