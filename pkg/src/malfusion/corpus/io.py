"""On-disk formats: trace line records, edge lists, import lists, manifests.

Formats:
  * Trace: UTF-8 text, one JSON object per line with keys ``sample_id``,
    ``api``, ``params`` (list of strings).
  * Call graph: header line ``n <node_count>``, then one ``u v`` edge per line.
  * PE imports: one API name per line.
  * Corpus manifest: CSV with columns sample_id, family, trace_path, cg_path,
    imports_path; artifact paths are relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .types import (
    ApiStatement,
    CallGraph,
    Corpus,
    CorpusSample,
    EmptyTraceError,
    MAX_PARAMS_PER_STATEMENT,
    ParseError,
    PeImports,
    TraceFile,
)

# parameter-token normalization -------------------------------------------------

_DECIMAL = re.compile(r"-?[0-9]+")
_HEX = re.compile(r"0x[0-9a-f]+")


def _magnitude_tag(n: int) -> str:
    """Round to one significant digit and abbreviate thousands/millions/billions."""
    if n == 0:
        return "0"
    digits = len(str(n))
    lead = int(str(n)[0])
    value = lead * 10 ** (digits - 1)
    if value >= 10**9:
        return f"{value // 10**9}b"
    if value >= 10**6:
        return f"{value // 10**6}m"
    if value >= 10**3:
        return f"{value // 10**3}k"
    return str(value)


def normalize_param(token: str) -> str:
    """Lowercase; numbers -> magnitude buckets; path-like -> extension tag."""
    t = token.lower()
    if _DECIMAL.fullmatch(t):
        return "num:" + _magnitude_tag(abs(int(t)))
    if _HEX.fullmatch(t):
        return "num:" + _magnitude_tag(int(t, 16))
    if "/" in t or "\\" in t:
        base = re.split(r"[/\\]", t)[-1]
        dot = base.rfind(".")
        ext = base[dot:] if dot > 0 else ""
        return "path:" + ext
    return t


# trace files -------------------------------------------------------------------


def parse_trace(raw_lines: Iterable[str] | TextIO) -> TraceFile:
    """Parse line records into a TraceFile, normalizing parameter tokens."""
    sample_id: str | None = None
    statements: list[ApiStatement] = []
    line_no = 0
    for line_no, line in enumerate(raw_lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"bad record: {e.msg}", line_no) from e
        if not isinstance(rec, dict):
            raise ParseError("record is not an object", line_no)
        for key in ("sample_id", "api", "params"):
            if key not in rec:
                raise ParseError(f"missing field {key!r}", line_no)
        sid, api, params = rec["sample_id"], rec["api"], rec["params"]
        if not isinstance(api, str) or not api:
            raise ParseError("api must be a non-empty string", line_no)
        if not isinstance(params, list) or not all(isinstance(p, str) for p in params):
            raise ParseError("params must be a list of strings", line_no)
        if sample_id is None:
            sample_id = str(sid)
        elif str(sid) != sample_id:
            raise ParseError(f"sample_id {sid!r} does not match {sample_id!r}", line_no)
        norm = tuple(normalize_param(p) for p in params[:MAX_PARAMS_PER_STATEMENT])
        statements.append(ApiStatement(api, norm))
    if not statements:
        raise EmptyTraceError("trace stream has no statements")
    return TraceFile(sample_id, tuple(statements))


def serialize_trace(trace: TraceFile) -> str:
    lines = []
    for s in trace.statements:
        lines.append(json.dumps(
            {"sample_id": trace.sample_id, "api": s.api_name, "params": list(s.params)}))
    return "\n".join(lines) + "\n"


# call graphs -------------------------------------------------------------------


def canonicalize_adjacency(n: int, edges: Iterable[tuple[int, int]], size: int) -> np.ndarray:
    """Reorder nodes by descending out-degree (ties by original index),
    then truncate or zero-pad to ``size`` x ``size``."""
    edges = list(edges)
    out_deg = np.zeros(n, dtype=np.int64)
    for u, _ in edges:
        out_deg[u] += 1
    order = sorted(range(n), key=lambda i: (-out_deg[i], i))
    rank = {node: r for r, node in enumerate(order)}
    adj = np.zeros((size, size), dtype=np.float64)
    for u, v in edges:
        ru, rv = rank[u], rank[v]
        if ru < size and rv < size:
            adj[ru, rv] = 1.0
    return adj


def parse_callgraph(edge_list: Iterable[str] | TextIO, canonical_size: int) -> CallGraph:
    lines = iter(enumerate(edge_list, start=1))
    header = None
    for line_no, line in lines:
        line = line.strip()
        if line:
            header = (line_no, line)
            break
    if header is None:
        raise ParseError("empty call-graph stream")
    line_no, text = header
    parts = text.split()
    if len(parts) != 2 or parts[0] != "n":
        raise ParseError(f"expected header 'n <node_count>', got {text!r}", line_no)
    try:
        n = int(parts[1])
    except ValueError:
        raise ParseError(f"node count {parts[1]!r} is not an integer", line_no) from None
    if n < 0:
        raise ParseError("node count must be nonnegative", line_no)
    edges: list[tuple[int, int]] = []
    for line_no, line in lines:
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'u v', got {line!r}", line_no)
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"non-integer node id in {line!r}", line_no) from None
        if u < 0 or v < 0:
            raise ParseError(f"negative node id in {line!r}", line_no)
        if u >= n or v >= n:
            raise ParseError(f"node id beyond declared count {n} in {line!r}", line_no)
        edges.append((u, v))
    return CallGraph(n, canonicalize_adjacency(n, edges, canonical_size))


def serialize_callgraph(cg: CallGraph) -> str:
    """Emit the canonical matrix as an edge list.

    parse(serialize(cg)) == cg whenever node_count <= the canonical size;
    truncated graphs lost edges at parse time and cannot round-trip.
    """
    lines = [f"n {cg.node_count}"]
    rows, cols = np.nonzero(cg.adjacency)
    for u, v in zip(rows.tolist(), cols.tolist()):
        lines.append(f"{u} {v}")
    return "\n".join(lines) + "\n"


# imports -----------------------------------------------------------------------


def parse_imports(raw_lines: Iterable[str] | TextIO, sample_id: str) -> PeImports:
    names = {line.strip() for line in raw_lines if line.strip()}
    return PeImports(sample_id, frozenset(names))


def serialize_imports(imports: PeImports) -> str:
    names = sorted(imports.imports)
    return "\n".join(names) + ("\n" if names else "")


# corpus on disk ----------------------------------------------------------------

MANIFEST_COLUMNS = ("sample_id", "family", "trace_path", "cg_path", "imports_path")
MANIFEST_NAME = "manifest.csv"


def write_corpus(corpus: Corpus, out_dir: str | Path, canonical_size: int | None = None) -> Path:
    """Write traces/, graphs/, imports/ and the manifest; returns manifest path."""
    out = Path(out_dir)
    for sub in ("traces", "graphs", "imports"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rows = []
    for s in corpus.samples:
        tp = f"traces/{s.sample_id}.jsonl"
        gp = f"graphs/{s.sample_id}.txt"
        ip = f"imports/{s.sample_id}.txt"
        (out / tp).write_text(serialize_trace(s.trace), encoding="utf-8")
        (out / gp).write_text(serialize_callgraph(s.callgraph), encoding="utf-8")
        (out / ip).write_text(serialize_imports(s.imports), encoding="utf-8")
        rows.append((s.sample_id, s.family, tp, gp, ip))
    manifest = out / MANIFEST_NAME
    with manifest.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        writer.writerows(rows)
    meta = {"family_count": corpus.family_count}
    if canonical_size is not None:
        meta["canonical_size"] = canonical_size
    (out / "corpus.json").write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def load_corpus(manifest_path: str | Path, canonical_size: int | None = None) -> Corpus:
    manifest = Path(manifest_path)
    if manifest.is_dir():
        manifest = manifest / MANIFEST_NAME
    root = manifest.parent
    meta_path = root / "corpus.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    if canonical_size is None:
        canonical_size = int(meta.get("canonical_size", 64))
    samples: list[CorpusSample] = []
    max_family = -1
    with manifest.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ParseError(f"manifest missing columns {sorted(missing)}")
        for row in reader:
            sid = row["sample_id"]
            family = int(row["family"])
            max_family = max(max_family, family)
            with (root / row["trace_path"]).open(encoding="utf-8") as t:
                trace = parse_trace(t)
            with (root / row["cg_path"]).open(encoding="utf-8") as g:
                cg = parse_callgraph(g, canonical_size)
            with (root / row["imports_path"]).open(encoding="utf-8") as i:
                imports = parse_imports(i, sid)
            samples.append(CorpusSample(sid, family, trace, cg, imports))
    family_count = int(meta.get("family_count", max_family + 1))
    return Corpus(samples, family_count)
