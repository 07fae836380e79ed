"""File formats: long-format edge lists, chain tables and JSON manifests.

All writers produce deterministic bytes (sorted JSON keys, shortest
round-trip float formatting, no timestamps) so that reruns can be
compared byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ParseError
from .network import ModelSpec, ParamState, TemporalNetwork

__all__ = [
    "ingest_edges",
    "format_edges",
    "format_table",
    "read_table",
    "dumps_json",
    "config_digest",
    "file_digest",
    "OutputStage",
    "state_to_json",
    "state_from_json",
    "chain_columns_to_states",
]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_digest(config: dict) -> str:
    """Short SHA-256 digest of a configuration mapping."""
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _stamp(seed, digest) -> str:
    return f"# seed={seed} config_digest={digest}\n"


def format_table(header: list, rows: Iterable, seed=None, digest=None) -> str:
    buf = io.StringIO()
    if seed is not None:
        buf.write(_stamp(seed, digest))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def read_table(path) -> tuple[list, list]:
    """Read a table written by :func:`format_table` (comment lines skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, [row for row in reader]


def format_edges(network: TemporalNetwork, seed=None, digest=None) -> str:
    """Every unordered pair at every time, ``NA`` for unobserved counts."""
    labels = network.labels
    rows = []
    iu = np.triu_indices(network.n_nodes, 1)
    for t in range(network.n_times):
        for i, j in zip(*iu):
            c = network.counts[i, j, t] if network.mask[i, j, t] else "NA"
            rows.append([t + 1, labels[i], labels[j], c])
    return format_table(["t", "i", "j", "count"], rows, seed, digest)


def ingest_edges(path) -> TemporalNetwork:
    """Build a network from a ``t,i,j,count`` edge list.

    Lines starting with ``#`` are comments.  Times are 1-based integers;
    node labels are assigned indices in order of first appearance;
    ``NA`` (any case) marks an unobserved count; unlisted pairs are zero.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    header_seen = False
    labels: dict = {}
    records: dict = {}
    t_max = 0
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        fields = [f.strip() for f in fields]
        if not header_seen:
            if [f.lower() for f in fields] != ["t", "i", "j", "count"]:
                raise ParseError(f"line {lineno}: expected header 't,i,j,count'")
            header_seen = True
            continue
        if len(fields) != 4:
            raise ParseError(f"line {lineno}: expected 4 fields, got {len(fields)}")
        t_s, a, b, c_s = fields
        try:
            t = int(t_s)
        except ValueError:
            raise ParseError(f"line {lineno}: time {t_s!r} is not an integer") from None
        if t < 1:
            raise ParseError(f"line {lineno}: time must be >= 1")
        if a == b:
            raise ParseError(f"line {lineno}: self-loop {a!r}")
        if c_s.upper() == "NA":
            count = None
        else:
            try:
                count = int(c_s)
            except ValueError:
                raise ParseError(f"line {lineno}: count {c_s!r} is not an integer") from None
            if count < 0:
                raise ParseError(f"line {lineno}: negative count {count}")
        for lab in (a, b):
            if lab not in labels:
                labels[lab] = len(labels)
        i, j = labels[a], labels[b]
        key = (t, min(i, j), max(i, j))
        if key in records:
            prev_line, prev_count = records[key]
            if prev_count != count:
                raise ParseError(
                    f"conflicting records for pair ({a}, {b}) at t={t} on lines {prev_line} and {lineno}"
                )
            continue
        records[key] = (lineno, count)
        t_max = max(t_max, t)
    if not header_seen:
        raise ParseError("missing header 't,i,j,count'")
    if len(labels) < 2 or t_max < 1:
        raise ParseError("edge list must mention at least two nodes")
    n = len(labels)
    counts = np.zeros((n, n, t_max), dtype=np.int64)
    mask = np.ones((n, n, t_max), dtype=bool)
    for (t, i, j), (_, c) in records.items():
        if c is None:
            mask[i, j, t - 1] = mask[j, i, t - 1] = False
        else:
            counts[i, j, t - 1] = counts[j, i, t - 1] = c
    return TemporalNetwork(counts, mask, tuple(labels))


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


class OutputStage:
    """Collects output files in memory and writes them all at the end.

    Each file is written to a temporary sibling and renamed into place, so
    an error before :meth:`commit` leaves the output directory untouched.
    """

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.files: dict = {}

    def add(self, name: str, text: str) -> None:
        self.files[name] = text.encode()

    def commit(self) -> list:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        temps = []
        try:
            for name, data in self.files.items():
                fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=self.out_dir)
                with os.fdopen(fd, "wb") as fh:
                    fh.write(data)
                os.chmod(tmp, 0o666 & ~_umask())
                temps.append((tmp, self.out_dir / name))
        except BaseException:
            for tmp, _ in temps:
                os.unlink(tmp)
            raise
        for tmp, final in temps:
            os.replace(tmp, final)
        return [str(final) for _, final in temps]


def state_to_json(state: ParamState) -> dict:
    return state.as_dict()


def state_from_json(data: dict) -> ParamState:
    def arr(key):
        return None if key not in data else np.asarray(data[key], dtype=float)

    return ParamState(
        alpha=arr("alpha"),
        zeta=float(data["zeta"]),
        f=arr("f"),
        sigma_eps2=None if "sigma_eps2" not in data else float(data["sigma_eps2"]),
        delta=arr("delta"),
        x=arr("x"),
    )


def chain_columns_to_states(spec: ModelSpec, n_nodes: int, n_times: int, header: list, rows: list):
    """Rebuild retained states from chain-table rows."""
    col = {name: k for k, name in enumerate(header)}
    states, logliks = [], []
    for row in rows:
        vals = [float(v) for v in row]
        st = ParamState(alpha=np.array([vals[col[f"alpha_{i + 1}"]] for i in range(n_nodes)]),
                        zeta=vals[col["zeta"]])
        if spec.has_f:
            st.f = np.array([vals[col[f"f_{t + 1}"]] for t in range(n_times)])
            st.sigma_eps2 = vals[col["sigma_eps2"]]
        if spec.kind == "M2":
            st.delta = np.array([vals[col[f"delta_{l + 1}"]] for l in range(spec.k)])
        if spec.kind == "M3":
            st.x = np.array([[[vals[col[f"x_{t + 1}_{i + 1}_{k + 1}"]] for k in range(spec.d)]
                              for i in range(n_nodes)] for t in range(n_times)])
        states.append(st)
        logliks.append(vals[col["loglik"]])
    return states, np.array(logliks)
