"""Instance files (JSON).

Edge weights are written as ``"p/q"`` strings when rational so that a round
trip keeps exact arithmetic; floats stay floats.  The optional ``kind`` field
names the global model; without it, labels that mix IC and LT mean MIXTURE,
all-LT labels mean LTM and anything else ICM.
"""
from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path

from .diffusion import IC, LT, ICForm, Kind, LTForm, ModelSpec, make_model
from .errors import ValidationError
from .graph import build_graph

_FIELDS = {"n", "kind", "vertex_weights", "edges", "labels", "candidates", "k", "names"}


def _weight_out(w):
    if isinstance(w, Fraction):
        return str(w.numerator) if w.denominator == 1 else f"{w.numerator}/{w.denominator}"
    return float(w)


def _int_keys(d: dict, what: str) -> dict[int, object]:
    out = {}
    for key, val in d.items():
        try:
            out[int(key)] = val
        except (TypeError, ValueError):
            raise ValidationError(f"{what}: key {key!r} is not an integer vertex id") from None
    return out


def instance_to_dict(m: ModelSpec) -> dict:
    g = m.graph
    out = {
        "n": g.n,
        "kind": m.kind.value,
        "vertex_weights": {str(v): w for v, w in enumerate(g.vertex_weight) if w != 1},
        "edges": [[e.src, e.dst, _weight_out(e.weight)] for e in g.edges],
    }
    if m.kind is Kind.GTM and not all(isinstance(f, (ICForm, LTForm)) for f in m.local_influence):
        raise ValidationError("GTM models with custom local influence functions cannot be saved")
    if m.kind in (Kind.MIXTURE, Kind.GTM):
        out["labels"] = {str(v): lab for v, lab in enumerate(m.labels)}
    if tuple(m.candidates) != tuple(range(g.n)):
        out["candidates"] = list(m.candidates)
    if m.k is not None:
        out["k"] = m.k
    if g.names:
        out["names"] = {str(v): s for v, s in sorted(g.names.items())}
    return out


def instance_from_dict(doc: dict) -> ModelSpec:
    if not isinstance(doc, dict):
        raise ValidationError("an instance must be a JSON object")
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ValidationError(f"unknown instance fields: {sorted(unknown)}")
    if "n" not in doc:
        raise ValidationError("instance is missing the vertex count 'n'")
    n = doc["n"]
    edges = []
    for i, item in enumerate(doc.get("edges", [])):
        if not isinstance(item, (list, tuple)) or len(item) != 3:
            raise ValidationError(f"edges[{i}] must be [src, dst, weight]")
        edges.append(tuple(item))
    g = build_graph(n, _int_keys(doc.get("vertex_weights", {}), "vertex_weights"), edges,
                    _int_keys(doc.get("names", {}), "names"))
    raw_labels = _int_keys(doc.get("labels", {}), "labels")
    for v, lab in raw_labels.items():
        if lab not in (IC, LT):
            raise ValidationError(f"labels: vertex {v} has label {lab!r}, expected 'IC' or 'LT'")
    if "kind" in doc:
        kind = Kind.parse(doc["kind"])
    elif raw_labels and set(raw_labels.values()) == {LT} and len(raw_labels) == n:
        kind = Kind.LTM
    elif len(set(raw_labels.values())) > 1:
        kind = Kind.MIXTURE
    else:
        kind = Kind.ICM
    labels = None
    if kind in (Kind.MIXTURE, Kind.GTM):
        fallback = IC if kind is Kind.MIXTURE else LT
        labels = [raw_labels.get(v, fallback) for v in range(n)]
    if kind is Kind.GTM:
        return ModelSpec(g, kind, tuple(labels), candidates=doc.get("candidates"), k=doc.get("k"))
    return make_model(g, kind, labels=labels, candidates=doc.get("candidates"), k=doc.get("k"))


def save_instance(m: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(m), indent=2) + "\n")


def load_instance(path) -> ModelSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return instance_from_dict(doc)
