"""Text checkpoints: a JSON header describing the layout, then the flat values.

Floats are written with ``repr`` so they round-trip exactly.
"""
from __future__ import annotations

import json

import numpy as np

from .nn import MlpSpec, ParamStore

FORMAT = "steinbridge-checkpoint"
VERSION = 1


def dump_params(spec: MlpSpec | None, params: ParamStore) -> dict:
    return {
        "spec": spec.to_dict() if spec is not None else None,
        "layout": [[n, list(s)] for n, s in zip(params.names, params.shapes)],
        "values": [float(x) for x in params.flat()],
    }


def load_params(d: dict):
    spec = MlpSpec.from_dict(d["spec"]) if d.get("spec") else None
    names = [n for n, _ in d["layout"]]
    shapes = [tuple(s) for _, s in d["layout"]]
    ps = ParamStore(names, [np.zeros(s) for s in shapes])
    ps.set_flat(np.asarray(d["values"], dtype=np.float64))
    if spec is not None:
        expected = spec.layout()
        if [(n, tuple(s)) for n, s in expected] != list(zip(names, shapes)):
            raise ValueError("checkpoint layout does not match its spec")
    return spec, ps


def save(path, spec: MlpSpec | None, params: ParamStore, kind: str = "mlp", extra: dict | None = None):
    doc = {"format": FORMAT, "version": VERSION, "kind": kind, **dump_params(spec, params)}
    if extra:
        doc["extra"] = extra
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise ValueError(f"{path} is not a {FORMAT} file")
    spec, ps = load_params(doc)
    return doc.get("kind"), spec, ps
