"""JSON encodings of walks, translation-invariant walks, automata and classical rules.

Complex matrices are stored as a pair of real nested lists ``re`` and ``im``.
Python's float repr round-trips exactly, so decoding reproduces every entry.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .classical import ClassicalRule
from .errors import ValidationError
from .qca import CircuitQca, GateLayer, GlobalQca, ParallelQca, QcaSystem, ShiftLayer
from .walk import BandedUnitary, PartitionedLayer, circuit_walk
from .walk_ti import LaurentUnitary

SCHEMAS = ("walk", "walk_circuit", "ti_walk", "qca_circuit", "qca_global", "qca_parallel", "classical_rule")


def encode_matrix(m) -> dict:
    m = np.asarray(m, dtype=complex)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def decode_matrix(obj: dict, what: str = "matrix") -> np.ndarray:
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: malformed complex matrix ({exc})") from None
    if re.shape != im.shape:
        raise ValidationError(f"{what}: real and imaginary parts differ in shape")
    return re + 1j * im


def _require(obj: dict, *keys):
    missing = [k for k in keys if k not in obj]
    if missing:
        raise ValidationError(f"{obj.get('type', 'object')}: missing field(s) {', '.join(missing)}")


# ---------------------------------------------------------------------------
# encoders


def dump_walk(u: BandedUnitary) -> dict:
    blocks = []
    for x in range(u.M):
        for y in range(u.M):
            b = u.block(x, y)
            if np.abs(b).max(initial=0.0) > 0:
                blocks.append({"x": x, "y": y, **encode_matrix(b)})
    return {"type": "walk", "M": u.M, "dims": list(u.dims), "band": u.band, "blocks": blocks}


def _dump_walk_layer(layer) -> dict:
    if isinstance(layer, PartitionedLayer):
        return {
            "kind": "partition",
            "blocks": [{"sites": list(s), **encode_matrix(m)} for s, m in layer.blocks],
        }
    return {"kind": "shift", "by": int(layer)}


def dump_walk_circuit(dims, layers) -> dict:
    return {"type": "walk_circuit", "dims": list(dims), "layers": [_dump_walk_layer(l) for l in layers]}


def dump_ti_walk(u: LaurentUnitary) -> dict:
    return {
        "type": "ti_walk",
        "d": u.d,
        "L": u.degree,
        "coeffs": [{"x": int(x), **encode_matrix(c)} for x, c in zip(u.exponents(), u.coeffs)],
    }


def dump_qca(system: QcaSystem) -> dict:
    if isinstance(system, CircuitQca):
        layers = []
        for layer in system.layers:
            if isinstance(layer, ShiftLayer):
                layers.append({"kind": "shift", "by": layer.by})
            else:
                layers.append({
                    "kind": "partition",
                    "blocks": [{"cells": list(c), **encode_matrix(m)} for c, m in layer.blocks],
                })
        return {"type": "qca_circuit", "N": system.N, "dims": list(system.dims), "layers": layers}
    if isinstance(system, GlobalQca):
        out = {"type": "qca_global", "N": system.N, "dims": list(system.dims), "band": system.band}
        if system.is_monomial:
            out["permutation"] = system.permutation.tolist()
            out["phases"] = encode_matrix(system.phases)
        else:
            out.update(encode_matrix(system.matrix))
        return out
    if isinstance(system, ParallelQca):
        return {"type": "qca_parallel", "first": dump_qca(system.first), "second": dump_qca(system.second)}
    raise ValidationError(f"no JSON encoding for {type(system).__name__}")


def dump_classical(rule: ClassicalRule) -> dict:
    return {
        "type": "classical_rule",
        "q": rule.q,
        "radius": rule.radius,
        "table": list(rule.table),
        "inv_radius": rule.inv_radius,
        "inv_table": list(rule.inv_table),
    }


def dump(obj) -> dict:
    if isinstance(obj, BandedUnitary):
        return dump_walk(obj)
    if isinstance(obj, LaurentUnitary):
        return dump_ti_walk(obj)
    if isinstance(obj, QcaSystem):
        return dump_qca(obj)
    if isinstance(obj, ClassicalRule):
        return dump_classical(obj)
    raise ValidationError(f"no JSON encoding for {type(obj).__name__}")


# ---------------------------------------------------------------------------
# decoders


def _load_walk(obj):
    _require(obj, "M", "dims", "band", "blocks")
    dims = [int(d) for d in obj["dims"]]
    if len(dims) != int(obj["M"]):
        raise ValidationError("walk: M does not match the number of dims")
    blocks = {}
    for b in obj["blocks"]:
        _require(b, "x", "y", "re")
        key = (int(b["x"]), int(b["y"]))
        if not (0 <= key[0] < len(dims) and 0 <= key[1] < len(dims)):
            raise ValidationError(f"walk: block index {key} out of range")
        mat = decode_matrix(b, f"block {key}")
        if mat.shape != (dims[key[0]], dims[key[1]]):
            raise ValidationError(f"walk: block {key} has shape {mat.shape}")
        blocks[key] = mat
    return BandedUnitary.from_blocks(dims, int(obj["band"]), blocks)


def _load_walk_layer(dims, layer):
    _require(layer, "kind")
    if layer["kind"] == "shift":
        return int(layer["by"])
    if layer["kind"] == "partition":
        return PartitionedLayer(dims, [(b["sites"], decode_matrix(b, "layer block")) for b in layer["blocks"]])
    raise ValidationError(f"unknown layer kind {layer['kind']!r}")


def _load_walk_circuit(obj):
    _require(obj, "dims", "layers")
    dims = tuple(int(d) for d in obj["dims"])
    return circuit_walk(dims, [_load_walk_layer(dims, l) for l in obj["layers"]])


def _load_ti(obj):
    _require(obj, "d", "coeffs")
    coeffs = {}
    for c in obj["coeffs"]:
        _require(c, "x", "re")
        coeffs[int(c["x"])] = decode_matrix(c, f"coefficient {c['x']}")
    u = LaurentUnitary(coeffs)
    if u.d != int(obj["d"]):
        raise ValidationError("ti_walk: d does not match the coefficient size")
    return u


def _load_qca_circuit(obj):
    _require(obj, "N", "dims", "layers")
    dims = tuple(int(d) for d in obj["dims"])
    if len(dims) != int(obj["N"]):
        raise ValidationError("qca_circuit: N does not match the number of dims")
    layers = []
    for layer in obj["layers"]:
        _require(layer, "kind")
        if layer["kind"] == "shift":
            layers.append(ShiftLayer(int(layer["by"])))
        elif layer["kind"] == "partition":
            layers.append(GateLayer(dims, [(b["cells"], decode_matrix(b, "gate")) for b in layer["blocks"]]))
        else:
            raise ValidationError(f"unknown layer kind {layer['kind']!r}")
    return CircuitQca(dims, layers)


def _load_qca_global(obj):
    _require(obj, "N", "dims", "band")
    dims = tuple(int(d) for d in obj["dims"])
    if len(dims) != int(obj["N"]):
        raise ValidationError("qca_global: N does not match the number of dims")
    if "permutation" in obj:
        phases = decode_matrix(obj["phases"], "phases") if "phases" in obj else None
        return GlobalQca(dims, int(obj["band"]), permutation=obj["permutation"], phases=phases)
    return GlobalQca(dims, int(obj["band"]), decode_matrix(obj, "ring unitary"))


def _load_classical(obj):
    _require(obj, "q", "radius", "table", "inv_radius", "inv_table")
    rule = ClassicalRule(
        int(obj["q"]), int(obj["radius"]), tuple(int(v) for v in obj["table"]),
        int(obj["inv_radius"]), tuple(int(v) for v in obj["inv_table"]),
    )
    rule.validate()
    return rule


def load(obj: dict):
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValidationError("input is not a typed JSON object")
    kind = obj["type"]
    loaders = {
        "walk": _load_walk,
        "walk_circuit": _load_walk_circuit,
        "ti_walk": _load_ti,
        "qca_circuit": _load_qca_circuit,
        "qca_global": _load_qca_global,
        "qca_parallel": lambda o: ParallelQca(load(o["first"]), load(o["second"])),
        "classical_rule": _load_classical,
    }
    if kind not in loaders:
        raise ValidationError(f"unknown schema {kind!r}")
    return loaders[kind](obj)


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None


def write_json(path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=1))


def digest(obj: dict) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]
