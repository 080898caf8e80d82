"""Command-line interface: ``flowindex {index,construct,dispersion,verify}``.

Exit status is 0 when every check passes, 1 for unreadable or invalid input
and 2 when routes disagree, a residual is too large or an index
precondition fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import builtins, qca, serialization, walk, walk_ti
from .errors import IndexConditionError, ValidationError, VerificationError
from .tolerances import DEFAULT
from .verification import kind_of, verify

EXIT_OK, EXIT_INPUT, EXIT_MATH = 0, 1, 2


def load_source(source: str):
    """Return ``(object, name, expected_index_or_None, digest)`` for a path or ``builtin:NAME``."""
    if source.startswith("builtin:"):
        b = builtins.get(source.split(":", 1)[1])
        obj = b.build()
        return obj, b.name, b.expected, serialization.digest(serialization.dump(obj))
    raw = serialization.read_json(source)
    return serialization.load(raw), Path(source).name, None, serialization.digest(raw)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=1))
    else:
        print(text)
    if getattr(args, "out", None) and args.command in ("index", "verify"):
        serialization.write_json(args.out, payload)


def _tolerances(args):
    return DEFAULT.scaled(args.tol) if args.tol is not None else DEFAULT


def cmd_index(args) -> int:
    obj, name, expected, dig = load_source(args.path)
    rep = verify(obj, name, expected=expected, tol=_tolerances(args), seed=args.seed, grid=args.grid,
                 cut=args.cut, digest=dig)
    _emit(args, rep.to_dict(), rep.summary())
    return EXIT_OK if rep.passed else EXIT_MATH


def cmd_verify(args) -> int:
    if args.all_builtin:
        sources = [f"builtin:{n}" for n in builtins.BUILTINS]
    elif args.path:
        sources = [args.path]
    else:
        raise ValidationError("give a PATH or --all-builtin")
    reports = []
    for src in sources:
        obj, name, expected, dig = load_source(src)
        reports.append(verify(obj, name, expected=expected, tol=_tolerances(args), seed=args.seed,
                              grid=args.grid, cut=args.cut, digest=dig))
    passed = all(r.passed for r in reports)
    payload = {"suites": [r.to_dict() for r in reports], "count": len(reports), "passed": passed}
    text = "\n".join(r.summary() for r in reports)
    text += f"\n{sum(r.passed for r in reports)}/{len(reports)} suites passed"
    _emit(args, payload, text)
    return EXIT_OK if passed else EXIT_MATH


def cmd_dispersion(args) -> int:
    obj, name, _, _ = load_source(args.path)
    if not isinstance(obj, walk_ti.LaurentUnitary):
        raise ValidationError("dispersion needs a ti_walk input")
    data = walk_ti.dispersion(obj, args.grid)
    ind = walk_ti.index_coefficient(obj)
    if args.out:
        data.write_csv(args.out)
    payload = {"name": name, "grid": len(data.momenta), "winding_sum": data.winding_sum, "index": ind,
               "windings": [float(w) for w in data.windings]}
    _emit(args, payload, f"{name}: winding sum {data.winding_sum}, index {ind}, grid {len(data.momenta)}")
    return EXIT_OK if data.winding_sum == ind else EXIT_MATH


# ---------------------------------------------------------------------------
# constructions


def _prefix(args, default: str) -> Path:
    return Path(args.out) if args.out else Path(default)


def _write(path: Path, obj: dict, written: list) -> None:
    serialization.write_json(path, obj)
    written.append(str(path))


def _gates_json(ops) -> list:
    return [{"start": o.start, "dims": list(o.dims), **serialization.encode_matrix(o.matrix)} for o in ops]


def _construct(kind: str, obj, args, prefix: Path):
    written: list = []
    residuals: dict = {}
    if kind == "decouple":
        if not isinstance(obj, walk.BandedUnitary):
            raise ValidationError("decouple needs a walk")
        layer = walk.decouple(obj, args.cut)
        w = walk.compose(obj, layer.to_walk())
        residuals["crossing_norm"] = walk.crossing_norm(w, obj.dims, w.band, args.cut)
        _write(prefix.with_suffix(".json"), serialization.dump_walk_circuit(obj.dims, [layer]), written)
    elif kind == "two-layer":
        if isinstance(obj, walk.BandedUnitary):
            first, second = walk.two_layer_implementation(obj)
            residuals["reconstruction"] = float(np.abs(second.matrix() @ first.matrix() - obj.matrix).max())
            for i, layer in enumerate((first, second), 1):
                _write(Path(f"{prefix}.layer{i}.json"), serialization.dump_walk_circuit(obj.dims, [layer]), written)
        elif isinstance(obj, qca.QcaSystem):
            circuit, res = qca.two_layer_implementation_qca(obj)
            residuals["reconstruction"] = res
            for i, layer in enumerate(circuit.layers, 1):
                _write(Path(f"{prefix}.layer{i}.json"), serialization.dump_qca(qca.CircuitQca(obj.dims, [layer])), written)
        else:
            raise ValidationError("two-layer needs a walk or an automaton")
    elif kind == "crossover":
        if not args.other:
            raise ValidationError("crossover needs --other")
        other, *_ = load_source(args.other)
        if not isinstance(obj, walk.BandedUnitary) or not isinstance(other, walk.BandedUnitary):
            raise ValidationError("crossover needs two walks")
        out = walk.crossover(obj, other, args.cut)
        residuals["unitarity"] = float(np.abs(out.matrix @ out.matrix.conj().T - np.eye(out.total_dim)).max())
        _write(prefix.with_suffix(".json"), serialization.dump_walk(out), written)
    elif kind == "path-sample":
        if isinstance(obj, walk.BandedUnitary):
            sample = walk.connect_to_identity(obj, args.t)
            residuals["unitarity"] = float(np.abs(sample.value.matrix @ sample.value.matrix.conj().T
                                                  - np.eye(sample.value.total_dim)).max())
            residuals["band"] = float(sample.value.measured_band())
            _write(prefix.with_suffix(".json"), serialization.dump_walk(sample.value), written)
        elif isinstance(obj, walk_ti.LaurentUnitary):
            sample = walk_ti.ti_path(obj, args.t)
            residuals["paraunitarity"] = sample.paraunitarity_residual()
            _write(prefix.with_suffix(".json"), serialization.dump_ti_walk(sample), written)
        else:
            raise ValidationError("path-sample needs a walk or a ti_walk")
    elif kind == "doubled":
        if isinstance(obj, walk.BandedUnitary):
            ts, swaps = walk.doubled_implementation(obj)
            target = walk.direct_sum(obj, walk.adjoint(obj)).matrix
            residuals["product"] = float(np.abs(walk.doubled_product(ts, swaps) - target).max())
            payload = {"unitaries": [serialization.dump_walk(t) for t in ts],
                       "swaps": [serialization.dump_walk(s) for s in swaps]}
        elif isinstance(obj, qca.QcaSystem):
            d = qca.doubled_implementation_qca(obj)
            residuals.update(commutation=d.commutator, forward=d.forward_residual, backward=d.backward_residual)
            payload = {"unitaries": _gates_json(d.unitaries), "swaps": _gates_json(d.swaps)}
        else:
            raise ValidationError("doubled needs a walk or an automaton")
        _write(Path(f"{prefix}.doubled.json"), payload, written)
    else:
        raise ValidationError(f"unknown construction {kind!r}")
    return written, residuals


def cmd_construct(args) -> int:
    obj, name, _, dig = load_source(args.path)
    prefix = _prefix(args, f"{name.replace('.json', '')}-{args.kind}")
    written, residuals = _construct(args.kind, obj, args, prefix)
    tol = _tolerances(args).reconstruction
    limits = {"band": 2.0}
    checks = {k: v <= limits.get(k, tol) for k, v in residuals.items()}
    passed = all(checks.values())
    report = {"name": name, "digest": dig, "kind": args.kind, "files": written, "residuals": residuals,
              "checks": checks, "passed": passed}
    _write(Path(f"{prefix}.report.json"), report, written)
    text = f"{'PASS' if passed else 'FAIL'} {args.kind} on {name}: " + ", ".join(
        f"{k}={v:.3g}" for k, v in residuals.items())
    text += "\n" + "\n".join(f"  wrote {w}" for w in written)
    _emit(args, report, text)
    return EXIT_OK if passed else EXIT_MATH


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a machine-readable report")
    common.add_argument("--seed", type=int, default=0, help="seed for all sampled checks")
    common.add_argument("--tol", type=float, default=None, help="scale every tolerance by this factor")
    common.add_argument("--grid", type=int, default=256, help="momentum grid size")
    common.add_argument("--cut", type=int, default=0, help="cut position")
    common.add_argument("--out", help="output file (or prefix for constructions)")

    parser = argparse.ArgumentParser(prog="flowindex", description="Index computations for walks and automata.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("index", parents=[common], help="compute the index by every applicable route")
    p.add_argument("path", help="JSON file or builtin:NAME")
    p.set_defaults(func=cmd_index)
    p = sub.add_parser("construct", parents=[common], help="run a construction and write its output")
    p.add_argument("path")
    p.add_argument("--kind", required=True, choices=["decouple", "two-layer", "crossover", "path-sample", "doubled"])
    p.add_argument("--other", help="second walk for crossover")
    p.add_argument("--t", type=float, default=0.5, help="path parameter in [0, 1]")
    p.set_defaults(func=cmd_construct)
    p = sub.add_parser("dispersion", parents=[common], help="dispersion relation of a translation-invariant walk")
    p.add_argument("path")
    p.set_defaults(func=cmd_dispersion)
    p = sub.add_parser("verify", parents=[common], help="run the invariant suite")
    p.add_argument("path", nargs="?")
    p.add_argument("--all-builtin", action="store_true", help="verify every builtin system")
    p.set_defaults(func=cmd_verify)
    sub.add_parser("list", help="list builtin systems").set_defaults(func=cmd_list, json=False)
    return parser


def cmd_list(args) -> int:
    for b in builtins.BUILTINS.values():
        print(f"{b.name:24s} {b.kind:10s} index {b.expected}  {b.description}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (IndexConditionError, VerificationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MATH
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
