"""The ``laf`` command line."""

from __future__ import annotations

import argparse
import os
import signal
import socketserver
import sys
import tempfile
from pathlib import Path

from . import dcr, layerops, transducers
from .dump import escape, file_resolver, read_dump, write_dump
from .errors import LafError

EXIT_OK, EXIT_FINDINGS, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class InputError(LafError):
    pass


# -- helpers --------------------------------------------------------------

def _atomic_write(path: str, data: bytes) -> None:
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _registry(args) -> dcr.Registry:
    path = args.registry or os.environ.get("LAF_REGISTRY")
    if path:
        return dcr.registry_load(Path(path).read_bytes(), source=path)
    return dcr.load_seed()


def _dcs(path: str | None, reg: dcr.Registry, fmt: str | None = None) -> dcr.DCS | None:
    if path:
        return dcr.dcs_load(Path(path).read_bytes(), reg)
    if fmt:
        return transducers.load_example_dcs(transducers.MANIFEST[fmt].dcs, reg)
    return None


def _read(path: str):
    data = Path(path).read_bytes()
    return read_dump(data, file_resolver(Path(path).resolve().parent))


def _out(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


# -- commands -------------------------------------------------------------

def cmd_ingest(args) -> int:
    reg = _registry(args)
    dcs = _dcs(args.dcs, reg, args.format)
    out = Path(args.out)
    primary = out.with_suffix(".txt")
    if primary == out:
        raise InputError(f"--out {out} would collide with its primary text file")
    doc = transducers.INGEST[args.format](Path(args.input).read_bytes(), dcs, reg,
                                          uri=primary.name)
    for data in doc.sources.values():
        _atomic_write(str(primary), data)
    _atomic_write(args.out, write_dump(doc))
    return EXIT_OK


def cmd_emit(args) -> int:
    reg = _registry(args)
    dcs = _dcs(args.dcs, reg, args.format)
    doc = _read(args.dump)
    _atomic_write(args.out, transducers.EMIT[args.format](doc, dcs))
    return EXIT_OK


def cmd_extract(args) -> int:
    doc = _read(args.dump)
    lids = [l for l in args.layers.split(",") if l]
    _atomic_write(args.out, write_dump(layerops.extract(doc, lids)))
    return EXIT_OK


def cmd_merge(args) -> int:
    docs = [_read(p) for p in args.dumps]
    _atomic_write(args.out, write_dump(layerops.merge(docs)))
    return EXIT_OK


def cmd_diff(args) -> int:
    reg = _registry(args)
    dcs = _dcs(args.dcs, reg)
    if dcs is not None:
        reg = dcs.registry(reg)
    report = layerops.diff(_read(args.dump), args.layer_a, args.layer_b, args.descriptor, reg)
    _out(report.format())
    return EXIT_FINDINGS if report.has_findings else EXIT_OK


def cmd_validate(args) -> int:
    reg = _registry(args)
    dcs = _dcs(args.dcs, reg)
    if dcs is not None:
        reg = dcs.registry(reg)
    constraints = None
    if args.constraints:
        constraints = layerops.constraints_load(Path(args.constraints).read_bytes())
    report = layerops.validate(_read(args.dump), reg, constraints)
    _out(report.format())
    return EXIT_OK if report.ok else EXIT_FINDINGS


def cmd_normalize(args) -> int:
    reg = _registry(args)
    dcs = _dcs(args.dcs, reg)
    doc = dcr.dcs_apply(_read(args.dump), dcs, reg)
    _atomic_write(args.out, write_dump(doc))
    return EXIT_OK


def _lookup_line(reg: dcr.Registry, eid: str, lang: str) -> str:
    view = reg.lookup(eid, lang)
    return "\t".join([view.id, view.lang, escape(view.name), escape(view.definition)])


def cmd_registry_lookup(args) -> int:
    reg = _registry(args)
    view = reg.lookup(args.id, args.lang)
    if view.fallback:
        print(f"note: no {args.lang} entry, showing {view.lang}", file=sys.stderr)
    _out(f"{view.name}\n{view.definition}\n")
    return EXIT_OK


class _LookupHandler(socketserver.StreamRequestHandler):
    def handle(self):
        for raw in self.rfile:
            line = raw.decode("utf-8", "replace").rstrip("\r\n")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != 3 or parts[0] != "GET":
                reply = "ERR\t" + escape("expected: GET <id> <lang>")
            else:
                try:
                    reply = "OK\t" + _lookup_line(self.server.registry, parts[1], parts[2])
                except LafError as exc:
                    reply = "ERR\t" + escape(str(exc))
            self.wfile.write((reply + "\n").encode("utf-8"))
            self.wfile.flush()


class _Server(socketserver.ThreadingMixIn, socketserver.UnixStreamServer):
    daemon_threads = True


def cmd_registry_serve(args) -> int:
    reg = _registry(args)
    path = args.socket
    if os.path.exists(path):
        os.unlink(path)

    def stop(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, stop)
    with _Server(path, _LookupHandler) as server:
        server.registry = reg
        print(f"serving {len(reg)} entries on {path}", file=sys.stderr, flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            os.unlink(path)
    return EXIT_OK


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laf", description="Stand-off annotation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)
    formats = sorted(transducers.INGEST)

    def common(sp, dcs=True):
        sp.add_argument("--registry", help="registry file (default: $LAF_REGISTRY or the seed)")
        if dcs:
            sp.add_argument("--dcs", help="data category specification file")

    sp = sub.add_parser("ingest", help="convert a legacy file to a dump")
    sp.add_argument("--format", required=True, choices=formats)
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("emit", help="convert a dump back to a legacy format")
    sp.add_argument("--format", required=True, choices=formats)
    common(sp)
    sp.add_argument("dump")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_emit)

    sp = sub.add_parser("extract", help="keep some layers and their dependencies")
    sp.add_argument("dump")
    sp.add_argument("--layers", required=True, help="comma-separated layer ids")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("merge", help="combine dumps over the same primary data")
    sp.add_argument("dumps", nargs="+")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_merge)

    sp = sub.add_parser("diff", help="compare two layers on one descriptor")
    common(sp)
    sp.add_argument("dump")
    sp.add_argument("layer_a")
    sp.add_argument("layer_b")
    sp.add_argument("--descriptor", required=True)
    sp.set_defaults(func=cmd_diff)

    sp = sub.add_parser("validate", help="check structural and category constraints")
    common(sp)
    sp.add_argument("dump")
    sp.add_argument("--constraints")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("normalize", help="map scheme categories to registry ids")
    sp.add_argument("--dcs", required=True)
    sp.add_argument("--registry", help="registry file (default: $LAF_REGISTRY or the seed)")
    sp.add_argument("dump")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_normalize)

    sp = sub.add_parser("registry", help="query the data category registry")
    rsub = sp.add_subparsers(dest="action", required=True)
    lk = rsub.add_parser("lookup")
    lk.add_argument("id")
    lk.add_argument("--lang", default="en")
    common(lk, dcs=False)
    lk.set_defaults(func=cmd_registry_lookup)
    sv = rsub.add_parser("serve")
    sv.add_argument("--socket", required=True)
    common(sv, dcs=False)
    sv.set_defaults(func=cmd_registry_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LafError, OSError, UnicodeDecodeError) as exc:
        print(f"laf {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"laf {args.command}: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
