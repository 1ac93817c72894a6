"""Command-line entry points: compile scripts to SQL, print rewrite
suggestions as script diffs, replay-and-verify notebook containers, and
serve the HTTP API."""

from __future__ import annotations

import argparse
import difflib
import json
import sys
from pathlib import Path

from . import lang, notebook as nbmod, rewriter, sqlcompile


def _cmd_compile(args: argparse.Namespace) -> int:
    script = lang.parse_script(Path(args.script).read_text(encoding="utf-8"))
    compile_fn = (sqlcompile.compile_positional if args.positional
                  else sqlcompile.compile_script)
    query = compile_fn(script)
    print(query.text)
    if args.manifest:
        Path(args.manifest).write_text(query.manifest_json(), encoding="utf-8")
        print(f"-- manifest written to {args.manifest}", file=sys.stderr)
    return 0


def _cmd_rewrite(args: argparse.Namespace) -> int:
    script = lang.parse_script(Path(args.script).read_text(encoding="utf-8"))
    suggestions = rewriter.suggest_rewrites(script)
    if not suggestions:
        print("no suggestions")
        return 0
    original = (lang.render_script(script) + "\n").splitlines(keepends=True)
    for s in suggestions:
        rewritten = lang.render_script(rewriter.apply_suggestion(script, s)) + "\n"
        diff = difflib.unified_diff(
            original, rewritten.splitlines(keepends=True),
            fromfile=args.script, tofile=f"{args.script} ({s.kind.value})")
        print(f"== {s.kind.value} {s.suggestion_id}"
              + (" (verified)" if s.verified else " (data-dependent)"))
        if s.evidence:
            print(f"   evidence: {json.dumps(dict(s.evidence), default=str)}")
        sys.stdout.writelines(diff)
        print()
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    nb = nbmod.load(args.notebook)
    problems = nbmod.verify(nb)
    for branch_name, pages in sorted(nb.branches.items()):
        for page in pages:
            print(f"{branch_name}/{page.name}: {page.output_hash[:16]} "
                  f"({len(page.script.statements)} statements)")
    if problems:
        for problem in problems:
            print(f"FAIL {problem}", file=sys.stderr)
        return 1
    print("all pages replay to their recorded outputs")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import NotebookStore, create_app

    store = NotebookStore()
    data_dir = Path(args.data_dir) if args.data_dir else None
    if data_dir and data_dir.is_dir():
        for path in sorted(data_dir.glob("*.vznb")):
            store.create(nbmod.load(str(path)), notebook_id=path.stem)
            print(f"loaded {path.stem}", file=sys.stderr)
    app = create_app(store, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="vizual",
        description="curation scripts: compile, rewrite, replay, serve")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a .vizual script to SQL")
    p.add_argument("script")
    p.add_argument("--positional", action="store_true",
                   help="recognize running-accumulation column patterns")
    p.add_argument("--manifest", help="write the source-table manifest here")
    p.set_defaults(fn=_cmd_compile)

    p = sub.add_parser("rewrite", help="print rewrite suggestions as diffs")
    p.add_argument("script")
    p.set_defaults(fn=_cmd_rewrite)

    p = sub.add_parser("run", help="replay a notebook container and verify outputs")
    p.add_argument("notebook")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("serve", help="serve the HTTP API")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None,
                   help="directory of .vznb containers to load at startup")
    p.add_argument("--ui", default=None, help="static UI directory to mount at /")
    p.set_defaults(fn=_cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
