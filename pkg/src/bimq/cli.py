"""Operator entry point.

Subcommands: ``gen-fixture`` (synthetic store documents), ``eval`` and
``ablate`` (the scoring harness), ``chat`` (one-shot or stdin-driven queries),
``replay`` (chat pinned to a recorded cassette), and ``serve`` (HTTP +
WebSocket service). Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import BimqError
from .evaluate import EvalConfig, LabelMap, ablation_matrix, load_dataset, report, run_eval
from .fixture import FixtureSpec, generate_fixture
from .llm import Backend, RecordingBackend, RemoteBackend, ScriptBackend, open_replay
from .pipeline import PipelineConfig, run_query
from .prompts import DEFAULT_BUDGET, Catalog, PromptComposition
from .store import load_store


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv, os.environ)


def dispatch(argv: list[str], env) -> int:
    parser = build_parser(env)
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.handler(args, parser)
    except BimqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def build_parser(env) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bimq",
        description="Natural-language assistant over building-component databases.")
    sub = parser.add_subparsers(dest="command")
    parser.set_defaults(command=None)

    gen = sub.add_parser("gen-fixture", help="write a deterministic synthetic store")
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--categories", type=int, default=6)
    gen.add_argument("--records", type=int, default=600)
    gen.set_defaults(handler=cmd_gen_fixture)

    for name, handler in (("eval", cmd_eval), ("ablate", cmd_ablate)):
        cmd = sub.add_parser(name, help=f"{name} a dataset against a store")
        _add_store_flags(cmd, env)
        _add_backend_flags(cmd, env)
        cmd.add_argument("--dataset", required=True)
        cmd.add_argument("--label-map", required=True)
        cmd.add_argument("--scenario", choices=("zero", "few"), default="zero")
        cmd.add_argument("--fraction", type=float, default=0.02)
        cmd.add_argument("--seed", type=int, default=0)
        cmd.add_argument("--no-gating", action="store_true")
        cmd.add_argument("--exclude-exemplars", action="store_true")
        cmd.add_argument("--confusion-csv", metavar="PATH",
                         help="also write the confusion matrix as CSV")
        cmd.add_argument("--json", action="store_true")
        cmd.set_defaults(handler=handler)

    for name, handler in (("chat", cmd_chat), ("replay", cmd_replay)):
        cmd = sub.add_parser(name, help="answer queries from flags or stdin")
        _add_store_flags(cmd, env)
        if name == "chat":
            _add_backend_flags(cmd, env)
        else:
            cmd.add_argument("--cassette", default=env.get("BIMQ_CASSETTE"))
        cmd.add_argument("--query", action="append", default=[],
                         help="repeatable; omit to read queries from stdin")
        cmd.add_argument("--json", action="store_true")
        cmd.set_defaults(handler=handler)

    serve = sub.add_parser("serve", help="run the HTTP + WebSocket service")
    _add_store_flags(serve, env)
    _add_backend_flags(serve, env)
    serve.add_argument("--bind", default=env.get("BIMQ_BIND", "127.0.0.1:8080"))
    serve.add_argument("--static", default=env.get("BIMQ_STATIC"),
                       help="directory with the web UI bundle")
    serve.add_argument("--include-prompts", action="store_true",
                       help="include full prompt texts in trace events")
    serve.set_defaults(handler=cmd_serve)
    return parser


def _add_store_flags(cmd, env) -> None:
    cmd.add_argument("--store", default=env.get("BIMQ_STORE"))
    cmd.add_argument("--composition", default="SYS,DB,TASK,FEW",
                     help="comma list of SYS,DB,TASK,FEW")
    cmd.add_argument("--budget", type=int,
                     default=int(env.get("BIMQ_BUDGET", DEFAULT_BUDGET)))
    cmd.add_argument("--catalog", default=env.get("BIMQ_CATALOG"),
                     help="prompt text catalog overriding the built-in one")


def _add_backend_flags(cmd, env) -> None:
    cmd.add_argument("--backend", choices=("remote", "script", "replay"), default="script")
    cmd.add_argument("--script", help="JSON file with a list of scripted replies")
    cmd.add_argument("--cassette", default=env.get("BIMQ_CASSETTE"))
    cmd.add_argument("--record", action="store_true",
                     help="record calls into --cassette on success")
    cmd.add_argument("--endpoint", default=env.get("BIMQ_ENDPOINT"))
    cmd.add_argument("--api-key", default=env.get("BIMQ_API_KEY", ""))
    cmd.add_argument("--model", default=env.get("BIMQ_MODEL", ""))


def _require_store(args, parser):
    if not args.store:
        parser.error("--store is required (or set BIMQ_STORE)")
    return load_store(args.store)


def _composition(args, parser) -> PromptComposition:
    try:
        return PromptComposition.parse(args.composition)
    except ValueError as exc:
        parser.error(str(exc))


def _catalog(args):
    return Catalog.load(args.catalog) if args.catalog else None


def _resolve_backend(args, parser) -> Backend:
    if args.backend == "remote":
        if not args.endpoint:
            parser.error("--backend remote needs --endpoint (or BIMQ_ENDPOINT)")
        if args.script:
            parser.error("--script conflicts with --backend remote")
        backend = RemoteBackend(args.endpoint, api_key=args.api_key, model=args.model)
    elif args.backend == "script":
        if not args.script:
            parser.error("--backend script needs --script")
        script = json.loads(Path(args.script).read_text(encoding="utf-8"))
        if not isinstance(script, list):
            parser.error("--script file must hold a JSON list of strings")
        backend = ScriptBackend([str(s) for s in script])
    else:
        if not args.cassette:
            parser.error("--backend replay needs --cassette")
        if args.record:
            parser.error("--record conflicts with --backend replay")
        backend = open_replay(args.cassette)
    if args.record:
        if not args.cassette:
            parser.error("--record needs --cassette to write to")
        backend = RecordingBackend(backend)
    return backend


def _save_recording(args, backend) -> None:
    if isinstance(backend, RecordingBackend):
        backend.cassette.save(args.cassette)
        print(f"recorded {len(backend.cassette.entries)} calls to {args.cassette}",
              file=sys.stderr)


def cmd_gen_fixture(args, parser) -> int:
    try:
        spec = FixtureSpec(categories=args.categories, records=args.records)
    except ValueError as exc:
        parser.error(str(exc))
    doc = generate_fixture(spec, seed=args.seed)
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {args.out}", file=sys.stderr)
    return 0


def _eval_config(args, parser) -> EvalConfig:
    return EvalConfig(
        scenario=args.scenario,
        fewshot_fraction=args.fraction,
        seed=args.seed,
        composition=_composition(args, parser),
        gated=not args.no_gating,
        exclude_exemplars_from_test=args.exclude_exemplars,
        budget=args.budget,
        catalog=_catalog(args),
    )


def cmd_eval(args, parser) -> int:
    store = _require_store(args, parser)
    backend = _resolve_backend(args, parser)
    dataset = load_dataset(args.dataset)
    label_map = LabelMap.load(args.label_map)
    metrics = run_eval(store, backend, dataset, label_map, _eval_config(args, parser))
    print(report(metrics, "json" if args.json else "table"))
    if args.confusion_csv:
        Path(args.confusion_csv).write_text(report(metrics, "confusion-csv"), encoding="utf-8")
    _save_recording(args, backend)
    return 0


def cmd_ablate(args, parser) -> int:
    store = _require_store(args, parser)
    backend = _resolve_backend(args, parser)
    dataset = load_dataset(args.dataset)
    label_map = LabelMap.load(args.label_map)
    matrix = ablation_matrix(store, backend, dataset, label_map, _eval_config(args, parser))
    print(report(matrix, "json" if args.json else "table"))
    _save_recording(args, backend)
    return 0


def _pipeline_config(args, parser) -> PipelineConfig:
    return PipelineConfig(
        composition=_composition(args, parser),
        budget=args.budget,
        catalog=_catalog(args),
    )


def _run_chat(args, parser, backend) -> int:
    from .service import answer_event  # deferred: keeps chat import-light

    store = _require_store(args, parser)
    config = _pipeline_config(args, parser)
    queries = args.query or [line.strip() for line in sys.stdin if line.strip()]
    for text in queries:
        answer = run_query(store, backend, config, text)
        if args.json:
            print(json.dumps(answer_event(answer, request_id=""), ensure_ascii=False))
        else:
            print(answer.text)
            if answer.retrieved_ids:
                print(f"  retrieved: {', '.join(answer.retrieved_ids)}")
    _save_recording(args, backend)
    return 0


def cmd_chat(args, parser) -> int:
    return _run_chat(args, parser, _resolve_backend(args, parser))


def cmd_replay(args, parser) -> int:
    if not args.cassette:
        parser.error("replay needs --cassette")
    args.record = False
    return _run_chat(args, parser, open_replay(args.cassette))


def cmd_serve(args, parser) -> int:
    import uvicorn

    from .errors import BindError
    from .service import ServiceConfig, create_app

    store = _require_store(args, parser)
    backend = _resolve_backend(args, parser)
    host, _, port_text = args.bind.rpartition(":")
    if not host or not port_text.isdigit():
        parser.error("--bind must look like host:port")
    config = ServiceConfig(
        pipeline=_pipeline_config(args, parser),
        include_prompts=args.include_prompts,
        static_dir=args.static,
    )
    app = create_app(store, backend, config)
    try:
        uvicorn.run(app, host=host, port=int(port_text), log_level="warning")
    except OSError as exc:
        raise BindError(f"cannot bind {args.bind}: {exc}") from exc
    return 0


if __name__ == "__main__":
    sys.exit(main())
