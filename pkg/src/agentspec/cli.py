"""Command line surface.

Subcommands: ``run`` (drive one agent session), ``validate-spec`` (lint a
spec and its tool wiring), ``validate-prompt`` (check few-shot examples
against the behavior), ``eval`` (score a dataset, optionally with the
non-agent-then-agent hybrid), ``compile`` (dump the automaton).

Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime
failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backends import HttpBackend, HttpConfig, MockBackend, load_mock_script
from .errors import AgentError, BudgetExhausted
from .harness import (
    SelfConsistencyConfig,
    emit_trace,
    evaluate_dataset,
    hybrid_run,
    load_spec,
    make_default_env,
    trace_records,
    validate_prompt,
)
from .runtime import RunConfig, run_session
from .spec import check_spec
from .toolbox import Corpus, build_registry

USAGE_ERROR, VALIDATION_FAILURE, RUNTIME_FAILURE = 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_backend_flags(p: argparse.ArgumentParser):
    p.add_argument("--backend", choices=("mock", "http"), default="mock")
    p.add_argument("--script", help="mock script file (required with --backend mock)")
    p.add_argument("--config", help="JSON config file for the http backend")


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--corpus", help="JSONL corpus for the Search/Lookup tools")
    p.add_argument("--preamble-file", help="instructions + few-shot examples, prepended untouched")
    p.add_argument("--chunk-size", type=int, default=256)
    p.add_argument("--max-steps", type=int, default=50)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, default=0.6, help="length normalization strength")
    p.add_argument("--no-summarizer", action="store_true", help="return raw numbered results instead")


def _build_parser() -> _Parser:
    parser = _Parser(prog="agentspec", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one agent session")
    p_run.add_argument("--spec", required=True, help="built-in agent name or spec file path")
    p_run.add_argument("--question", required=True)
    _add_backend_flags(p_run)
    _add_run_flags(p_run)
    p_run.add_argument("--trace-out", help="write the plain-text trace here")
    p_run.add_argument("--records-out", help="write per-event JSON records here")
    p_run.add_argument("--log-out", help="write the runtime event log here")

    p_vs = sub.add_parser("validate-spec", help="parse and lint a spec")
    p_vs.add_argument("--spec", required=True)
    p_vs.add_argument("--tools", help="comma-separated tool names to check :allowed against")
    p_vs.add_argument("--corpus", help="also warn when corpus sentences contain prompt strings")

    p_vp = sub.add_parser("validate-prompt", help="validate few-shot examples against the behavior")
    p_vp.add_argument("--spec", required=True)
    p_vp.add_argument("--prompt-file", required=True)

    p_eval = sub.add_parser("eval", help="evaluate a dataset")
    p_eval.add_argument("--spec", required=True, help="agent used (directly, or as hybrid fallback)")
    p_eval.add_argument("--non-agent-spec", help="self-consistency spec; enables the hybrid protocol")
    p_eval.add_argument("--dataset", required=True, help="JSONL with question/answer records")
    p_eval.add_argument("--k", type=int, default=5)
    p_eval.add_argument("--workers", type=int, default=1)
    p_eval.add_argument("--sc-temperature", type=float, default=0.7, help="self-consistency sampling temperature")
    p_eval.add_argument("--report-out", help="write machine-readable per-question records here")
    _add_backend_flags(p_eval)
    _add_run_flags(p_eval)

    p_c = sub.add_parser("compile", help="dump the compiled automaton")
    p_c.add_argument("--spec", required=True)
    p_c.add_argument("--dot", action="store_true", help="emit GraphViz DOT instead of the adjacency listing")
    p_c.add_argument("--out", help="write to a file instead of stdout")
    return parser


def _make_backend(args) -> MockBackend | HttpBackend:
    if args.backend == "mock":
        if not args.script:
            raise _UsageError("--backend mock requires --script")
        return load_mock_script(args.script)
    return HttpBackend(HttpConfig.from_env(getattr(args, "config", None)))


def _run_config(args) -> RunConfig:
    return RunConfig(
        chunk_size=args.chunk_size,
        max_steps=args.max_steps,
        max_retries=args.max_retries,
        temperature=args.temperature,
        seed=args.seed,
    )


def _cmd_run(args) -> int:
    spec = load_spec(args.spec)
    backend = _make_backend(args)
    corpus = Corpus.load(args.corpus) if args.corpus else None
    registry = build_registry(corpus)
    env = make_default_env(spec, registry, backend, alpha=args.alpha,
                           use_summarizer=not args.no_summarizer)
    preamble = Path(args.preamble_file).read_text(encoding="utf-8") if args.preamble_file else ""
    try:
        transcript = run_session(spec, preamble, args.question, backend, env, _run_config(args))
    except BudgetExhausted as err:
        print(f"run failed: {err}", file=sys.stderr)
        if err.transcript is not None:
            print(emit_trace(err.transcript), file=sys.stderr)
        return RUNTIME_FAILURE
    trace = emit_trace(transcript)
    if args.trace_out:
        Path(args.trace_out).write_text(trace + "\n", encoding="utf-8")
    else:
        print(trace)
    if args.records_out:
        rows = "\n".join(json.dumps(r, sort_keys=True) for r in trace_records(transcript))
        Path(args.records_out).write_text(rows + "\n", encoding="utf-8")
    if args.log_out:
        rows = "\n".join(json.dumps(r, sort_keys=True) for r in transcript.log)
        Path(args.log_out).write_text(rows + "\n", encoding="utf-8")
    return 0


def _cmd_validate_spec(args) -> int:
    spec = load_spec(args.spec)
    tool_names = set(args.tools.split(",")) if args.tools else set()
    corpus = Corpus.load(args.corpus) if args.corpus else None
    diagnostics = check_spec(spec, tool_names, corpus)
    for diag in diagnostics:
        print(f"{diag.severity}: [{diag.code}] {diag.message}")
    if not diagnostics:
        print(f"{spec.name}: ok ({len(spec.states)} states, "
              f"{spec.automaton.n_states} automaton states)")
    return VALIDATION_FAILURE if any(d.severity == "error" for d in diagnostics) else 0


def _cmd_validate_prompt(args) -> int:
    spec = load_spec(args.spec)
    text = Path(args.prompt_file).read_text(encoding="utf-8")
    reports = validate_prompt(spec, text)
    bad = 0
    for rep in reports:
        if rep.ok:
            print(f"example {rep.index}: conforming")
        else:
            bad += 1
            v = rep.verdict
            print(f"example {rep.index}: violation at offset {v.truncate_at}, "
                  f"expected one of {list(v.expected)}"
                  + (f", got {v.offending_symbol}" if v.offending_symbol else ""))
    return VALIDATION_FAILURE if bad else 0


def _cmd_eval(args) -> int:
    agent_spec = load_spec(args.spec)
    backend = _make_backend(args)
    corpus = Corpus.load(args.corpus) if args.corpus else None
    registry = build_registry(corpus)
    cfg = _run_config(args)
    sc_cfg = SelfConsistencyConfig(k=args.k, temperature=args.sc_temperature)
    non_agent = load_spec(args.non_agent_spec) if args.non_agent_spec else None

    def answer(record) -> dict:
        env = make_default_env(agent_spec, registry, backend, alpha=args.alpha,
                               use_summarizer=not args.no_summarizer, gold=record.answer)
        if non_agent is not None:
            result = hybrid_run(non_agent, agent_spec, backend, env, record.question,
                                sc_config=sc_cfg, run_config=cfg)
            t = result.transcript
            return {
                "predicted": result.answer,
                "agent_used": result.provenance,
                "corrections": t.corrections if t else 0,
                "env_calls": t.env_calls if t else 0,
                "steps": t.steps if t else 0,
            }
        try:
            t = run_session(agent_spec, "", record.question, backend, env, cfg)
            return {"predicted": t.final_answer(), "agent_used": "agent",
                    "corrections": t.corrections, "env_calls": t.env_calls, "steps": t.steps}
        except AgentError:
            return {"predicted": None, "agent_used": "failed"}

    try:
        report = evaluate_dataset(args.dataset, answer, workers=args.workers)
    except AgentError as err:
        print(f"eval failed: {err}", file=sys.stderr)
        return RUNTIME_FAILURE
    print(report.to_table())
    for warning in report.skipped:
        print(f"warning: {warning}", file=sys.stderr)
    if args.report_out:
        Path(args.report_out).write_text(report.to_jsonl() + "\n", encoding="utf-8")
    return 0


def _cmd_compile(args) -> int:
    spec = load_spec(args.spec)
    aut = spec.automaton
    text = aut.to_dot(spec.name.replace("-", "_")) if args.dot else aut.to_adjacency()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "validate-spec": _cmd_validate_spec,
    "validate-prompt": _cmd_validate_prompt,
    "eval": _cmd_eval,
    "compile": _cmd_compile,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return USAGE_ERROR
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return USAGE_ERROR
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return USAGE_ERROR
    except BudgetExhausted as err:
        print(f"runtime failure: {err}", file=sys.stderr)
        return RUNTIME_FAILURE
    except AgentError as err:
        # spec problems are validation failures; backend/env problems are runtime
        from .errors import BackendError, EnvError, SExprError, SpecError

        if isinstance(err, (SpecError, SExprError)):
            print(f"validation failure: {err}", file=sys.stderr)
            return VALIDATION_FAILURE
        if isinstance(err, (BackendError, EnvError)):
            print(f"runtime failure: {err}", file=sys.stderr)
            return RUNTIME_FAILURE
        print(f"error: {err}", file=sys.stderr)
        return VALIDATION_FAILURE


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
