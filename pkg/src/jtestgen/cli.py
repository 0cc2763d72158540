"""Command-line entry point: ``jtestgen analyze|mine-seeds|generate|report``."""

from __future__ import annotations

import argparse
import fnmatch
import json
import logging
import sys
import threading
from dataclasses import replace
from pathlib import Path
from typing import Callable, Sequence

from . import __version__
from .branch_steer import FunctionIntention, assemble_steer_prompt, extract_branch_points, BranchIntention, mechanical_intention
from .code_model import Corpus, MethodInfo, SourceClass, load_project
from .config import RunConfig, load_config
from .errors import ConfigError, GenerationFailure, GenerationTimeout, JTestGenError, ToolMissing
from .llm_gateway import Gateway, HttpBackend, RecordingBackend, ReplayBackend, StubBackend, Transcript, load_stub_script
from .pipeline import Services, aggregate, assign_test_names, load_records, run_corpus
from .prompts import Templates
from .reporting import analyze_corpus, dump_json, write_aggregate
from .seed_miner import EvoSuiteConfig, EvoSuiteTestClass, build_seed_prompt, ingest_evosuite_tests, mine_exemplars, run_evosuite, template_prefix
from .toolchain import JavaToolchain, Toolchain, ToolchainConfig

log = logging.getLogger("jtestgen")

EXIT_OK, EXIT_CONFIG, EXIT_TOOLCHAIN, EXIT_GATEWAY, EXIT_NO_WORK = 0, 2, 3, 4, 5

ToolchainFactory = Callable[[RunConfig], Toolchain]
GatewayFactory = Callable[[RunConfig], Gateway]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", type=Path, help="YAML run configuration")
    p.add_argument("--project", type=Path, help="project root (overrides config)")
    p.add_argument("-o", "--output", type=Path, help="output root (overrides config)")
    p.add_argument("--exclude", action="append", default=[], help="glob of source files to skip (repeatable)")
    p.add_argument("--project-name", help="label used in per-project report rows")


def _add_selection(p: argparse.ArgumentParser) -> None:
    p.add_argument("--filter", action="append", default=[], metavar="GLOB",
                   help="focal method glob over 'pkg.Class#method' or signatures (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jtestgen", description="Seeded, branch-steered JUnit test generation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="complexity report for every focal method")
    _add_common(p)

    p = sub.add_parser("mine-seeds", help="mine invocation exemplars and write seed prompts")
    _add_common(p)
    _add_selection(p)

    p = sub.add_parser("generate", help="run the generation pipeline")
    _add_common(p)
    _add_selection(p)
    p.add_argument("--backend", choices=("live", "replay", "stub", "record"), help="override the completion backend")
    p.add_argument("--transcript", type=Path, help="transcript file for replay/record")
    p.add_argument("--workers", type=int, help="concurrent sessions")
    p.add_argument("--dry-run", action="store_true", help="write prompts only; no gateway or toolchain calls")
    p.add_argument("--no-resume", action="store_true", help="ignore existing session records")

    p = sub.add_parser("report", help="aggregate session records")
    p.add_argument("records", nargs="+", type=Path)
    p.add_argument("-o", "--output", type=Path, default=Path("report"))
    p.add_argument("-c", "--config", type=Path, help="YAML run configuration (for weights)")
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "project", None):
        cfg.project_root = args.project
    if getattr(args, "output", None):
        cfg.output_root = args.output
    if getattr(args, "exclude", None):
        cfg.exclude = cfg.exclude + list(args.exclude)
    if getattr(args, "project_name", None):
        cfg.project_name = args.project_name
    if getattr(args, "backend", None):
        cfg.backend.kind = args.backend
    if getattr(args, "transcript", None):
        cfg.backend.transcript = args.transcript
    if getattr(args, "workers", None):
        cfg.session = replace(cfg.session, worker_cap=args.workers)
    if not cfg.project_name:
        cfg.project_name = cfg.project_root.resolve().name
    return cfg


def select_focals(corpus: Corpus, patterns: Sequence[str]) -> list[tuple[SourceClass, MethodInfo]]:
    focals = corpus.focal_methods()
    if not patterns:
        return focals
    out = []
    for cls, m in focals:
        keys = (m.signature, f"{cls.fqcn}#{m.name}", f"{cls.name}#{m.name}")
        if any(fnmatch.fnmatchcase(k, pat) for pat in patterns for k in keys):
            out.append((cls, m))
    return out


def default_toolchain(cfg: RunConfig) -> Toolchain:
    t = cfg.toolchain
    tc = ToolchainConfig.from_env()
    for name, value in (("jdk_home", t.jdk_home), ("junit_jar", t.junit_jar), ("hamcrest_jar", t.hamcrest_jar),
                        ("jacoco_agent_jar", t.jacoco_agent), ("jacoco_cli_jar", t.jacoco_cli), ("project_classes", t.project_classes)):
        if value is not None:
            setattr(tc, name, value)
    tc.project_classpath = list(t.classpath)
    missing = tc.missing_components()
    if missing:
        raise ToolMissing("toolchain incomplete: " + ", ".join(missing))
    cfg.output_root.mkdir(parents=True, exist_ok=True)
    return JavaToolchain(tc, log_path=cfg.output_root / "toolchain.ndjson")


def default_gateway(cfg: RunConfig) -> Gateway:
    b = cfg.backend
    if b.kind == "replay":
        return ReplayBackend(Transcript.load(b.transcript))
    if b.kind == "stub":
        import yaml

        return StubBackend(load_stub_script(yaml.safe_load(b.stub_script.read_text(encoding="utf-8")) or []))
    live = HttpBackend(b.base_url, b.api_key_env, max_in_flight=b.max_in_flight,
                       tokens_per_minute=b.tokens_per_minute, context_tokens=b.context_tokens)
    if b.kind == "record":
        if b.transcript is None:
            raise ConfigError("record backend needs a transcript path")
        transcript = Transcript(metadata={"model_id": cfg.session.model_id, "template_version": __version__})
        return RecordingBackend(live, transcript, b.transcript)
    return live


def evosuite_provider(cfg: RunConfig) -> Callable[[SourceClass], list[EvoSuiteTestClass]] | None:
    t = cfg.toolchain
    if t.evosuite_tests is not None:
        root = t.evosuite_tests

        def from_dir(cls: SourceClass) -> list[EvoSuiteTestClass]:
            out = []
            for path in sorted(root.rglob(f"{cls.name}_ESTest.java")):
                out.extend(ingest_evosuite_tests(path.read_text(encoding="utf-8"), path.relative_to(root).as_posix()))
            return out
        return from_dir
    if t.evosuite_jar is not None:
        cache: dict[str, list[EvoSuiteTestClass]] = {}
        lock = threading.Lock()

        def generate(cls: SourceClass) -> list[EvoSuiteTestClass]:
            with lock:
                if cls.fqcn not in cache:
                    ev = EvoSuiteConfig(t.evosuite_jar, t.evosuite_budget, cfg.output_root / "evosuite", t.jdk_home, t.classpath)
                    try:
                        cache[cls.fqcn] = run_evosuite(cls, ev)
                    except (ToolMissing, GenerationFailure, GenerationTimeout) as exc:
                        log.warning("EvoSuite unavailable for %s: %s", cls.fqcn, exc)
                        cache[cls.fqcn] = []
                return cache[cls.fqcn]
        return generate
    return None


# --------------------------------------------------------------------------
# commands


def cmd_analyze(cfg: RunConfig) -> int:
    cfg.validate(need_backend=False)
    corpus = load_project(cfg.project_root, cfg.exclude)
    report = analyze_corpus(corpus, cfg.weights)
    out = cfg.output_root / "analysis"
    out.mkdir(parents=True, exist_ok=True)
    (out / "complexity.json").write_text(dump_json(report.to_dict()), encoding="utf-8")
    (out / "complexity.csv").write_text(report.to_csv(), encoding="utf-8")
    print(f"analyzed {len(report.per_focal)} focal methods, {len(report.per_context)} invocation contexts -> {out}")
    return EXIT_OK


def cmd_mine_seeds(cfg: RunConfig, patterns: Sequence[str]) -> int:
    cfg.validate(need_backend=False)
    corpus = load_project(cfg.project_root, cfg.exclude)
    focals = select_focals(corpus, patterns)
    if not focals:
        print("0 sessions: no focal method matched")
        return EXIT_NO_WORK
    names = assign_test_names(corpus.focal_methods())
    templates = Templates(cfg.templates_dir)
    provider = evosuite_provider(cfg)
    out = cfg.output_root / "mining"
    (out / "prompts").mkdir(parents=True, exist_ok=True)
    summary = []
    for cls, m in focals:
        mining = mine_exemplars(cls, corpus.classes, m, provider(cls) if provider else [])
        seed_name = names[m.signature][1]
        prompt = build_seed_prompt(m, cls, mining.exemplars, seed_name, templates, cfg.session.prompt_budget)
        (out / "prompts" / f"{seed_name}.txt").write_text(prompt, encoding="utf-8")
        summary.append({
            "signature": m.signature,
            "path": mining.path,
            "source_exemplars": mining.source_count,
            "evosuite_exemplars": mining.evosuite_count,
            "exemplars": [{"origin": e.origin, "provenance": list(e.provenance), "code": e.code} for e in mining.exemplars],
        })
    (out / "exemplars.json").write_text(dump_json(summary), encoding="utf-8")
    print(f"mined exemplars for {len(summary)} focal methods -> {out}")
    return EXIT_OK


def _dry_run(cfg: RunConfig, corpus: Corpus, focals, provider) -> int:
    names = assign_test_names(corpus.focal_methods())
    templates = Templates(cfg.templates_dir)
    out = cfg.output_root / "prompts"
    out.mkdir(parents=True, exist_ok=True)
    for cls, m in focals:
        test_name, seed_name = names[m.signature]
        mining = mine_exemplars(cls, corpus.classes, m, provider(cls) if provider else [])
        seed_prompt = build_seed_prompt(m, cls, mining.exemplars, seed_name, templates, cfg.session.prompt_budget)
        intentions = [BranchIntention(p, mechanical_intention(p)) for p in extract_branch_points(m)]
        func = FunctionIntention(f"Behaviour of {m.signature}")
        steer = assemble_steer_prompt(template_prefix(m, cls, mining.exemplars, test_name), intentions, func,
                                      m.content, test_name, templates, cfg.session.prompt_budget)
        (out / f"{seed_name}.txt").write_text(seed_prompt, encoding="utf-8")
        (out / f"{test_name}.steer.txt").write_text(steer.rendered, encoding="utf-8")
    print(f"dry run: wrote prompts for {len(focals)} focal methods -> {out}")
    return EXIT_OK


def cmd_generate(
    cfg: RunConfig,
    patterns: Sequence[str],
    dry_run: bool = False,
    resume: bool = True,
    toolchain_factory: ToolchainFactory | None = None,
    gateway_factory: GatewayFactory | None = None,
) -> int:
    cfg.validate(need_backend=not dry_run)
    corpus = load_project(cfg.project_root, cfg.exclude)
    focals = select_focals(corpus, patterns)
    if not focals:
        print("0 sessions: no focal method matched")
        return EXIT_NO_WORK
    provider = evosuite_provider(cfg)
    if dry_run:
        return _dry_run(cfg, corpus, focals, provider)
    try:
        toolchain = (toolchain_factory or default_toolchain)(cfg)
    except ToolMissing as exc:
        print(f"toolchain missing: {exc}", file=sys.stderr)
        return EXIT_TOOLCHAIN
    gateway = (gateway_factory or default_gateway)(cfg)
    services = Services(
        gateway=gateway,
        toolchain=toolchain,
        corpus=corpus,
        workspace_root=cfg.output_root / "work",
        output_root=cfg.output_root,
        templates=Templates(cfg.templates_dir),
        evosuite=provider,
        project=cfg.project_name,
    )
    records_path = cfg.output_root / "records.ndjson"
    if not resume and records_path.exists():
        records_path.unlink()
    records = run_corpus(focals, cfg.session, services, records_path, resume=resume)
    report = aggregate(records, weights=cfg.weights)
    write_aggregate(report, records, cfg.output_root / "report")
    print(f"{len(records)} sessions: compile {report.total.compiled}/{len(records)}, passed {report.total.passed}/{len(records)}")
    if records and all(r.outcome.failure_class == "toolchain_error" for r in records):
        return EXIT_TOOLCHAIN
    if records and cfg.backend.kind in ("live", "record") and all(r.outcome.failure_class == "gateway_error" for r in records):
        return EXIT_GATEWAY
    return EXIT_OK


def cmd_report(paths: Sequence[Path], out_dir: Path, cfg: RunConfig | None = None) -> int:
    records, skipped = [], 0
    for p in paths:
        if not p.exists():
            raise ConfigError(f"record file not found: {p}")
        rs, bad = load_records(p)
        records.extend(rs)
        skipped += bad
    report = aggregate(records, weights=cfg.weights if cfg else None, skipped_records=skipped)
    paths_out = write_aggregate(report, records, out_dir)
    print(f"aggregated {len(records)} records ({skipped} skipped) -> {paths_out['markdown']}")
    return EXIT_OK


def main(
    argv: Sequence[str] | None = None,
    toolchain_factory: ToolchainFactory | None = None,
    gateway_factory: GatewayFactory | None = None,
) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            cfg = load_config(args.config) if args.config else None
            return cmd_report(args.records, args.output, cfg)
        cfg = _resolve(args)
        if args.command == "analyze":
            return cmd_analyze(cfg)
        if args.command == "mine-seeds":
            return cmd_mine_seeds(cfg, args.filter)
        return cmd_generate(cfg, args.filter, args.dry_run, not args.no_resume, toolchain_factory, gateway_factory)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except JTestGenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
