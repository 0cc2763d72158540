"""Per-focal-method orchestration: Seed, Steer, then generate and repair.

A session spends a single iteration budget. Each iteration is one fresh
generation followed by at most ``delta`` repairs (the Fix loop). When the
three-stage pipeline ends in bottom, the remaining iterations are spent on the
two-stage fallback, which puts the mined exemplars straight into the steer
prompt instead of a refined seed.
"""

from __future__ import annotations

import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .branch_steer import (
    BranchIntention,
    FunctionIntention,
    assemble_steer_prompt,
    extract_branch_points,
    infer_branch_intentions,
    summarize_function_intention,
)
from .code_model import Corpus, MethodInfo, SourceClass
from .complexity import InitFeatures, count_init_features, cyclomatic_complexity
from .errors import GatewayError, JTestGenError, NoFocalCall, ParseError, ToolchainError, ToolchainMissing
from .llm_gateway import CompletionRequest, Gateway, Message
from .prompts import Templates, render
from .seed_miner import (
    DEFAULT_PROMPT_BUDGET,
    EvoSuiteTestClass,
    SeedPrefix,
    SeedSession,
    build_seed_prompt,
    mine_exemplars,
    refine_seed,
    template_prefix,
)
from .toolchain import (
    RUNTIME_EXCEPTION,
    CompileResult,
    Diagnostic,
    MethodCoverage,
    TestFailure,
    TestRunResult,
    Toolchain,
    apply_lightweight_fixes,
    extract_code,
    render_failures,
    make_test_class_name,
    truncate_diagnostics,
)

log = logging.getLogger(__name__)

STAGES = ("seeding", "steering", "generating", "repairing", "done", "failed")
FAILURE_CLASSES = ("compile_exhausted", "runtime_exhausted", "gateway_error", "toolchain_error")
SYSTEM_PROMPT = "You are an expert Java developer who writes JUnit 4 unit tests."


@dataclass(frozen=True)
class SessionConfig:
    delta: int = 5
    max_seed_rounds: int = 5
    max_iterations: int = 5
    fallback_enabled: bool = True
    worker_cap: int = 1
    model_id: str = "gpt-3.5-turbo"
    max_tokens: int = 2048
    prompt_budget: int = DEFAULT_PROMPT_BUDGET

    def __post_init__(self):
        for name in ("delta", "max_seed_rounds", "max_iterations", "worker_cap", "max_tokens", "prompt_budget"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def max_repair_calls(self) -> int:
        return self.max_seed_rounds + self.max_iterations * self.delta


@dataclass
class Outcome:
    compiled: bool = False
    tests_passed: bool = False
    partial_valid: bool = False
    coverage: MethodCoverage | None = None
    failure_class: str | None = None

    def __post_init__(self):
        if self.partial_valid and not (self.compiled and not self.tests_passed and self.coverage is not None):
            raise ValueError("partial_valid requires a compiled, failing test with coverage")
        if self.tests_passed and not self.compiled:
            raise ValueError("a passing test must have compiled")
        if self.failure_class is not None and self.failure_class not in FAILURE_CLASSES:
            raise ValueError(f"unknown failure class {self.failure_class!r}")

    @property
    def is_bottom(self) -> bool:
        return not self.compiled

    def to_dict(self) -> dict:
        return {
            "compiled": self.compiled,
            "tests_passed": self.tests_passed,
            "partial_valid": self.partial_valid,
            "coverage": self.coverage.to_dict() if self.coverage else None,
            "failure_class": self.failure_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Outcome":
        cov = d.get("coverage")
        return cls(
            bool(d["compiled"]), bool(d["tests_passed"]), bool(d.get("partial_valid", False)),
            MethodCoverage(**cov) if cov else None, d.get("failure_class"),
        )


@dataclass
class GenerationSession:
    focal_signature: str
    config: SessionConfig
    stage: str = "seeding"
    seed_rounds: int = 0
    repair_attempts: int = 0
    iterations: int = 0
    fallback_used: bool = False
    stage_log: list[str] = field(default_factory=lambda: ["seeding"])
    calls: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    seed: SeedPrefix | None = None
    steer_prompt: str | None = None
    candidates: list[str] = field(default_factory=list)

    def enter(self, stage: str, restart: bool = False) -> None:
        if stage not in STAGES:
            raise ValueError(stage)
        if self.stage in ("done", "failed"):
            raise RuntimeError(f"session already terminal ({self.stage})")
        order = {s: i for i, s in enumerate(STAGES[:4])}
        if not restart and stage in order and self.stage in order and order[stage] < order[self.stage]:
            # generating <-> repairing alternate inside the loop; anything else is a regression
            if not (self.stage == "repairing" and stage == "generating"):
                raise RuntimeError(f"stage regression {self.stage} -> {stage}")
        self.stage = stage
        if self.stage_log[-1] != stage:
            self.stage_log.append(stage)

    def check_budgets(self) -> None:
        c = self.config
        assert self.seed_rounds <= c.max_seed_rounds
        assert self.iterations <= c.max_iterations
        assert self.repair_attempts <= c.max_iterations * c.delta


@dataclass
class Services:
    gateway: Gateway
    toolchain: Toolchain
    corpus: Corpus
    workspace_root: Path
    output_root: Path | None = None
    templates: Templates = field(default_factory=Templates)
    evosuite: Callable[[SourceClass], Sequence[EvoSuiteTestClass]] | None = None
    project: str = ""
    names: dict[str, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.names:
            self.names = assign_test_names(self.corpus.focal_methods())
        self._symbols = self.corpus.symbol_table()

    @property
    def known_imports(self) -> dict[str, str]:
        return self._symbols


def assign_test_names(focals: Iterable[tuple[SourceClass, MethodInfo]]) -> dict[str, tuple[str, str]]:
    """Deterministic test/seed class names; overloads get a counter suffix."""
    taken: set[str] = set()
    seed_taken: set[str] = set()
    out = {}
    for cls, m in focals:
        out[m.signature] = (make_test_class_name(cls.name, m.name, taken), make_test_class_name(cls.name, m.name, seed_taken, "SeedTest"))
    return out


# --------------------------------------------------------------------------
# evaluation and Fix


@dataclass
class Evaluation:
    code: str
    compile: CompileResult
    run: TestRunResult | None = None

    @property
    def compiled(self) -> bool:
        return self.compile.success

    @property
    def passed(self) -> bool:
        return self.run is not None and self.run.all_passed


@dataclass
class FixResult:
    status: str  # passed | partial | bottom
    evaluation: Evaluation | None
    attempts: int


class _Context:
    """Per-session handles shared by generation, Fix and coverage."""

    def __init__(self, focal: MethodInfo, cls: SourceClass, cfg: SessionConfig, services: Services, session: GenerationSession):
        self.focal, self.cls, self.cfg, self.services, self.session = focal, cls, cfg, services, session
        self.test_name, self.seed_name = services.names.get(focal.signature) or (
            make_test_class_name(cls.name, focal.name), make_test_class_name(cls.name, focal.name, suffix="SeedTest"))
        self.workspace = services.workspace_root / self.test_name

    def ask(self, prompt: str, purpose: str, label: str) -> str:
        # the label keeps request keys unique per step so replays map one to one
        msgs = (Message("system", f"{SYSTEM_PROMPT} Step: {label}."), Message("user", prompt))
        req = CompletionRequest(msgs, model_id=self.cfg.model_id, max_tokens=self.cfg.max_tokens, purpose=purpose)
        self.session.calls.append(purpose)
        return self.services.gateway.complete(req).content

    def prepare(self, raw: str) -> str:
        return apply_lightweight_fixes(extract_code(raw), self.cls, self.services.known_imports, self.test_name)

    def evaluate(self, code: str) -> Evaluation:
        self.workspace.mkdir(parents=True, exist_ok=True)
        path = self.workspace / f"{self.test_name}.java"
        path.write_text(code, encoding="utf-8")
        self.session.candidates.append(code)
        tc = self.services.toolchain
        try:
            compiled = tc.compile(path, self.workspace)
        except ToolchainMissing:
            raise
        except ToolchainError as exc:
            self.session.errors.append(f"compile: {type(exc).__name__}: {exc}")
            return Evaluation(code, CompileResult((Diagnostic(path.name, 0, str(exc)),)))
        if not compiled.success:
            return Evaluation(code, compiled)
        try:
            run = tc.run_tests(path, self.workspace)
        except ToolchainMissing:
            raise
        except ToolchainError as exc:
            self.session.errors.append(f"run: {type(exc).__name__}: {exc}")
            failure = TestFailure("<runner>", type(exc).__name__, str(exc))
            run = TestRunResult({"<runner>": RUNTIME_EXCEPTION}, (failure,))
        return Evaluation(code, compiled, run)

    def repair_prompt(self, ev: Evaluation) -> str:
        if not ev.compiled:
            problem, diags = "does not compile", truncate_diagnostics(ev.compile.diagnostics)
        else:
            problem, diags = "compiles but fails when run", render_failures(ev.run) if ev.run else ""
        return render(
            self.services.templates["test_repair"],
            focal_signature=self.focal.signature,
            problem=problem,
            code=ev.code,
            diagnostics=diags,
            focal_body=self.focal.content,
            test_class_name=self.test_name,
        )


def fix(test: Evaluation, delta: int, ctx: _Context, label: str = "") -> FixResult:
    """Repair ``test`` for at most ``delta`` gateway round trips.

    Returns the first passing candidate, else the last candidate that compiled
    (flagged partial), else bottom. Gateway and transient toolchain errors use
    up an attempt.
    """
    if test.passed:
        raise ValueError("fix() needs a failing test")
    current = test
    last_compilable = test if test.compiled else None
    attempts = 0
    while attempts < delta:
        attempts += 1
        ctx.session.repair_attempts += 1
        ctx.session.enter("repairing")
        try:
            raw = ctx.ask(ctx.repair_prompt(current), "test_repair", f"{label}repair {attempts}")
        except GatewayError as exc:
            ctx.session.errors.append(f"repair {attempts}: {type(exc).__name__}: {exc}")
            continue
        ev = ctx.evaluate(ctx.prepare(raw))
        if ev.passed:
            return FixResult("passed", ev, attempts)
        if ev.compiled:
            last_compilable = ev
        current = ev
    if last_compilable is not None:
        return FixResult("partial", last_compilable, attempts)
    return FixResult("bottom", None, attempts)


# --------------------------------------------------------------------------
# a focal session


@dataclass
class SessionRecord:
    signature: str
    project: str
    class_name: str
    method: str
    test_class: str
    outcome: Outcome
    stage: str
    seed_status: str
    seed_rounds: int
    repair_attempts: int
    iterations: int
    fallback_used: bool
    exemplar_path: str
    exemplar_count: int
    calls: list[str]
    errors: list[str]
    ccn: int
    features: InitFeatures | None
    stage_log: list[str]
    test_file: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["outcome"] = self.outcome.to_dict()
        d["features"] = asdict(self.features) if self.features else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SessionRecord":
        d = dict(d)
        d["outcome"] = Outcome.from_dict(d["outcome"])
        d["features"] = InitFeatures(**d["features"]) if d.get("features") else None
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in d.items() if k in known})


def _measure(ctx: _Context, ev: Evaluation) -> MethodCoverage:
    path = ctx.workspace / f"{ctx.test_name}.java"
    path.write_text(ev.code, encoding="utf-8")
    report = ctx.services.toolchain.measure_coverage(path, [ctx.focal.signature], ctx.workspace)
    ctx.session.errors.extend(report.diagnostics)
    return report.get(ctx.focal.signature) or MethodCoverage()


def _iterate(ctx: _Context, steer_prompt: str, iterations: int, tag: str) -> FixResult | None:
    """Run up to ``iterations`` generate+Fix rounds; stop at the first non-bottom."""
    result = None
    for _ in range(iterations):
        ctx.session.iterations += 1
        i = ctx.session.iterations
        ctx.session.enter("generating")
        raw = ctx.ask(steer_prompt, "generate", f"{tag}generate {i}")
        ev = ctx.evaluate(ctx.prepare(raw))
        if ev.passed:
            return FixResult("passed", ev, 0)
        result = fix(ev, ctx.cfg.delta, ctx, f"{tag}iteration {i} ")
        if result.status != "bottom":
            return result
    return result


def _init_features(focal: MethodInfo, seed: SeedPrefix | None, exemplars) -> InitFeatures | None:
    contexts = []
    if seed is not None and seed.compile_status == "passed":
        contexts.append(seed.code)
    contexts.extend(e.code for e in exemplars)
    for c in contexts:
        try:
            return count_init_features(c, focal)
        except (NoFocalCall, ParseError):
            continue
    return None


def run_focal(focal: MethodInfo, cls: SourceClass, cfg: SessionConfig, services: Services) -> SessionRecord:
    """Run one session to a terminal stage. Never raises for per-session failures."""
    session = GenerationSession(focal.signature, cfg)
    ctx = _Context(focal, cls, cfg, services, session)
    outcome = Outcome(failure_class="compile_exhausted")
    final: Evaluation | None = None
    mining = None
    try:
        evo = list(services.evosuite(cls)) if services.evosuite else []
        mining = mine_exemplars(cls, services.corpus.classes, focal, evo)
        seed_prompt = build_seed_prompt(focal, cls, mining.exemplars, ctx.seed_name, services.templates, cfg.prompt_budget)
        candidate = ctx.ask(seed_prompt, "seed", "seed")
        seed_session = SeedSession(
            gateway=_LabelledGateway(ctx, "seed repair"),
            toolchain=services.toolchain,
            workspace=ctx.workspace / "seed",
            test_class_name=ctx.seed_name,
            known_imports=services.known_imports,
            model_id=cfg.model_id,
            max_tokens=cfg.max_tokens,
            templates=services.templates,
            max_rounds=cfg.max_seed_rounds,
        )
        seed = refine_seed(candidate, focal, cls, seed_session)
        session.seed = seed
        session.seed_rounds = seed.repair_rounds_used
        _write(services, "seeds", cls, ctx.seed_name, seed.code)

        session.enter("steering")
        points = extract_branch_points(focal)
        intentions: list[BranchIntention] = infer_branch_intentions(
            points, _LabelledGateway(ctx, "branch intentions"), focal, services.templates, cfg.model_id, cfg.max_tokens)
        func: FunctionIntention = summarize_function_intention(
            focal, cls, _LabelledGateway(ctx, "function intention"), services.templates, cfg.model_id, cfg.max_tokens)

        def steer(prefix: SeedPrefix) -> str:
            prompt = assemble_steer_prompt(prefix, intentions, func, focal.content, ctx.test_name, services.templates, cfg.prompt_budget)
            session.steer_prompt = prompt.rendered
            return prompt.rendered

        budget = cfg.max_iterations
        result = None
        if seed.compile_status == "passed":
            first = max(1, budget - 1) if cfg.fallback_enabled else budget
            result = _iterate(ctx, steer(seed), first, "")
        if (result is None or result.status == "bottom") and cfg.fallback_enabled and session.iterations < budget:
            session.fallback_used = True
            session.enter("steering", restart=True)
            fallback = template_prefix(focal, cls, mining.exemplars, ctx.test_name)
            result = _iterate(ctx, steer(fallback), budget - session.iterations, "fallback ")

        if result is not None and result.status in ("passed", "partial"):
            final = result.evaluation
            coverage = _measure(ctx, final)
            if result.status == "passed":
                outcome = Outcome(compiled=True, tests_passed=True, coverage=coverage)
            else:
                outcome = Outcome(compiled=True, partial_valid=True, coverage=coverage, failure_class="runtime_exhausted")
        session.stage = "done" if outcome.compiled else "failed"
    except ToolchainError as exc:
        session.errors.append(f"{type(exc).__name__}: {exc}")
        compiled = final is not None
        outcome = Outcome(compiled=compiled, failure_class="toolchain_error")
        session.stage = "failed"
    except GatewayError as exc:
        session.errors.append(f"{type(exc).__name__}: {exc}")
        outcome = Outcome(failure_class="gateway_error")
        session.stage = "failed"
    except JTestGenError as exc:
        session.errors.append(f"{type(exc).__name__}: {exc}")
        outcome = Outcome(failure_class="compile_exhausted")
        session.stage = "failed"
    session.stage_log.append(session.stage)

    test_file = None
    if final is not None:
        test_file = _write(services, "tests", cls, ctx.test_name, final.code)
    return SessionRecord(
        signature=focal.signature,
        project=services.project,
        class_name=cls.fqcn,
        method=focal.name,
        test_class=ctx.test_name,
        outcome=outcome,
        stage=session.stage,
        seed_status=session.seed.compile_status if session.seed else "none",
        seed_rounds=session.seed_rounds,
        repair_attempts=session.repair_attempts,
        iterations=session.iterations,
        fallback_used=session.fallback_used,
        exemplar_path=mining.path if mining else "none",
        exemplar_count=len(mining.exemplars) if mining else 0,
        calls=list(session.calls),
        errors=list(session.errors),
        ccn=cyclomatic_complexity(focal),
        features=_init_features(focal, session.seed, mining.exemplars if mining else []),
        stage_log=session.stage_log,
        test_file=test_file,
    )


class _LabelledGateway:
    """Adds the session step label to requests issued by helper modules."""

    def __init__(self, ctx: _Context, label: str):
        self.ctx, self.label, self.n = ctx, label, 0

    def complete(self, req: CompletionRequest):
        self.n += 1
        msgs = (Message("system", f"{SYSTEM_PROMPT} Step: {self.label} {self.n}."),) + tuple(m for m in req.messages if m.role != "system")
        self.ctx.session.calls.append(req.purpose)
        return self.ctx.services.gateway.complete(CompletionRequest(msgs, req.model_id, req.temperature, req.max_tokens, req.purpose))


def _write(services: Services, kind: str, cls: SourceClass, name: str, code: str) -> str | None:
    if services.output_root is None:
        return None
    rel = Path(kind, *cls.package.split(".")) if cls.package else Path(kind)
    path = services.output_root / rel / f"{name}.java"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(code, encoding="utf-8")
    return (rel / f"{name}.java").as_posix()


# --------------------------------------------------------------------------
# corpus runs


def load_records(path: Path) -> tuple[list[SessionRecord], int]:
    """Read NDJSON session records; malformed lines are skipped and counted."""
    records, bad = [], 0
    if not path.exists():
        return records, bad
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        try:
            records.append(SessionRecord.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            log.warning("skipping malformed record: %s", exc)
            bad += 1
    return records, bad


def record_line(rec: SessionRecord) -> str:
    return json.dumps(rec.to_dict(), sort_keys=True, ensure_ascii=False)


def run_corpus(
    focals: Sequence[tuple[SourceClass, MethodInfo]],
    cfg: SessionConfig,
    services: Services,
    records_path: Path | None = None,
    resume: bool = True,
) -> list[SessionRecord]:
    """Run sessions up to ``worker_cap`` at a time, committing in input order."""
    done: dict[str, SessionRecord] = {}
    if records_path is not None and resume:
        for r in load_records(records_path)[0]:
            done[r.signature] = r
    todo = [(c, m) for c, m in focals if m.signature not in done]
    lock = threading.Lock()
    results: dict[int, SessionRecord] = {}
    next_commit = 0

    def commit_ready():
        nonlocal next_commit
        while next_commit in results:
            rec = results[next_commit]
            if records_path is not None:
                records_path.parent.mkdir(parents=True, exist_ok=True)
                with records_path.open("a", encoding="utf-8") as fh:
                    fh.write(record_line(rec) + "\n")
            next_commit += 1

    def work(i: int, cls: SourceClass, m: MethodInfo):
        rec = run_focal(m, cls, cfg, services)
        with lock:
            results[i] = rec
            commit_ready()
        return rec

    if cfg.worker_cap == 1:
        for i, (c, m) in enumerate(todo):
            work(i, c, m)
    else:
        with ThreadPoolExecutor(max_workers=cfg.worker_cap) as pool:
            for f in [pool.submit(work, i, c, m) for i, (c, m) in enumerate(todo)]:
                f.result()
    new = {r.signature: r for r in results.values()}
    return [done.get(m.signature) or new[m.signature] for _, m in focals]


# --------------------------------------------------------------------------
# aggregation

CCN_GROUPS: tuple[tuple[str, int, int | None], ...] = (
    ("1-2", 1, 2), ("3-4", 3, 4), ("5-6", 5, 6), ("7-8", 7, 8), ("9-10", 9, 10), ("11-14", 11, 14), (">14", 15, None),
)


def ccn_group(ccn: int, groups=CCN_GROUPS) -> str:
    for label, lo, hi in groups:
        if ccn >= lo and (hi is None or ccn <= hi):
            return label
    return groups[0][0]


def _mean(values: list[float]) -> float | None:
    return sum(values) / len(values) if values else None


@dataclass
class MetricRow:
    label: str
    focal_methods: int = 0
    compiled: int = 0
    passed: int = 0
    partial_valid: int = 0
    branch_coverage: float | None = None
    line_coverage: float | None = None
    coverage_sessions: int = 0

    @property
    def compile_pass_rate(self) -> float:
        return self.compiled / self.focal_methods if self.focal_methods else 0.0

    @property
    def test_pass_rate(self) -> float:
        return self.passed / self.focal_methods if self.focal_methods else 0.0

    @property
    def test_pass_rate_over_compiled(self) -> float:
        return self.passed / self.compiled if self.compiled else 0.0

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "focal_methods": self.focal_methods,
            "compiled": self.compiled,
            "passed": self.passed,
            "partial_valid": self.partial_valid,
            "compile_pass_rate": self.compile_pass_rate,
            "test_pass_rate": self.test_pass_rate,
            "test_pass_rate_over_compiled": self.test_pass_rate_over_compiled,
            "branch_coverage": self.branch_coverage,
            "line_coverage": self.line_coverage,
            "coverage_sessions": self.coverage_sessions,
        }


def metric_row(label: str, records: Sequence[SessionRecord]) -> MetricRow:
    row = MetricRow(label, focal_methods=len(records))
    branches, lines = [], []
    for r in records:
        o = r.outcome
        row.compiled += o.compiled
        row.passed += o.tests_passed
        row.partial_valid += o.partial_valid
        if o.coverage is not None:
            row.coverage_sessions += 1
            if o.coverage.branch_ratio is not None:
                branches.append(o.coverage.branch_ratio)
            if o.coverage.line_ratio is not None:
                lines.append(o.coverage.line_ratio)
    row.branch_coverage, row.line_coverage = _mean(branches), _mean(lines)
    return row


@dataclass
class AggregateReport:
    total: MetricRow
    per_project: list[MetricRow]
    by_init_bin: list[MetricRow]
    by_ccn_group: list[MetricRow]
    failure_classes: dict[str, int]
    normalization: dict | None
    weights: tuple[float, float, float, float]
    skipped_records: int = 0
    method_label: str = "jtestgen"

    @property
    def compile_pass_rate(self) -> float:
        return self.total.compile_pass_rate

    @property
    def test_pass_rate(self) -> float:
        return self.total.test_pass_rate

    def to_dict(self) -> dict:
        return {
            "method": self.method_label,
            "total": self.total.to_dict(),
            "per_project": [r.to_dict() for r in self.per_project],
            "by_init_bin": [r.to_dict() for r in self.by_init_bin],
            "by_ccn_group": [r.to_dict() for r in self.by_ccn_group],
            "failure_classes": dict(sorted(self.failure_classes.items())),
            "normalization": self.normalization,
            "weights": list(self.weights),
            "skipped_records": self.skipped_records,
            "init_bin_grouping": "per-focal-method",
        }


def aggregate(
    records: Sequence[SessionRecord],
    stats=None,
    weights=None,
    skipped_records: int = 0,
    method_label: str = "jtestgen",
) -> AggregateReport:
    """Corpus metrics, with binned tables for both complexity measures."""
    from .complexity import NUM_BINS, ComplexityWeights, bin_label, fit_normalization, init_complexity

    weights = weights or ComplexityWeights()
    with_features = [r for r in records if r.features is not None]
    if stats is None and with_features:
        stats = fit_normalization(r.features for r in with_features)
    bins: dict[str, list[SessionRecord]] = {bin_label(b): [] for b in range(NUM_BINS)}
    bins["n/a"] = []
    for r in records:
        if r.features is None or stats is None:
            bins["n/a"].append(r)
        else:
            bins[bin_label(init_complexity(r.features, stats, weights).bin)].append(r)
    groups: dict[str, list[SessionRecord]] = {label: [] for label, _, _ in CCN_GROUPS}
    for r in records:
        groups[ccn_group(r.ccn)].append(r)
    projects: dict[str, list[SessionRecord]] = {}
    for r in records:
        projects.setdefault(r.project, []).append(r)
    failures: dict[str, int] = {}
    for r in records:
        if r.outcome.failure_class:
            failures[r.outcome.failure_class] = failures.get(r.outcome.failure_class, 0) + 1
    return AggregateReport(
        total=metric_row("Total", records),
        per_project=[metric_row(p, rs) for p, rs in sorted(projects.items())],
        by_init_bin=[metric_row(k, v) for k, v in bins.items()],
        by_ccn_group=[metric_row(k, v) for k, v in groups.items()],
        failure_classes=failures,
        normalization=stats.to_dict() if stats is not None else None,
        weights=weights.as_tuple(),
        skipped_records=skipped_records,
        method_label=method_label,
    )
