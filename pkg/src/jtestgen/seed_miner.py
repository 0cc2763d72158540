"""Seed step: mine invocation exemplars and refine a compilable test prefix.

Exemplars come from two places. Path 1 uses callers of the focal method found
in project source, topped up with at most three EvoSuite-generated tests.
Path 2 is taken when the source has no callers and uses up to five EvoSuite
tests instead. Every exemplar is a backward slice ending in one focal call.
"""

from __future__ import annotations

import logging
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from tree_sitter import Node

from .code_model import (
    FieldDecl,
    MethodInfo,
    SourceClass,
    annotations_of,
    erase_type,
    named_args,
    parse_compilation_unit,
    parse_tree,
    reparse_method,
    text,
    walk,
    walk_postorder,
)
from .errors import GenerationFailure, GenerationTimeout, ParseError, PromptOverflow, ToolMissing
from .llm_gateway import CompletionRequest, Gateway, estimate_tokens
from .prompts import Templates, render
from .toolchain import CompileResult, Diagnostic, Toolchain, apply_lightweight_fixes, extract_code, truncate_diagnostics

log = logging.getLogger(__name__)

MARKER = "// TODO: assert here"
PATH1_EVOSUITE_CAP = 3
PATH2_EVOSUITE_CAP = 5
DEFAULT_PROMPT_BUDGET = 16384 - 2048
ASSERTION_NAMES = frozenset({"fail", "assertThrows"})

_STMT_TYPES = {
    "expression_statement", "local_variable_declaration", "return_statement", "if_statement",
    "for_statement", "enhanced_for_statement", "while_statement", "do_statement", "try_statement",
    "try_with_resources_statement", "switch_expression", "throw_statement", "yield_statement",
    "synchronized_statement", "labeled_statement", "assert_statement",
}


@dataclass(frozen=True)
class ExemplarSnippet:
    origin: str  # source_class | evosuite
    code: str
    focal_signature: str
    provenance: tuple[str, str]


@dataclass(frozen=True)
class EvoSuiteTestClass:
    name: str
    kind: str
    content: str
    fields: tuple[FieldDecl, ...]
    test_methods: tuple[MethodInfo, ...]
    package: str = ""
    path: str = ""


@dataclass
class SeedPrefix:
    code: str
    focal_signature: str
    todo_marker_count: int
    compile_status: str = "unverified"  # unverified | passed | failed
    repair_rounds_used: int = 0
    diagnostics: tuple[Diagnostic, ...] = ()


# --------------------------------------------------------------------------
# EvoSuite


@dataclass
class EvoSuiteConfig:
    jar: Path | None
    search_budget: int = 60
    output_dir: Path = Path("evosuite-tests")
    jdk8_home: Path | None = None
    classpath: Sequence[Path] = ()
    timeout_slack: int = 60


def _java_executable(jdk_home: Path | None) -> str | None:
    if jdk_home is not None:
        exe = Path(jdk_home) / "bin" / "java"
        return str(exe) if exe.exists() else None
    return shutil.which("java")


def run_evosuite(target_class: SourceClass, cfg: EvoSuiteConfig) -> list[EvoSuiteTestClass]:
    """Generate tests for one class and parse what EvoSuite wrote."""
    if cfg.jar is None or not Path(cfg.jar).exists():
        raise ToolMissing(f"EvoSuite jar not found: {cfg.jar}")
    java = _java_executable(cfg.jdk8_home)
    if java is None:
        raise ToolMissing("no java executable for EvoSuite (set the JDK 8 home)")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cmd = [
        java, "-jar", str(cfg.jar),
        "-class", target_class.fqcn,
        "-projectCP", ":".join(str(p) for p in cfg.classpath),
        f"-Dsearch_budget={cfg.search_budget}",
        f"-Dtest_dir={out}",
        "-Dassertions=true",
    ]
    timeout = cfg.search_budget + cfg.timeout_slack
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        raise GenerationTimeout(cfg.search_budget) from exc
    if proc.returncode != 0:
        raise GenerationFailure((proc.stderr or proc.stdout)[-800:])
    rel = Path(*target_class.package.split(".")) if target_class.package else Path()
    results = []
    for path in sorted((out / rel).glob(f"{target_class.name}*_ESTest.java")):
        results.extend(ingest_evosuite_tests(path.read_text(encoding="utf-8"), str(path)))
    return results


_SCAFFOLD_IMPORT = re.compile(r"^import\s+(static\s+)?org\.evosuite\.[\w.*]+;[ \t]*\n", re.M)
_SCAFFOLD_ANNOT = re.compile(r"^[ \t]*@(RunWith\(EvoRunner\.class\)|EvoRunnerParameters\([^)]*\))[ \t]*\n", re.M)
_SCAFFOLD_EXTENDS = re.compile(r"\s+extends\s+\w+_scaffolding\b")
_VERIFY_EXC = re.compile(r"^[ \t]*verifyException\([^;]*\);[ \t]*\n", re.M)


def strip_scaffolding(source: str) -> str:
    """Remove EvoSuite runtime coupling so tests stand alone."""
    s = _SCAFFOLD_IMPORT.sub("", source)
    s = _SCAFFOLD_ANNOT.sub("", s)
    s = _SCAFFOLD_EXTENDS.sub("", s)
    s = _VERIFY_EXC.sub("", s)
    s = re.sub(r"@Test\(timeout\s*=\s*\d+\)", "@Test", s)
    return s


def ingest_evosuite_tests(source: str, path: str = "<evosuite>") -> list[EvoSuiteTestClass]:
    out = []
    for cls in parse_compilation_unit(strip_scaffolding(source), path):
        if cls.name.endswith("_scaffolding"):
            continue
        tests = tuple(m for m in cls.methods if _is_test_method(m))
        out.append(EvoSuiteTestClass(cls.name, cls.kind, cls.content, cls.fields, tests, cls.package, path))
    return out


def _is_test_method(m: MethodInfo) -> bool:
    decl = reparse_method(m)
    return decl is not None and "Test" in annotations_of(decl)


# --------------------------------------------------------------------------
# exemplar slicing


def is_focal_call(node: Node, focal: MethodInfo) -> bool:
    if node.type != "method_invocation":
        return False
    return text(node.child_by_field_name("name")) == focal.name and len(named_args(node.child_by_field_name("arguments"))) == focal.arity


def is_assertion_call(node: Node, extra: Iterable[str] = ()) -> bool:
    if node.type != "method_invocation":
        return False
    name = text(node.child_by_field_name("name"))
    if not (name.startswith("assert") or name in ASSERTION_NAMES or name in extra):
        return False
    obj = node.child_by_field_name("object")
    # Assert.assertX / org.junit.Assert.assertX count, foo.assertX does not
    return obj is None or text(obj).rsplit(".", 1)[-1][:1].isupper()


def _is_assertion_statement(stmt: Node, extra: Iterable[str] = ()) -> bool:
    if stmt.type == "assert_statement":
        return True
    if stmt.type != "expression_statement" or not stmt.named_children:
        return False
    return is_assertion_call(stmt.named_children[0], extra)


def _identifiers(node: Node) -> set[str]:
    return {text(n) for n in walk(node, skip=("class_body",)) if n.type == "identifier"}


def _defined_names(stmt: Node) -> set[str]:
    if stmt.type == "local_variable_declaration":
        return {text(d.child_by_field_name("name")) for d in stmt.named_children if d.type == "variable_declarator"}
    if stmt.type == "expression_statement" and stmt.named_children:
        expr = stmt.named_children[0]
        if expr.type in ("assignment_expression", "update_expression"):
            target = expr.child_by_field_name("left") if expr.type == "assignment_expression" else expr.named_children[0]
            if target is not None and target.type == "identifier":
                return {text(target)}
    return set()


def _receiver_root(expr: Node) -> str | None:
    """``list`` for ``list.add(x)``; None when the statement is not a call on a local."""
    while expr is not None and expr.type == "method_invocation":
        obj = expr.child_by_field_name("object")
        if obj is None:
            return None
        if obj.type == "identifier":
            return text(obj)
        expr = obj
    return None


def _anchor_statement(call: Node, scope: Node) -> Node | None:
    cur = call.parent
    while cur is not None and cur != scope:
        if cur.type in _STMT_TYPES:
            return cur
        if cur.type in ("lambda_expression", "class_body"):
            return None
        cur = cur.parent
    return None


def _slice(scope: Node, call: Node, focal: MethodInfo) -> str | None:
    """Backward name-slice feeding ``call`` within ``scope`` (a method body)."""
    anchor = _anchor_statement(call, scope)
    if anchor is None:
        return None
    if anchor.type in ("expression_statement", "local_variable_declaration") and not _is_assertion_statement(anchor):
        tail, tail_node = text(anchor), anchor
    else:
        tail, tail_node = text(call) + ";", call
    needed = _identifiers(tail_node)
    picked: list[Node] = []
    earlier = [
        n for n in walk(scope, skip=("class_body", "lambda_expression"))
        if n.type in ("local_variable_declaration", "expression_statement") and n.end_byte <= anchor.start_byte
    ]
    for stmt in reversed(earlier):
        if _is_assertion_statement(stmt):
            continue
        if any(is_focal_call(n, focal) for n in walk(stmt)):
            continue
        defines = _defined_names(stmt)
        uses_local = stmt.type == "expression_statement" and _receiver_root(stmt.named_children[0]) in needed if stmt.named_children else False
        if defines & needed or uses_local:
            picked.append(stmt)
            needed |= _identifiers(stmt)
    lines = [text(s) for s in reversed(picked)] + [tail]
    return "\n".join(lines)


def count_focal_calls(code: str, focal: MethodInfo) -> int:
    tree = parse_tree("class __S { void __m() {\n" + code + "\n} }")
    return sum(1 for n in walk(tree.root_node) if is_focal_call(n, focal))


def _declared_types(decl: Node, fields: Sequence[FieldDecl]) -> dict[str, str]:
    types = {f.name: erase_type(f.type) for f in fields}
    for n in walk(decl, skip=("class_body",)):
        if n.type in ("formal_parameter", "spread_parameter", "catch_formal_parameter"):
            name = n.child_by_field_name("name")
            typ = n.child_by_field_name("type")
            if name is not None and typ is not None:
                types[text(name)] = erase_type(text(typ))
        elif n.type in ("local_variable_declaration", "field_declaration"):
            typ = text(n.child_by_field_name("type"))
            for d in n.named_children:
                if d.type == "variable_declarator":
                    types[text(d.child_by_field_name("name"))] = erase_type(typ)
    return types


def _receiver_matches(call: Node, focal_class: str, types: dict[str, str], implicit_ok: bool) -> bool:
    obj = call.child_by_field_name("object")
    if obj is None or obj.type in ("this", "super"):
        return implicit_ok
    if obj.type == "identifier":
        name = text(obj)
        if name in types:
            t = types[name]
            return t == focal_class or (t == "var" and implicit_ok)
        return name == focal_class
    if obj.type == "object_creation_expression":
        return erase_type(text(obj.child_by_field_name("type"))) == focal_class
    if obj.type in ("field_access", "scoped_identifier"):
        return text(obj).rsplit(".", 1)[-1] == focal_class
    return False


def _snippets_in_method(
    m: MethodInfo,
    owner_fields: Sequence[FieldDecl],
    focal: MethodInfo,
    focal_class: str,
    implicit_ok: bool,
) -> str | None:
    if not any(r.callee_name == focal.name and r.arg_count == focal.arity for r in m.invocations):
        return None
    decl = reparse_method(m)
    if decl is None:
        return None
    body = decl.child_by_field_name("body")
    if body is None:
        return None
    types = _declared_types(decl, owner_fields)
    for node in walk_postorder(body, skip=("class_body",)):
        if is_focal_call(node, focal) and _receiver_matches(node, focal_class, types, implicit_ok):
            code = _slice(body, node, focal)
            if code is not None and count_focal_calls(code, focal) == 1:
                return code
            return None
    return None


def _is_subclass(cls: SourceClass, base: str, by_name: dict[str, SourceClass]) -> bool:
    seen = set()
    cur = cls
    while cur is not None and cur.superclass and cur.superclass not in seen:
        sup = erase_type(cur.superclass)
        if sup == base:
            return True
        seen.add(sup)
        cur = by_name.get(sup)
    return False


def mine_source_exemplars(cls: SourceClass, all_classes: Sequence[SourceClass], focal: MethodInfo) -> list[ExemplarSnippet]:
    """Path 1: callers of ``focal`` anywhere in project source, in source order."""
    by_name = {c.name: c for c in all_classes}
    out = []
    for other in all_classes:
        related = other.fqcn == cls.fqcn or _is_subclass(other, cls.name, by_name)
        for m in other.methods:
            if other.fqcn == cls.fqcn and m.signature == focal.signature:
                continue
            code = _snippets_in_method(m, other.fields, focal, cls.name, implicit_ok=related)
            if code is not None:
                out.append(ExemplarSnippet("source_class", code, focal.signature, (other.path, m.name)))
    return out


def mine_evosuite_exemplars(tests: Sequence[EvoSuiteTestClass], focal: MethodInfo, cap: int, focal_class: str | None = None) -> list[ExemplarSnippet]:
    """At most ``cap`` EvoSuite test methods invoking ``focal``, in source order."""
    if cap < 0:
        raise ValueError("cap must be nonnegative")
    owner = focal_class or focal.signature.split("#", 1)[0].rsplit(".", 1)[-1].split("$")[-1]
    out: list[ExemplarSnippet] = []
    for tc in tests:
        for m in tc.test_methods:
            if len(out) >= cap:
                return out
            code = _snippets_in_method(m, tc.fields, focal, owner, implicit_ok=False)
            if code is not None:
                out.append(ExemplarSnippet("evosuite", code, focal.signature, (tc.path or tc.name, m.name)))
    return out


def select_path(source_exemplars: Sequence[ExemplarSnippet]) -> str:
    return "path1" if source_exemplars else "path2"


def dedupe_exemplars(exemplars: Iterable[ExemplarSnippet]) -> list[ExemplarSnippet]:
    seen: set[str] = set()
    out = []
    for e in exemplars:
        key = re.sub(r"\s+", " ", e.code).strip()
        if key not in seen:
            seen.add(key)
            out.append(e)
    return out


@dataclass
class MiningResult:
    path: str
    exemplars: list[ExemplarSnippet] = field(default_factory=list)
    source_count: int = 0
    evosuite_count: int = 0


def mine_exemplars(
    cls: SourceClass,
    all_classes: Sequence[SourceClass],
    focal: MethodInfo,
    evosuite_tests: Sequence[EvoSuiteTestClass] = (),
) -> MiningResult:
    source = mine_source_exemplars(cls, all_classes, focal)
    path = select_path(source)
    cap = PATH1_EVOSUITE_CAP if path == "path1" else PATH2_EVOSUITE_CAP
    evo = mine_evosuite_exemplars(evosuite_tests, focal, cap, cls.name)
    return MiningResult(path, dedupe_exemplars(source + evo), len(source), len(evo))


# --------------------------------------------------------------------------
# assertion stripping


def _parse_for_stripping(code: str) -> tuple[Node, bytes, int]:
    tree = parse_tree(code)
    if not tree.root_node.has_error:
        return tree.root_node, code.encode("utf-8"), 0
    head = "class __S { void __m() {\n"
    wrapped = head + code + "\n} }"
    tree = parse_tree(wrapped)
    if tree.root_node.has_error:
        raise ParseError("<test>", None, "test code does not parse")
    return tree.root_node, wrapped.encode("utf-8"), len(head.encode("utf-8"))


def strip_assertions(test_code: str, extra_names: Iterable[str] = ()) -> tuple[str, int]:
    """Replace each assertion statement with the marker comment."""
    extra = frozenset(extra_names)
    root, data, offset = _parse_for_stripping(test_code)
    spans = []
    for n in walk(root):
        if _is_assertion_statement(n, extra):
            if spans and n.start_byte < spans[-1][1]:
                continue  # nested inside an assertion already removed
            spans.append((n.start_byte, n.end_byte))
    out = data
    for start, end in reversed(spans):
        out = out[:start] + MARKER.encode("utf-8") + out[end:]
    if offset:
        out = out[offset: len(out) - len("\n} }")]
    return out.decode("utf-8"), len(spans)


def count_markers(code: str) -> int:
    return code.count(MARKER)


def has_assertions(code: str, extra_names: Iterable[str] = ()) -> bool:
    root, _, _ = _parse_for_stripping(code)
    return any(_is_assertion_statement(n, frozenset(extra_names)) for n in walk(root))


# --------------------------------------------------------------------------
# prompts


def class_context(cls: SourceClass) -> str:
    lines = []
    if cls.package:
        lines.append(f"package {cls.package};")
    header = f"{' '.join(sorted(cls.modifiers & {'public', 'final', 'abstract'}))} class {cls.name}".strip()
    if cls.superclass:
        header += f" extends {cls.superclass}"
    lines.append(header + " {")
    for f in cls.fields:
        mods = " ".join(sorted(f.modifiers))
        lines.append(f"    {mods + ' ' if mods else ''}{f.type} {f.name};")
    for c in cls.constructors:
        params = ", ".join(f"{p.type} {p.name}" for p in c.params)
        mods = " ".join(sorted(c.modifiers & {"public", "protected", "private"}))
        lines.append(f"    {mods + ' ' if mods else ''}{cls.name}({params});")
    lines.append("}")
    return "\n".join(lines)


def _render_exemplars(exemplars: Sequence[ExemplarSnippet]) -> str:
    if not exemplars:
        return ""
    parts = ["Correct invocation examples:"]
    for i, e in enumerate(exemplars, 1):
        parts.append(f"Example {i} (from {e.provenance[1]}):\n{e.code}")
    return "\n\n".join(parts) + "\n"


def build_seed_prompt(
    focal: MethodInfo,
    cls: SourceClass,
    exemplars: Sequence[ExemplarSnippet],
    test_class_name: str,
    templates: Templates | None = None,
    budget_tokens: int = DEFAULT_PROMPT_BUDGET,
) -> str:
    templates = templates or Templates()
    kept = list(exemplars)

    def render_with(ex):
        return render(
            templates["seed"],
            focal_signature=focal.signature,
            focal_body=focal.content,
            class_context=class_context(cls),
            exemplars=_render_exemplars(ex),
            test_class_name=test_class_name,
            package=cls.package or "(default)",
        )

    prompt = render_with(kept)
    while estimate_tokens(prompt) > budget_tokens and kept:
        kept.pop()
        prompt = render_with(kept)
    if estimate_tokens(prompt) > budget_tokens:
        raise PromptOverflow(f"seed prompt for {focal.signature} exceeds {budget_tokens} tokens without exemplars")
    return prompt


# --------------------------------------------------------------------------
# template prefix (two-stage fallback)

_DEFAULTS = {
    "int": "0", "long": "0L", "short": "(short) 0", "byte": "(byte) 0", "char": "'a'",
    "float": "0.0F", "double": "0.0", "boolean": "false", "String": '""',
}


def default_value(type_text: str) -> str:
    t = erase_type(type_text)
    if t in _DEFAULTS:
        return _DEFAULTS[t]
    if t.endswith("[]"):
        return f"new {t[:-2]}[0]"
    return f"({t}) null"


def _naive_call(focal: MethodInfo, cls: SourceClass) -> str:
    args = ", ".join(default_value(p.type) for p in focal.params)
    if "static" in focal.modifiers:
        return f"{cls.name}.{focal.name}({args});"
    ctor = next((c for c in cls.constructors if c.is_public), None)
    ctor_args = ", ".join(default_value(p.type) for p in ctor.params) if ctor else ""
    var = cls.name[0].lower() + cls.name[1:]
    return f"{cls.name} {var} = new {cls.name}({ctor_args});\n{var}.{focal.name}({args});"


def template_prefix(focal: MethodInfo, cls: SourceClass, exemplars: Sequence[ExemplarSnippet], test_class_name: str) -> SeedPrefix:
    """A test class built directly from exemplars, without model refinement."""
    bodies = [e.code for e in exemplars] or [_naive_call(focal, cls)]
    methods = []
    for i, body in enumerate(bodies):
        stripped, _ = strip_assertions(body)
        indented = "\n".join("        " + line if line.strip() else line for line in stripped.splitlines())
        methods.append(
            f"    @Test\n    public void test{focal.name[0].upper() + focal.name[1:]}{i}() throws Throwable {{\n"
            f"{indented}\n        {MARKER}\n    }}"
        )
    pkg = f"package {cls.package};\n\n" if cls.package else ""
    code = f"{pkg}import org.junit.Test;\n\npublic class {test_class_name} {{\n\n" + "\n\n".join(methods) + "\n}\n"
    return SeedPrefix(code, focal.signature, count_markers(code))


# --------------------------------------------------------------------------
# refinement


@dataclass
class SeedSession:
    gateway: Gateway
    toolchain: Toolchain
    workspace: Path
    test_class_name: str
    known_imports: dict[str, str] = field(default_factory=dict)
    model_id: str = "gpt-3.5-turbo"
    max_tokens: int = 2048
    templates: Templates = field(default_factory=Templates)
    max_rounds: int = 5
    calls: list[str] = field(default_factory=list)


def ensure_marker(code: str, focal: MethodInfo) -> str:
    """Add a marker after the first focal-call statement when none exists."""
    if MARKER in code:
        return code
    tree = parse_tree(code)
    for n in walk_postorder(tree.root_node):
        if is_focal_call(n, focal):
            stmt = n.parent
            while stmt is not None and stmt.type not in _STMT_TYPES:
                stmt = stmt.parent
            if stmt is None:
                break
            data = code.encode("utf-8")
            indent = " " * stmt.start_point[1]
            insert = f"\n{indent}{MARKER}".encode("utf-8")
            return (data[: stmt.end_byte] + insert + data[stmt.end_byte:]).decode("utf-8")
    return code


def _prepare_prefix(raw: str, focal: MethodInfo, cls: SourceClass, session: SeedSession) -> str:
    code = apply_lightweight_fixes(extract_code(raw), cls, session.known_imports, session.test_class_name)
    try:
        code, _ = strip_assertions(code)
    except ParseError:
        return code
    return ensure_marker(code, focal)


def _check(code: str, focal: MethodInfo, session: SeedSession) -> CompileResult:
    name = f"{session.test_class_name}.java"
    if count_focal_calls_in_unit(code, focal) == 0:
        return CompileResult((Diagnostic(name, 0, f"the test prefix never calls {focal.name}"),))
    session.workspace.mkdir(parents=True, exist_ok=True)
    path = session.workspace / name
    path.write_text(code, encoding="utf-8")
    return session.toolchain.compile(path, session.workspace)


def count_focal_calls_in_unit(code: str, focal: MethodInfo) -> int:
    tree = parse_tree(code)
    return sum(1 for n in walk(tree.root_node) if is_focal_call(n, focal))


def refine_seed(prefix_candidate: str, focal: MethodInfo, cls: SourceClass, session: SeedSession) -> SeedPrefix:
    """Compile, and on failure ask for repairs, for at most ``max_rounds`` rounds."""
    code = _prepare_prefix(prefix_candidate, focal, cls, session)
    rounds = 0
    while True:
        result = _check(code, focal, session)
        if result.success:
            return SeedPrefix(code, focal.signature, count_markers(code), "passed", rounds, result.diagnostics)
        if rounds >= session.max_rounds:
            return SeedPrefix(code, focal.signature, count_markers(code), "failed", rounds, result.diagnostics)
        prompt = render(
            session.templates["seed_repair"],
            focal_signature=focal.signature,
            code=code,
            diagnostics=truncate_diagnostics(result.diagnostics),
            test_class_name=session.test_class_name,
        )
        rounds += 1
        session.calls.append("seed_repair")
        req = CompletionRequest.user(prompt, model_id=session.model_id, max_tokens=session.max_tokens, purpose="seed_repair")
        code = _prepare_prefix(session.gateway.complete(req).content, focal, cls, session)

