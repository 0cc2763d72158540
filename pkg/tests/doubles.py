"""Deterministic stand-ins for the Java toolchain and the completion model.

FakeToolchain
    compile: succeeds iff the file parses and every simple type name it uses
    resolves (declared in the file, imported, java.lang, or a class of the
    fixture corpus in the same package).
    run: a @Test method fails with an AssertionError if it calls ``fail(...)``
    and with an IllegalStateException if it contains a ``throw`` statement.
    coverage: derived from the focal method's CCN and line count and the
    number of test methods, so it is reproducible byte for byte.

FakeModel
    Answers by request purpose with code built from the focal method's
    signature. Per-method behaviours (runtime failure, never compiles, broken
    first seed) are switched on by method name.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from jtestgen.code_model import Corpus, MethodInfo, SourceClass, parse_tree, text, walk
from jtestgen.complexity import cyclomatic_complexity
from jtestgen.llm_gateway import CompletionRequest, CompletionResponse
from jtestgen.seed_miner import default_value
from jtestgen.toolchain import (
    ASSERTION_FAILURE,
    PASSED,
    RUNTIME_EXCEPTION,
    CompileResult,
    CoverageReport,
    Diagnostic,
    MethodCoverage,
    TestFailure,
    TestRunResult,
    junit_test_methods,
)

FIXTURES = Path(__file__).parent / "fixtures"
PROJECT10 = FIXTURES / "project10"
EVOSUITE10 = FIXTURES / "evosuite10"
GOLDEN = Path(__file__).parent / "golden"

JAVA_LANG = frozenset({
    "String", "Object", "Integer", "Long", "Double", "Float", "Boolean", "Character", "Byte", "Short",
    "Number", "Math", "System", "StringBuilder", "CharSequence", "Iterable", "Comparable", "Class", "Void",
    "Throwable", "Exception", "RuntimeException", "Error", "AssertionError", "IllegalArgumentException",
    "IllegalStateException", "NullPointerException", "ArithmeticException", "IndexOutOfBoundsException",
    "ArrayIndexOutOfBoundsException", "ClassCastException", "UnsupportedOperationException",
    "Override", "Deprecated", "SuppressWarnings", "Thread", "Runnable", "Enum",
})


def _package(root) -> str:
    pkg = next((c for c in root.named_children if c.type == "package_declaration"), None)
    return text(pkg)[len("package"):].rstrip(";").strip() if pkg is not None else ""


def unresolved_types(code: str, corpus: Corpus | None) -> tuple[list[tuple[int, str]], bool]:
    """(line, name) of every unresolved simple type name, and whether the code parsed."""
    tree = parse_tree(code)
    root = tree.root_node
    if root.has_error:
        return [], False
    package = _package(root)
    imported, wildcard = set(), set()
    for imp in (c for c in root.named_children if c.type == "import_declaration"):
        body = text(imp)[len("import"):].rstrip(";").strip()
        if body.startswith("static "):
            continue
        if body.endswith(".*"):
            wildcard.add(body[:-2])
        else:
            imported.add(body.rsplit(".", 1)[-1])
    declared = set()
    for n in walk(root):
        if n.type in ("class_declaration", "interface_declaration", "enum_declaration"):
            declared.add(text(n.child_by_field_name("name")))
        elif n.type == "type_parameter" and n.named_children:
            declared.add(text(n.named_children[0]))
    same_pkg = {c.name for c in corpus.classes if c.package == package} if corpus else set()
    wild_known = {c.name for c in corpus.classes if c.package in wildcard} if corpus else set()
    known = imported | declared | JAVA_LANG | same_pkg | wild_known
    missing = []
    for n in walk(root):
        names = []
        if n.type == "type_identifier":
            parent = n.parent
            if parent is not None and parent.type == "scoped_type_identifier":
                continue
            names.append(text(n))
        elif n.type in ("marker_annotation", "annotation"):
            name = n.child_by_field_name("name")
            if name is not None and name.type == "identifier":
                names.append(text(name))
        for name in names:
            if name not in known:
                missing.append((n.start_point[0] + 1, name))
    return missing, True


def _test_bodies(code: str) -> dict[str, str]:
    tree = parse_tree(code)
    out = {}
    for n in walk(tree.root_node):
        if n.type == "method_declaration":
            mods = next((c for c in n.children if c.type == "modifiers"), None)
            if mods is not None and "@Test" in text(mods):
                out[text(n.child_by_field_name("name"))] = n
    return out


def _calls(node, name: str) -> bool:
    return any(
        n.type == "method_invocation" and text(n.child_by_field_name("name")) == name and n.child_by_field_name("object") is None
        for n in walk(node)
    )


@dataclass
class FakeToolchain:
    corpus: Corpus | None = None
    always_fail_runtime: bool = False
    log: list[tuple[str, str]] = field(default_factory=list)

    def compile(self, test_file: Path, workspace: Path) -> CompileResult:
        code = Path(test_file).read_text(encoding="utf-8")
        self.log.append(("compile", Path(test_file).name))
        missing, parsed = unresolved_types(code, self.corpus)
        name = Path(test_file).name
        if not parsed:
            return CompileResult((Diagnostic(name, 1, "illegal start of expression"),))
        return CompileResult(tuple(Diagnostic(name, line, f"cannot find symbol\n  symbol: class {sym}") for line, sym in missing))

    def run_tests(self, test_file: Path, workspace: Path) -> TestRunResult:
        code = Path(test_file).read_text(encoding="utf-8")
        self.log.append(("run", Path(test_file).name))
        outcomes, failures = {}, []
        bodies = _test_bodies(code)
        for name in junit_test_methods(code):
            body = bodies.get(name)
            if self.always_fail_runtime or (body is not None and any(n.type == "throw_statement" for n in walk(body))):
                outcomes[name] = RUNTIME_EXCEPTION
                failures.append(TestFailure(name, "java.lang.IllegalStateException", "boom", "at Fake.run(Fake.java:1)"))
            elif body is not None and _calls(body, "fail"):
                outcomes[name] = ASSERTION_FAILURE
                failures.append(TestFailure(name, "java.lang.AssertionError", "expected failure"))
            else:
                outcomes[name] = PASSED
        return TestRunResult(outcomes, tuple(failures))

    def measure_coverage(self, test_file: Path, focal_signatures: Sequence[str], workspace: Path) -> CoverageReport:
        code = Path(test_file).read_text(encoding="utf-8")
        self.log.append(("coverage", Path(test_file).name))
        n_tests = len(junit_test_methods(code))
        report = CoverageReport()
        methods = {m.signature: m for _, m in self.corpus.focal_methods()} if self.corpus else {}
        for sig in focal_signatures:
            m = methods.get(sig)
            if m is None:
                report.methods[sig] = MethodCoverage()
                report.diagnostics.append(f"no coverage entry for {sig}")
                continue
            b_total = 2 * (cyclomatic_complexity(m) - 1)
            l_total = max(1, sum(1 for line in m.content.splitlines()[1:-1] if line.strip()))
            report.methods[sig] = MethodCoverage(
                min(b_total, 2 * n_tests), b_total, min(l_total, l_total // 2 + n_tests), l_total)
        return report


# --------------------------------------------------------------------------
# model


def _call_expr(focal: MethodInfo, cls: SourceClass) -> tuple[list[str], str]:
    args = ", ".join(default_value(p.type) for p in focal.params)
    if "static" in focal.modifiers:
        return [], f"{cls.name}.{focal.name}({args})"
    ctor = next((c for c in cls.constructors if c.is_public), None)
    ctor_args = ", ".join(default_value(p.type) for p in ctor.params) if ctor else ""
    var = cls.name[0].lower() + cls.name[1:]
    return [f"{cls.name} {var} = new {cls.name}({ctor_args});"], f"{var}.{focal.name}({args})"


def _test_class(focal: MethodInfo, cls: SourceClass, body: list[str], name: str = "GeneratedTest") -> str:
    method = focal.name[0].upper() + focal.name[1:]
    lines = "\n".join("        " + b for b in body)
    return (
        f"public class {name} {{\n\n"
        f"    @Test\n    public void test{method}() throws Throwable {{\n{lines}\n    }}\n}}\n"
    )


@dataclass
class FakeModel:
    """A deterministic completion backend keyed on request purpose."""

    corpus: Corpus
    runtime_fail: frozenset[str] = frozenset()
    never_compiles: frozenset[str] = frozenset()
    broken_first_seed: frozenset[str] = frozenset()
    fenced: bool = True
    calls: list[CompletionRequest] = field(default_factory=list)

    def __post_init__(self):
        self._focals = sorted(self.corpus.focal_methods(), key=lambda cm: -len(cm[1].signature))

    def _focal(self, prompt: str) -> tuple[SourceClass, MethodInfo]:
        for cls, m in self._focals:
            if m.signature in prompt:
                return cls, m
        for cls, m in sorted(self._focals, key=lambda cm: -len(cm[1].content)):
            if m.content in prompt:
                return cls, m
        raise LookupError("fake model could not identify the focal method")

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        self.calls.append(req)
        prompt = req.messages[-1].content
        cls, m = self._focal(prompt)
        kind = req.purpose
        if kind == "branch_intentions":
            ids = [int(x) for x in re.findall(r"^(\d+)\. \[", prompt, re.M)]
            items = [{"id": i, "description": f"branch {i} of {m.name} is taken for a matching input"} for i in ids]
            return CompletionResponse(json.dumps({"intentions": items}))
        if kind == "function_intention":
            return CompletionResponse(json.dumps({
                "purpose": f"{m.name} of {cls.name}",
                "io_behavior": f"takes {len(m.params)} argument(s) and returns {m.return_type}",
                "side_effects": "none" if "static" in m.modifiers else "may update the receiver",
                "corner_cases": "null and empty inputs",
            }))
        setup, call = _call_expr(m, cls)
        if kind in ("seed", "seed_repair"):
            seed_count = sum(1 for c in self.calls if c.purpose in ("seed", "seed_repair") and self._focal(c.messages[-1].content)[1] is m)
            if m.name in self.broken_first_seed and seed_count == 1:
                body = setup + [f"Widget w = new Widget();", f"{call};", "// TODO: assert here"]
            else:
                body = setup + [f"{call};", "// TODO: assert here"]
            code = _test_class(m, cls, body, "SeedDraft")
        else:
            if m.name in self.never_compiles:
                body = setup + [f"Gadget g = {call};"]
            elif m.return_type == "void":
                body = setup + [f"{call};"]
            else:
                body = setup + [f"{m.return_type} result = {call};", "assertNotNull(result);" if m.return_type == "String" else "assertNotNull((Object) result);"]
            if m.name in self.runtime_fail:
                body.append('fail("not implemented yet");')
            code = _test_class(m, cls, body)
        content = f"Here is the test:\n```java\n{code}```\n" if self.fenced else code
        return CompletionResponse(content)


GOLDEN_MODEL_OPTIONS = {
    "runtime_fail": frozenset({"repeat"}),
    "never_compiles": frozenset({"isPalindrome"}),
    "broken_first_seed": frozenset({"total"}),
}
