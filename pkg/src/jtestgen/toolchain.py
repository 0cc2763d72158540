"""Compile / run / coverage adapters and the deterministic pre-compile fixes.

The pipeline talks to the JVM world only through the :class:`Toolchain`
protocol. :class:`JavaToolchain` drives ``javac``, JUnit 4's ``JUnitCore`` and
the JaCoCo agent + CLI as subprocesses; tests substitute in-process doubles.
"""

from __future__ import annotations

import json
import logging
import os
import re
import shutil
import subprocess
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .code_model import SourceClass, annotations_of, parse_tree, text, walk
from .errors import AgentMissing, CompileTimeout, MalformedReport, RunnerCrash, RunTimeout, ToolchainMissing

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Diagnostic:
    file: str
    line: int
    message: str
    kind: str = "error"  # error | warning


@dataclass(frozen=True)
class CompileResult:
    diagnostics: tuple[Diagnostic, ...] = ()

    @property
    def success(self) -> bool:
        return not any(d.kind == "error" for d in self.diagnostics)

    @property
    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.kind == "error"]


@dataclass(frozen=True)
class TestFailure:
    __test__ = False
    test_name: str
    exception_type: str
    message: str
    first_frame: str = ""


PASSED = "passed"
ASSERTION_FAILURE = "assertion_failure"
RUNTIME_EXCEPTION = "runtime_exception"


@dataclass(frozen=True)
class TestRunResult:
    __test__ = False
    outcomes: Mapping[str, str] = field(default_factory=dict)
    failures: tuple[TestFailure, ...] = ()

    def __post_init__(self):
        failed = {f.test_name for f in self.failures}
        for name, outcome in self.outcomes.items():
            if outcome != PASSED and name not in failed:
                raise ValueError(f"non-passed test {name} has no failure record")

    @property
    def all_passed(self) -> bool:
        return bool(self.outcomes) and all(o == PASSED for o in self.outcomes.values())


@dataclass(frozen=True)
class MethodCoverage:
    branches_covered: int = 0
    branches_total: int = 0
    lines_covered: int = 0
    lines_total: int = 0

    def __post_init__(self):
        if not (0 <= self.branches_covered <= self.branches_total and 0 <= self.lines_covered <= self.lines_total):
            raise ValueError(f"inconsistent coverage counts {self}")

    @property
    def branch_ratio(self) -> float | None:
        return self.branches_covered / self.branches_total if self.branches_total else None

    @property
    def line_ratio(self) -> float | None:
        return self.lines_covered / self.lines_total if self.lines_total else None

    def to_dict(self) -> dict:
        return {
            "branches_covered": self.branches_covered,
            "branches_total": self.branches_total,
            "lines_covered": self.lines_covered,
            "lines_total": self.lines_total,
        }


@dataclass
class CoverageReport:
    methods: dict[str, MethodCoverage] = field(default_factory=dict)
    diagnostics: list[str] = field(default_factory=list)

    def get(self, signature: str) -> MethodCoverage | None:
        return self.methods.get(signature)


class Toolchain(Protocol):
    def compile(self, test_file: Path, workspace: Path) -> CompileResult: ...

    def run_tests(self, test_file: Path, workspace: Path) -> TestRunResult: ...

    def measure_coverage(self, test_file: Path, focal_signatures: Sequence[str], workspace: Path) -> CoverageReport: ...


# --------------------------------------------------------------------------
# naming


def make_test_class_name(focal_class: str, method_name: str, taken: set[str] | None = None, suffix: str = "Test") -> str:
    """``<FocalClass>_<method>_Test``, with a counter when the name is taken."""
    base = f"{focal_class}_{method_name}"
    name = f"{base}_{suffix}"
    n = 1
    while taken is not None and name in taken:
        name = f"{base}_{n}_{suffix}"
        n += 1
    if taken is not None:
        taken.add(name)
    return name


# --------------------------------------------------------------------------
# lightweight fixes

JUNIT4_ASSERTIONS = frozenset({
    "assertEquals", "assertNotEquals", "assertTrue", "assertFalse", "assertNull",
    "assertNotNull", "assertSame", "assertNotSame", "assertArrayEquals", "assertThat",
    "assertThrows", "fail",
})

JUNIT4_TYPES = {
    "Test": "org.junit.Test",
    "Before": "org.junit.Before",
    "After": "org.junit.After",
    "BeforeClass": "org.junit.BeforeClass",
    "AfterClass": "org.junit.AfterClass",
    "Ignore": "org.junit.Ignore",
    "Rule": "org.junit.Rule",
    "Assert": "org.junit.Assert",
    "ExpectedException": "org.junit.rules.ExpectedException",
    "RunWith": "org.junit.runner.RunWith",
}

JDK_TYPES = {
    **{n: f"java.util.{n}" for n in (
        "List", "ArrayList", "LinkedList", "Map", "HashMap", "LinkedHashMap", "TreeMap",
        "Set", "HashSet", "LinkedHashSet", "TreeSet", "Arrays", "Collections", "Collection",
        "Iterator", "Date", "Locale", "Properties", "Random", "Optional", "Objects",
        "NoSuchElementException", "Calendar", "TimeZone", "Stack", "Vector", "Deque", "ArrayDeque",
    )},
    **{n: f"java.io.{n}" for n in (
        "IOException", "File", "InputStream", "OutputStream", "Reader", "Writer", "StringReader",
        "StringWriter", "ByteArrayInputStream", "ByteArrayOutputStream", "PrintStream",
        "PrintWriter", "BufferedReader", "UncheckedIOException", "Serializable",
    )},
    "BigDecimal": "java.math.BigDecimal",
    "BigInteger": "java.math.BigInteger",
}

_FENCE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)(?:\n```|\Z)", re.S)
_PACKAGE_LINE = re.compile(r"^[ \t]*package\s+[\w.]+\s*;[ \t]*\n?", re.M)


def extract_code(model_output: str) -> str:
    """Pull Java source out of a model reply; clean source passes through untouched."""
    if "```" not in model_output:
        return model_output
    blocks = _FENCE.findall(model_output)
    if not blocks:
        return model_output.replace("```", "")
    java = [b for lang, b in blocks if lang.lower() in ("java", "")]
    code = (java or [blocks[0][1]])[0]
    return code.strip("\n") + "\n"


def _dedupe_packages(code: str) -> str:
    seen = False

    def keep_first(m: re.Match) -> str:
        nonlocal seen
        if seen:
            return ""
        seen = True
        return m.group(0)

    return _PACKAGE_LINE.sub(keep_first, code)


def _used_type_names(root) -> set[str]:
    used: set[str] = set()
    for n in walk(root):
        if n.type == "type_identifier":
            parent = n.parent
            if parent is not None and parent.type == "scoped_type_identifier" and parent.named_children[0] != n:
                continue
            used.add(text(n))
        elif n.type in ("marker_annotation", "annotation"):
            name = n.child_by_field_name("name")
            if name is not None and name.type == "identifier":
                used.add(text(name))
        elif n.type in ("method_invocation", "field_access"):
            obj = n.child_by_field_name("object")
            if obj is not None and obj.type == "identifier" and text(obj)[:1].isupper():
                used.add(text(obj))
    return used


def apply_lightweight_fixes(
    test_code: str,
    cls: SourceClass | None = None,
    known_imports: Mapping[str, str] | None = None,
    target_name: str | None = None,
) -> str:
    """Deterministic clean-ups applied to model output before compiling.

    Strips markdown fences, drops duplicate package lines, adds a missing
    package declaration, renames the public test class to ``target_name``
    and inserts imports for unresolved simple names. Idempotent.
    """
    code = _dedupe_packages(extract_code(test_code))
    tree = parse_tree(code)
    root = tree.root_node
    pkg_node = next((c for c in root.named_children if c.type == "package_declaration"), None)
    package = ""
    if pkg_node is not None:
        package = text(pkg_node)[len("package"):].rstrip(";").strip()
    elif cls is not None and cls.package:
        package = cls.package
        code = f"package {package};\n\n" + code
        tree = parse_tree(code)
        root = tree.root_node

    if target_name:
        code = _rename_class(code, root, target_name)
        tree = parse_tree(code)
        root = tree.root_node

    imports = [c for c in root.named_children if c.type == "import_declaration"]
    imported: set[str] = set()
    wildcard_pkgs: set[str] = set()
    static_names: set[str] = set()
    static_wild: set[str] = set()
    for imp in imports:
        body = text(imp)[len("import"):].rstrip(";").strip()
        is_static = body.startswith("static ")
        body = body[len("static "):].strip() if is_static else body
        body = body.replace(" ", "")
        if is_static:
            if body.endswith(".*"):
                static_wild.add(body[:-2])
            else:
                static_names.add(body.rsplit(".", 1)[-1])
        elif body.endswith(".*"):
            wildcard_pkgs.add(body[:-2])
        else:
            imported.add(body.rsplit(".", 1)[-1])

    declared = set()
    declared_methods = set()
    for n in walk(root):
        if n.type in ("class_declaration", "interface_declaration", "enum_declaration", "type_parameter"):
            name = n.child_by_field_name("name")
            if name is None and n.type == "type_parameter" and n.named_children:
                name = n.named_children[0]
            if name is not None:
                declared.add(text(name))
        elif n.type == "method_declaration":
            declared_methods.add(text(n.child_by_field_name("name")))

    table = dict(JDK_TYPES)
    table.update(JUNIT4_TYPES)
    if known_imports:
        table.update(known_imports)

    new_imports: set[str] = set()
    for name in sorted(_used_type_names(root) - imported - declared):
        fq = table.get(name)
        if fq is None:
            continue
        pkg = fq.rsplit(".", 1)[0] if "." in fq else ""
        if pkg == package or pkg in wildcard_pkgs or pkg == "java.lang":
            continue
        new_imports.add(f"import {fq};")

    if "org.junit.Assert" not in static_wild:
        for n in walk(root):
            if n.type == "method_invocation" and n.child_by_field_name("object") is None:
                name = text(n.child_by_field_name("name"))
                if name in JUNIT4_ASSERTIONS and name not in static_names and name not in declared_methods:
                    new_imports.add(f"import static org.junit.Assert.{name};")

    if not new_imports:
        return code
    ordered = sorted(i for i in new_imports if not i.startswith("import static")) + sorted(
        i for i in new_imports if i.startswith("import static")
    )
    block = "\n".join(ordered) + "\n"
    if imports:
        pos = imports[-1].end_byte
        data = code.encode("utf-8")
        return (data[:pos] + b"\n" + block.rstrip("\n").encode("utf-8") + data[pos:]).decode("utf-8")
    if pkg_node is not None or package:
        pkg = next((c for c in root.named_children if c.type == "package_declaration"), None)
        if pkg is not None:
            data = code.encode("utf-8")
            pos = pkg.end_byte
            return (data[:pos] + b"\n\n" + block.rstrip("\n").encode("utf-8") + data[pos:]).decode("utf-8")
    return block + "\n" + code


def _rename_class(code: str, root, target: str) -> str:
    decl = next((c for c in root.named_children if c.type == "class_declaration" and "public" in text(c).split("{", 1)[0].split()), None)
    if decl is None:
        decl = next((c for c in root.named_children if c.type == "class_declaration"), None)
    if decl is None:
        return code
    name_node = decl.child_by_field_name("name")
    old = text(name_node)
    if old == target:
        return code
    spans = [(name_node.start_byte, name_node.end_byte)]
    body = decl.child_by_field_name("body")
    if body is not None:
        for member in body.named_children:
            if member.type == "constructor_declaration":
                n = member.child_by_field_name("name")
                if text(n) == old:
                    spans.append((n.start_byte, n.end_byte))
    data = code.encode("utf-8")
    for start, end in sorted(spans, reverse=True):
        data = data[:start] + target.encode("utf-8") + data[end:]
    return data.decode("utf-8")


# --------------------------------------------------------------------------
# diagnostics


_JAVAC_LINE = re.compile(r"^(?P<file>[^\s:][^:]*\.java):(?P<line>\d+): (?P<kind>error|warning): (?P<msg>.*)$")


def parse_javac_output(output: str) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    lines = output.splitlines()
    i = 0
    while i < len(lines):
        m = _JAVAC_LINE.match(lines[i])
        if not m:
            i += 1
            continue
        msg = [m.group("msg")]
        i += 1
        # javac follows with the source line, a caret line and optional symbol/location lines
        while i < len(lines) and not _JAVAC_LINE.match(lines[i]) and not re.match(r"^\d+ (error|warning)s?$", lines[i]):
            extra = lines[i].strip()
            if extra.startswith(("symbol:", "location:", "required:", "found:", "reason:")):
                msg.append(extra)
            i += 1
        diags.append(Diagnostic(Path(m.group("file")).name, int(m.group("line")), " ".join(msg), m.group("kind")))
    return diags


def truncate_diagnostics(diags: Sequence[Diagnostic], max_records: int = 5, max_chars: int = 2000) -> str:
    """Render the first error records for a repair prompt, bounded in size."""
    errors = [d for d in diags if d.kind == "error"][:max_records]
    parts = []
    used = 0
    for d in errors:
        header = f"{d.file}:{d.line}: error: "
        body = d.message
        room = max_chars - used - len(header) - 1
        if room <= 0:
            break
        if len(body) > room:
            body = body[: max(room - 3, 0)] + "..."
        entry = header + body
        parts.append(entry)
        used += len(entry) + 1
    return "\n".join(parts)


def render_failures(result: TestRunResult, max_records: int = 5, max_chars: int = 2000) -> str:
    parts = []
    for f in result.failures[:max_records]:
        line = f"{f.test_name}: {f.exception_type}: {f.message}"
        if f.first_frame:
            line += f"\n    at {f.first_frame}"
        parts.append(line)
    out = "\n".join(parts)
    return out if len(out) <= max_chars else out[: max_chars - 3] + "..."


ASSERTION_TYPES = frozenset({
    "java.lang.AssertionError",
    "org.junit.ComparisonFailure",
    "org.junit.internal.ArrayComparisonFailure",
    "junit.framework.AssertionFailedError",
    "junit.framework.ComparisonFailure",
    "org.opentest4j.AssertionFailedError",
})

_JUNIT_HEADER = re.compile(r"^\d+\) (?P<test>[^()\s]+)\((?P<cls>[^()]+)\)$")


def classify_exception(exception_type: str) -> str:
    return ASSERTION_FAILURE if exception_type in ASSERTION_TYPES else RUNTIME_EXCEPTION


def parse_junit_output(output: str, test_methods: Sequence[str]) -> TestRunResult:
    """Parse JUnitCore console output into per-test outcomes."""
    lines = output.splitlines()
    failures: list[TestFailure] = []
    i = 0
    while i < len(lines):
        m = _JUNIT_HEADER.match(lines[i].strip())
        if not m:
            i += 1
            continue
        test = m.group("test")
        i += 1
        exc_line = lines[i].strip() if i < len(lines) else ""
        exc_type, _, message = exc_line.partition(":")
        i += 1
        msg_lines = [message.strip()]
        frame = ""
        while i < len(lines) and not _JUNIT_HEADER.match(lines[i].strip()):
            stripped = lines[i].strip()
            if stripped.startswith("at "):
                if not frame:
                    frame = stripped[3:]
            elif not frame and stripped and not stripped.startswith(("FAILURES!!!", "Tests run:")):
                msg_lines.append(stripped)
            i += 1
        failures.append(TestFailure(test, exc_type.strip(), "\n".join(x for x in msg_lines if x), frame))

    if not failures and not re.search(r"^OK \(\d+ tests?\)", output, re.M) and "Tests run:" not in output:
        raise RunnerCrash(output[-500:] or "test runner produced no output")

    outcomes = {name: PASSED for name in test_methods}
    by_name: dict[str, TestFailure] = {}
    class_level: list[TestFailure] = []
    for f in failures:
        if f.test_name in outcomes:
            by_name.setdefault(f.test_name, f)
        else:
            class_level.append(f)
    out_failures: list[TestFailure] = []
    for name in test_methods:
        if name in by_name:
            f = by_name[name]
            outcomes[name] = classify_exception(f.exception_type)
            out_failures.append(f)
        elif class_level:
            f = class_level[0]
            outcomes[name] = RUNTIME_EXCEPTION
            out_failures.append(TestFailure(name, f.exception_type, f.message, f.first_frame))
    return TestRunResult(outcomes=outcomes, failures=tuple(out_failures))


def junit_test_methods(source: str) -> list[str]:
    tree = parse_tree(source)
    names = []
    for n in walk(tree.root_node):
        if n.type == "method_declaration" and "Test" in annotations_of(n):
            names.append(text(n.child_by_field_name("name")))
    return names


# --------------------------------------------------------------------------
# JaCoCo


_PRIMS = {"B": "byte", "C": "char", "D": "double", "F": "float", "I": "int", "J": "long", "S": "short", "Z": "boolean", "V": "void"}


def descriptor_param_types(desc: str) -> list[str]:
    """``(Ljava/lang/String;[I)V`` -> ``['String', 'int[]']`` (simple names)."""
    if not desc.startswith("("):
        raise MalformedReport(f"bad method descriptor {desc!r}")
    out = []
    i, end = 1, desc.index(")")
    while i < end:
        dims = 0
        while desc[i] == "[":
            dims += 1
            i += 1
        ch = desc[i]
        if ch == "L":
            semi = desc.index(";", i)
            name = desc[i + 1:semi].split("/")[-1].split("$")[-1]
            i = semi + 1
        elif ch in _PRIMS:
            name = _PRIMS[ch]
            i += 1
        else:
            raise MalformedReport(f"bad method descriptor {desc!r}")
        out.append(name + "[]" * dims)
    return out


def jacoco_signature(class_name: str, method_name: str, desc: str) -> str:
    return f"{class_name.replace('/', '.')}#{method_name}({','.join(descriptor_param_types(desc))})"


def _counter(el, kind: str) -> tuple[int, int]:
    for c in el.findall("counter"):
        if c.get("type") == kind:
            missed, covered = int(c.get("missed", 0)), int(c.get("covered", 0))
            return covered, missed + covered
    return 0, 0


def parse_jacoco_xml(xml_text: str, focal_signatures: Sequence[str] = ()) -> CoverageReport:
    """Map JaCoCo method entries onto canonical signatures.

    Each XML entry yields at most one signature; a second entry erasing to the
    same signature is reported rather than merged. Focal signatures absent
    from the report get zeroed counts and a diagnostic.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise MalformedReport(str(exc)) from exc
    if root.tag != "report":
        raise MalformedReport(f"unexpected root element <{root.tag}>")
    report = CoverageReport()
    for cls in root.iter("class"):
        cname = cls.get("name")
        if cname is None:
            raise MalformedReport("class element without name")
        for m in cls.findall("method"):
            sig = jacoco_signature(cname, m.get("name", ""), m.get("desc", "()V"))
            bc, bt = _counter(m, "BRANCH")
            lc, lt = _counter(m, "LINE")
            if sig in report.methods:
                report.diagnostics.append(f"duplicate coverage entry for {sig}; kept the first")
                continue
            report.methods[sig] = MethodCoverage(bc, bt, lc, lt)
    for sig in focal_signatures:
        if sig not in report.methods:
            report.diagnostics.append(f"no coverage entry for {sig}")
            report.methods[sig] = MethodCoverage()
    return report


# --------------------------------------------------------------------------
# subprocess toolchain


def _env_path(name: str) -> Path | None:
    value = os.environ.get(name)
    return Path(value) if value else None


@dataclass
class ToolchainConfig:
    jdk_home: Path | None = None
    junit_jar: Path | None = None
    hamcrest_jar: Path | None = None
    jacoco_agent_jar: Path | None = None
    jacoco_cli_jar: Path | None = None
    project_classpath: list[Path] = field(default_factory=list)
    project_classes: Path | None = None
    compile_timeout: float = 60.0
    run_timeout: float = 120.0
    release: str = "8"

    @classmethod
    def from_env(cls, **overrides) -> "ToolchainConfig":
        cfg = cls(
            jdk_home=_env_path("JTESTGEN_JDK_HOME") or _env_path("JAVA_HOME"),
            junit_jar=_env_path("JTESTGEN_JUNIT_JAR"),
            hamcrest_jar=_env_path("JTESTGEN_HAMCREST_JAR"),
            jacoco_agent_jar=_env_path("JTESTGEN_JACOCO_AGENT"),
            jacoco_cli_jar=_env_path("JTESTGEN_JACOCO_CLI"),
        )
        for k, v in overrides.items():
            setattr(cfg, k, v)
        return cfg

    def tool(self, name: str) -> str | None:
        if self.jdk_home is not None:
            candidate = self.jdk_home / "bin" / name
            return str(candidate) if candidate.exists() else None
        return shutil.which(name)

    def missing_components(self) -> list[str]:
        missing = [t for t in ("javac", "java") if self.tool(t) is None]
        for label, p in (("JUnit 4 jar", self.junit_jar), ("hamcrest jar", self.hamcrest_jar),
                         ("JaCoCo agent jar", self.jacoco_agent_jar), ("JaCoCo CLI jar", self.jacoco_cli_jar)):
            if p is None or not Path(p).exists():
                missing.append(label)
        return missing


def _package_of(source: str) -> str:
    m = re.search(r"^\s*package\s+([\w.]+)\s*;", source, re.M)
    return m.group(1) if m else ""


class JavaToolchain:
    """javac + JUnitCore + JaCoCo driven through subprocesses."""

    def __init__(self, config: ToolchainConfig, log_path: Path | None = None):
        self.config = config
        self.log_path = log_path

    # -- helpers
    def _require(self, name: str) -> str:
        exe = self.config.tool(name)
        if exe is None:
            raise ToolchainMissing(f"{name} not found (set JTESTGEN_JDK_HOME or put a JDK 8 on PATH)")
        return exe

    def _classpath(self, workspace: Path, with_junit: bool = True) -> str:
        parts = [str(workspace / "classes")] + [str(p) for p in self.config.project_classpath]
        if self.config.project_classes is not None:
            parts.append(str(self.config.project_classes))
        if with_junit:
            for jar in (self.config.junit_jar, self.config.hamcrest_jar):
                if jar is None or not Path(jar).exists():
                    raise ToolchainMissing(f"missing jar: {jar}")
                parts.append(str(jar))
        return os.pathsep.join(parts)

    def _run(self, op: str, cmd: list[str], cwd: Path, timeout: float) -> subprocess.CompletedProcess:
        start = time.monotonic()
        proc = subprocess.run(cmd, cwd=cwd, capture_output=True, text=True, timeout=timeout)
        if self.log_path is not None:
            rec = {"op": op, "cmd": cmd, "returncode": proc.returncode, "seconds": round(time.monotonic() - start, 3)}
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")
        return proc

    # -- protocol
    def compile(self, test_file: Path, workspace: Path) -> CompileResult:
        if self.config.compile_timeout <= 0:
            raise CompileTimeout("compile budget is zero")
        javac = self._require("javac")
        out = workspace / "classes"
        out.mkdir(parents=True, exist_ok=True)
        level = "1.8" if self.config.release == "8" else self.config.release
        cmd = [javac, "-encoding", "UTF-8", "-nowarn", "-source", level, "-target", level,
               "-d", str(out), "-cp", self._classpath(workspace), str(test_file)]
        try:
            proc = self._run("compile", cmd, workspace, self.config.compile_timeout)
        except subprocess.TimeoutExpired as exc:
            raise CompileTimeout(f"javac exceeded {self.config.compile_timeout}s") from exc
        diags = parse_javac_output(proc.stderr + "\n" + proc.stdout)
        if proc.returncode != 0 and not any(d.kind == "error" for d in diags):
            diags.append(Diagnostic(Path(test_file).name, 0, (proc.stderr or proc.stdout).strip()[:500] or "javac failed", "error"))
        return CompileResult(tuple(diags))

    def run_tests(self, test_file: Path, workspace: Path) -> TestRunResult:
        if self.config.run_timeout <= 0:
            raise RunTimeout("run budget is zero")
        java = self._require("java")
        source = Path(test_file).read_text(encoding="utf-8")
        pkg = _package_of(source)
        fqcn = f"{pkg}.{Path(test_file).stem}" if pkg else Path(test_file).stem
        cmd = [java]
        agent = self.config.jacoco_agent_jar
        if agent is not None and Path(agent).exists():
            exec_file = workspace / "jacoco.exec"
            if exec_file.exists():
                exec_file.unlink()
            cmd.append(f"-javaagent:{agent}=destfile={exec_file}")
        cmd += ["-cp", self._classpath(workspace), "org.junit.runner.JUnitCore", fqcn]
        try:
            proc = self._run("run", cmd, workspace, self.config.run_timeout)
        except subprocess.TimeoutExpired as exc:
            raise RunTimeout(f"tests exceeded {self.config.run_timeout}s") from exc
        return parse_junit_output(proc.stdout + "\n" + proc.stderr, junit_test_methods(source))

    def measure_coverage(self, test_file: Path, focal_signatures: Sequence[str], workspace: Path) -> CoverageReport:
        agent, cli = self.config.jacoco_agent_jar, self.config.jacoco_cli_jar
        if agent is None or cli is None or not Path(agent).exists() or not Path(cli).exists():
            raise AgentMissing("JaCoCo agent/CLI jars are not configured")
        exec_file = workspace / "jacoco.exec"
        if not exec_file.exists():
            raise MalformedReport("no execution data; were the tests run under the agent?")
        java = self._require("java")
        xml_out = workspace / "jacoco.xml"
        cmd = [java, "-jar", str(cli), "report", str(exec_file), "--xml", str(xml_out)]
        for cf in self._owner_classfiles(focal_signatures):
            cmd += ["--classfiles", str(cf)]
        try:
            proc = self._run("coverage", cmd, workspace, self.config.run_timeout)
        except subprocess.TimeoutExpired as exc:
            raise RunTimeout("coverage report generation timed out") from exc
        if proc.returncode != 0 or not xml_out.exists():
            raise MalformedReport(proc.stderr[-500:])
        return parse_jacoco_xml(xml_out.read_text(encoding="utf-8"), focal_signatures)

    def _owner_classfiles(self, focal_signatures: Sequence[str]) -> list[Path]:
        base = self.config.project_classes
        if base is None:
            return []
        files: list[Path] = []
        for owner in sorted({s.split("#", 1)[0] for s in focal_signatures}):
            rel = Path(*owner.split("."))
            main = base / rel.with_suffix(".class")
            if main.exists():
                files.append(main)
                files.extend(sorted(main.parent.glob(rel.name + "$*.class")))
        return files or [base]

    def build_project(self, sources: Sequence[Path], out_dir: Path) -> CompileResult:
        """Compile project sources so generated tests can link against them."""
        javac = self._require("javac")
        out_dir.mkdir(parents=True, exist_ok=True)
        cmd = [javac, "-encoding", "UTF-8", "-nowarn", "-g", "-d", str(out_dir)]
        if self.config.project_classpath:
            cmd += ["-cp", os.pathsep.join(map(str, self.config.project_classpath))]
        cmd += [str(s) for s in sources]
        proc = self._run("build", cmd, out_dir, self.config.compile_timeout)
        diags = parse_javac_output(proc.stderr)
        if proc.returncode != 0 and not any(d.kind == "error" for d in diags):
            diags.append(Diagnostic("<project>", 0, proc.stderr.strip()[:500] or "javac failed"))
        return CompileResult(tuple(diags))
