"""Structured class/method model of Java sources, built on tree-sitter.

Every record here is immutable and carries plain text only, so parsed classes
can be shared freely between worker threads. Operations that need syntax
re-parse the stored text on demand.
"""

from __future__ import annotations

import fnmatch
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import tree_sitter_java as tsjava
from tree_sitter import Language, Node, Parser, Tree

from .errors import ParseError

log = logging.getLogger(__name__)

JAVA = Language(tsjava.language())

CLASS_NODE_TYPES = {
    "class_declaration": "class",
    "interface_declaration": "interface",
    "annotation_type_declaration": "interface",
    "enum_declaration": "enum",
    "record_declaration": "class",
}
COMMENT_TYPES = {"line_comment", "block_comment"}

# Wrapper used when re-parsing a method declaration on its own.
_WRAP_OPEN = "class __W {\n"
_WRAP_CLOSE = "\n}\n"


@dataclass(frozen=True)
class FieldDecl:
    name: str
    type: str
    modifiers: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Param:
    name: str
    type: str


@dataclass(frozen=True)
class InvocationRecord:
    callee_name: str
    receiver_text: str
    arg_count: int
    location: tuple[int, int]


@dataclass(frozen=True)
class MethodInfo:
    name: str
    modifiers: frozenset[str]
    params: tuple[Param, ...]
    return_type: str
    content: str
    invocations: tuple[InvocationRecord, ...] = ()
    signature: str = ""
    is_constructor: bool = False
    line: int = 1
    column: int = 0
    byte_range: tuple[int, int] = (0, 0)

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def is_public(self) -> bool:
        return "public" in self.modifiers


@dataclass(frozen=True)
class SourceClass:
    name: str
    kind: str  # interface | abstract | concrete | enum
    superclass: str | None
    content: str
    fields: tuple[FieldDecl, ...] = ()
    methods: tuple[MethodInfo, ...] = ()
    package: str = ""
    path: str = ""
    modifiers: frozenset[str] = frozenset()
    qualified_name: str = ""
    is_nested: bool = False
    imports: tuple[str, ...] = ()
    line: int = 1
    byte_range: tuple[int, int] = (0, 0)

    @property
    def fqcn(self) -> str:
        return f"{self.package}.{self.qualified_name}" if self.package else self.qualified_name

    @property
    def is_public(self) -> bool:
        return "public" in self.modifiers

    @property
    def constructors(self) -> tuple[MethodInfo, ...]:
        return tuple(m for m in self.methods if m.is_constructor)


# --------------------------------------------------------------------------
# tree-sitter helpers


def parser() -> Parser:
    # Parser objects are not thread-safe; hand out a fresh one per call.
    return Parser(JAVA)


def parse_tree(source: str | bytes) -> Tree:
    data = source.encode("utf-8") if isinstance(source, str) else source
    return parser().parse(data)


def text(node: Node | None) -> str:
    if node is None:
        return ""
    return node.text.decode("utf-8")


def first_error(node: Node) -> Node | None:
    if node.type == "ERROR" or node.is_missing:
        return node
    if not node.has_error:
        return None
    for child in node.children:
        found = first_error(child)
        if found is not None:
            return found
    return node


def walk(node: Node, skip: Sequence[str] = ()) -> Iterator[Node]:
    """Pre-order traversal; subtrees rooted at a type in ``skip`` are pruned."""
    stack = [node]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(c for c in reversed(cur.children) if c.type not in skip)


def walk_postorder(node: Node, skip: Sequence[str] = ()) -> Iterator[Node]:
    for child in node.children:
        if child.type in skip:
            continue
        yield from walk_postorder(child, skip)
    yield node


def named_args(arguments: Node | None) -> list[Node]:
    if arguments is None:
        return []
    return [c for c in arguments.named_children if c.type not in COMMENT_TYPES]


def modifiers_of(node: Node) -> frozenset[str]:
    for child in node.children:
        if child.type == "modifiers":
            return frozenset(
                text(m) for m in child.children if m.type not in ("marker_annotation", "annotation")
            )
    return frozenset()


def annotations_of(node: Node) -> list[str]:
    """Simple names of the annotations on a declaration (``@org.junit.Test`` -> ``Test``)."""
    for child in node.children:
        if child.type == "modifiers":
            return [
                text(m.child_by_field_name("name")).rsplit(".", 1)[-1]
                for m in child.children
                if m.type in ("marker_annotation", "annotation")
            ]
    return []


# --------------------------------------------------------------------------
# type erasure


def _strip_generics(s: str) -> str:
    out, depth = [], 0
    for ch in s:
        if ch == "<":
            depth += 1
        elif ch == ">":
            depth -= 1
        elif depth == 0:
            out.append(ch)
    return "".join(out)


def erase_type(type_text: str, type_vars: dict[str, str] | None = None) -> str:
    """Erase a declared type to the simple-name form used in signatures.

    ``java.util.List<String>`` -> ``List``, ``String...`` -> ``String[]``,
    and a type variable becomes the erasure of its first bound.
    """
    t = re.sub(r"@[\w.]+(\([^)]*\))?\s*", "", type_text)
    t = re.sub(r"\b(final)\b", "", t)
    t = _strip_generics(t).replace(" ", "").replace("\n", "").replace("\t", "")
    dims = 0
    if t.endswith("..."):
        t = t[:-3]
        dims += 1
    while t.endswith("[]"):
        t = t[:-2]
        dims += 1
    base = t.split(".")[-1]
    if type_vars and base in type_vars:
        base = type_vars[base]
    return base + "[]" * dims


def _type_params(node: Node, outer: dict[str, str]) -> dict[str, str]:
    tp = node.child_by_field_name("type_parameters")
    result = dict(outer)
    if tp is None:
        return result
    for param in tp.named_children:
        if param.type != "type_parameter":
            continue
        ids = [c for c in param.named_children if c.type in ("type_identifier", "identifier")]
        if not ids:
            continue
        name = text(ids[0])
        bound = next((c for c in param.named_children if c.type == "type_bound"), None)
        if bound is not None and bound.named_children:
            result[name] = erase_type(text(bound.named_children[0]), outer)
        else:
            result[name] = "Object"
    return result


# --------------------------------------------------------------------------
# parsing


def _params(node: Node) -> tuple[Param, ...]:
    params_node = node.child_by_field_name("parameters")
    out = []
    if params_node is None:
        return ()
    for p in params_node.named_children:
        if p.type == "formal_parameter":
            ptype = text(p.child_by_field_name("type"))
            dims = p.child_by_field_name("dimensions")
            if dims is not None:
                ptype += text(dims)
            out.append(Param(text(p.child_by_field_name("name")), ptype))
        elif p.type == "spread_parameter":
            typ = next(c for c in p.named_children if c.type not in ("modifiers", "variable_declarator"))
            decl = next((c for c in p.named_children if c.type == "variable_declarator"), None)
            name = text(decl.child_by_field_name("name")) if decl is not None else ""
            out.append(Param(name, text(typ) + "..."))
        elif p.type == "receiver_parameter":
            continue
    return tuple(out)


def invocations_in(node: Node, line_offset: int = 0, first_line_col: int = 0) -> list[InvocationRecord]:
    """Call expressions below ``node`` in evaluation (post-) order."""
    records = []
    for n in walk_postorder(node):
        if n.type != "method_invocation":
            continue
        name_node = n.child_by_field_name("name")
        row, col = name_node.start_point
        if row == 0:
            col += first_line_col
        records.append(
            InvocationRecord(
                callee_name=text(name_node),
                receiver_text=text(n.child_by_field_name("object")),
                arg_count=len(named_args(n.child_by_field_name("arguments"))),
                location=(row + 1 + line_offset, col),
            )
        )
    return records


def _method(node: Node, src: bytes, type_vars: dict[str, str], implicit: frozenset[str]) -> MethodInfo:
    is_ctor = node.type in ("constructor_declaration", "compact_constructor_declaration")
    mods = modifiers_of(node) | implicit
    if node.type == "method_declaration" and node.child_by_field_name("body") is None and "default" not in mods and "static" not in mods and "native" not in mods:
        mods = mods | {"abstract"}
    row, col = node.start_point
    return MethodInfo(
        name=text(node.child_by_field_name("name")),
        modifiers=mods,
        params=_params(node),
        return_type="" if is_ctor else text(node.child_by_field_name("type")),
        content=src[node.start_byte:node.end_byte].decode("utf-8"),
        invocations=tuple(invocations_in(node)),
        is_constructor=is_ctor,
        line=row + 1,
        column=col,
        byte_range=(node.start_byte, node.end_byte),
    )


def _class_kind(node: Node, mods: frozenset[str]) -> str:
    kind = CLASS_NODE_TYPES[node.type]
    if kind == "class":
        return "abstract" if "abstract" in mods else "concrete"
    return kind


def _superclass(node: Node) -> str | None:
    sup = node.child_by_field_name("superclass")
    if sup is None:
        return None
    named = [c for c in sup.named_children if c.type not in COMMENT_TYPES]
    return erase_type(text(named[0])) if named else None


def _body_members(body: Node) -> Iterator[Node]:
    for child in body.named_children:
        if child.type == "enum_body_declarations":
            yield from child.named_children
        else:
            yield child


def _collect_classes(
    node: Node,
    src: bytes,
    package: str,
    path: str,
    imports: tuple[str, ...],
    outer_name: str | None,
    outer_vars: dict[str, str],
    out: list[SourceClass],
) -> None:
    for child in node.named_children:
        if child.type in CLASS_NODE_TYPES:
            _build_class(child, src, package, path, imports, outer_name, outer_vars, out)


def _build_class(
    node: Node,
    src: bytes,
    package: str,
    path: str,
    imports: tuple[str, ...],
    outer_name: str | None,
    outer_vars: dict[str, str],
    out: list[SourceClass],
) -> None:
    name = text(node.child_by_field_name("name"))
    mods = modifiers_of(node)
    kind = _class_kind(node, mods)
    qualified = f"{outer_name}${name}" if outer_name else name
    type_vars = _type_params(node, outer_vars)
    body = node.child_by_field_name("body")
    implicit = frozenset({"public"}) if kind == "interface" else frozenset()

    fields: list[FieldDecl] = []
    raw_methods: list[tuple[Node, dict[str, str]]] = []
    nested: list[Node] = []
    if body is not None:
        for member in _body_members(body):
            if member.type in ("field_declaration", "constant_declaration"):
                ftype = text(member.child_by_field_name("type"))
                fmods = modifiers_of(member)
                for decl in member.children_by_field_name("declarator"):
                    fields.append(FieldDecl(text(decl.child_by_field_name("name")), ftype, fmods))
            elif member.type in ("method_declaration", "constructor_declaration", "compact_constructor_declaration"):
                raw_methods.append((member, _type_params(member, type_vars)))
            elif member.type in CLASS_NODE_TYPES:
                nested.append(member)

    cls = SourceClass(
        name=name,
        kind=kind,
        superclass=_superclass(node),
        content=src[node.start_byte:node.end_byte].decode("utf-8"),
        fields=tuple(fields),
        package=package,
        path=path,
        modifiers=mods,
        qualified_name=qualified,
        is_nested=outer_name is not None,
        imports=imports,
        line=node.start_point[0] + 1,
        byte_range=(node.start_byte, node.end_byte),
    )
    methods = []
    for member, mvars in raw_methods:
        m = _method(member, src, mvars, implicit)
        methods.append(_with_signature(m, cls, mvars))
    out.append(replace(cls, methods=tuple(methods)))

    for member in nested:
        _build_class(member, src, package, path, imports, qualified, type_vars, out)
    # local classes declared inside method bodies
    for member, mvars in raw_methods:
        mbody = member.child_by_field_name("body")
        if mbody is None:
            continue
        for n in walk(mbody, skip=("class_body",)):
            if n is not mbody and n.type in CLASS_NODE_TYPES:
                _build_class(n, src, package, path, imports, qualified, mvars, out)


def _with_signature(m: MethodInfo, owner: SourceClass, type_vars: dict[str, str]) -> MethodInfo:
    return replace(m, signature=_signature(m, owner, type_vars))


def _signature(m: MethodInfo, owner: SourceClass, type_vars: dict[str, str]) -> str:
    params = ",".join(erase_type(p.type, type_vars) for p in m.params)
    name = "<init>" if m.is_constructor else m.name
    return f"{owner.fqcn}#{name}({params})"


def parse_compilation_unit(source: str, path: str = "<memory>") -> list[SourceClass]:
    """Parse one ``.java`` file into every class it declares.

    Raises :class:`ParseError` if the file contains any syntax error; nothing
    from such a file is returned.
    """
    src = source.encode("utf-8")
    tree = parse_tree(src)
    root = tree.root_node
    if root.has_error:
        bad = first_error(root)
        loc = (bad.start_point[0] + 1, bad.start_point[1]) if bad is not None else None
        raise ParseError(path, loc)
    package = ""
    imports = []
    for child in root.named_children:
        if child.type == "package_declaration":
            package = text(next(c for c in child.named_children if c.type in ("scoped_identifier", "identifier")))
        elif child.type == "import_declaration":
            imports.append(text(child)[len("import"):].rstrip(";").strip())
    out: list[SourceClass] = []
    _collect_classes(root, src, package, path, tuple(imports), None, {}, out)
    return out


def partition_methods(cls: SourceClass) -> tuple[list[MethodInfo], list[MethodInfo]]:
    """Split methods into focal targets and everything else.

    Focal methods are the public, non-constructor methods of a public,
    top-level, concrete class.
    """
    focal_class = cls.kind == "concrete" and cls.is_public and not cls.is_nested
    focal, other = [], []
    for m in cls.methods:
        if focal_class and m.is_public and not m.is_constructor and "abstract" not in m.modifiers:
            focal.append(m)
        else:
            other.append(m)
    return focal, other


def wrap_member(content: str) -> str:
    return _WRAP_OPEN + content + _WRAP_CLOSE


def reparse_method(m: MethodInfo) -> Node | None:
    """Return the declaration node of ``m`` re-parsed in isolation, or None."""
    tree = parse_tree(wrap_member(m.content))
    body = tree.root_node.named_children[0].child_by_field_name("body") if tree.root_node.named_children else None
    if tree.root_node.has_error or body is None:
        return None
    for member in body.named_children:
        if member.type in ("method_declaration", "constructor_declaration", "compact_constructor_declaration"):
            return member
    return None


def to_file_location(m: MethodInfo, node: Node) -> tuple[int, int]:
    """Map a node of :func:`reparse_method` output back to file coordinates."""
    row, col = node.start_point
    rel = row - 1  # first wrapped line is the class header
    return (m.line + rel, col + m.column if rel == 0 else col)


def extract_invocations(m: MethodInfo) -> list[InvocationRecord]:
    decl = reparse_method(m)
    if decl is None:
        log.warning("could not re-parse body of %s; no invocations extracted", m.signature or m.name)
        return []
    # wrapped row 1 is the method's first line; shift rows and the first-line column
    recs = invocations_in(decl)
    out = []
    for r in recs:
        row = r.location[0] - 1  # 1-based wrapped row -> 0-based
        rel = row - 1
        col = r.location[1] + m.column if rel == 0 else r.location[1]
        out.append(InvocationRecord(r.callee_name, r.receiver_text, r.arg_count, (m.line + rel, col)))
    return out


def build_signature(m: MethodInfo, owner: SourceClass) -> str:
    """Canonical ``pkg.Class#name(Type,...)`` identifier with generics erased."""
    decl = reparse_method(m)
    type_vars: dict[str, str] = {}
    if decl is not None:
        type_vars = _type_params(decl, _class_type_vars(owner))
    return _signature(m, owner, type_vars)


def _class_type_vars(owner: SourceClass) -> dict[str, str]:
    tree = parse_tree(owner.content)
    for n in tree.root_node.named_children:
        if n.type in CLASS_NODE_TYPES:
            return _type_params(n, {})
    return {}


def method_body(decl: Node) -> Node | None:
    return decl.child_by_field_name("body")


# --------------------------------------------------------------------------
# project loading


def iter_java_files(root: Path, exclude: Sequence[str] = ()) -> list[Path]:
    files = []
    for p in sorted(root.rglob("*.java")):
        rel = p.relative_to(root).as_posix()
        if any(fnmatch.fnmatch(rel, pat) for pat in exclude):
            continue
        files.append(p)
    return files


@dataclass
class Corpus:
    root: Path
    classes: list[SourceClass] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)

    def focal_methods(self) -> list[tuple[SourceClass, MethodInfo]]:
        out = []
        for cls in self.classes:
            focal, _ = partition_methods(cls)
            out.extend((cls, m) for m in focal)
        return out

    def symbol_table(self) -> dict[str, str]:
        """Simple name -> fully qualified name for unambiguous top-level types."""
        seen: dict[str, set[str]] = {}
        for cls in self.classes:
            if not cls.is_nested:
                seen.setdefault(cls.name, set()).add(cls.fqcn)
        return {k: next(iter(v)) for k, v in seen.items() if len(v) == 1}

    def find_class(self, fqcn: str) -> SourceClass | None:
        return next((c for c in self.classes if c.fqcn == fqcn), None)


def load_project(root: Path, exclude: Sequence[str] = ()) -> Corpus:
    corpus = Corpus(root=root)
    for path in iter_java_files(root, exclude):
        rel = path.relative_to(root).as_posix()
        try:
            corpus.classes.extend(parse_compilation_unit(path.read_text(encoding="utf-8"), rel))
        except ParseError as exc:
            log.warning("skipping %s", exc)
            corpus.failed.append(rel)
    return corpus
