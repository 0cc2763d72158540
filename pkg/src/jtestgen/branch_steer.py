"""Steer step: branch points, intentions, and the assertion-generation prompt."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Sequence

from tree_sitter import Node

from .code_model import MethodInfo, SourceClass, reparse_method, text, to_file_location, walk
from .errors import PromptOverflow
from .llm_gateway import CompletionRequest, Gateway, estimate_tokens
from .prompts import Templates, render
from .seed_miner import DEFAULT_PROMPT_BUDGET, SeedPrefix, class_context

log = logging.getLogger(__name__)

CONDITIONAL, LOOP, EXCEPTION = "conditional", "loop", "exception"
_LOOPS = ("for_statement", "enhanced_for_statement", "while_statement", "do_statement")


@dataclass(frozen=True)
class BranchPoint:
    kind: str
    condition_text: str
    location: tuple[int, int]
    enclosing_signature: str
    input_dependent: bool = False

    def describe(self) -> str:
        flag = ", input-dependent" if self.input_dependent else ""
        return f"[{self.kind}{flag}] line {self.location[0]}: {self.condition_text}"


@dataclass(frozen=True)
class BranchIntention:
    branch: BranchPoint
    description: str

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError("branch intention description must be non-empty")


@dataclass(frozen=True)
class FunctionIntention:
    purpose: str
    io_behavior: str = ""
    side_effects: str = ""
    corner_cases: str = ""

    def __post_init__(self):
        if not self.purpose.strip():
            raise ValueError("function intention purpose must be non-empty")

    def render(self) -> str:
        rows = [("Purpose", self.purpose), ("Input/output behavior", self.io_behavior),
                ("Side effects", self.side_effects), ("Corner cases", self.corner_cases)]
        return "\n".join(f"{k}: {v}" for k, v in rows if v)


@dataclass(frozen=True)
class SteerPrompt:
    prefix: SeedPrefix
    branch_intentions: tuple[BranchIntention, ...]
    function_intention: FunctionIntention
    rendered: str


# --------------------------------------------------------------------------
# extraction


def _strip_parens(s: str) -> str:
    s = s.strip()
    if s.startswith("(") and s.endswith(")"):
        return s[1:-1].strip()
    return s


def _loop_header(n: Node) -> str:
    if n.type in ("while_statement", "do_statement"):
        return _strip_parens(text(n.child_by_field_name("condition")))
    if n.type == "enhanced_for_statement":
        typ, name, value = (text(n.child_by_field_name(k)) for k in ("type", "name", "value"))
        return f"{typ} {name} : {value}"
    cond = n.child_by_field_name("condition")
    if cond is not None:
        return text(cond)
    return "for (;;)"


def _case_conditions(label: Node, subject: str) -> list[str]:
    values = [c for c in label.named_children if c.type not in ("line_comment", "block_comment")]
    if not values:
        return []
    # `case 2, 3 ->` is one label and one decision point
    return [" || ".join(f"{subject} == {text(v)}" for v in values)]


def _references(node: Node, names: set[str]) -> bool:
    return any(n.type == "identifier" and text(n) in names for n in walk(node, skip=("class_body",)))


def extract_branch_points(focal: MethodInfo) -> list[BranchPoint]:
    decl = reparse_method(focal)
    if decl is None:
        return []
    body = decl.child_by_field_name("body")
    if body is None:
        return []
    params = {p.name for p in focal.params}
    sig = focal.signature
    points: list[BranchPoint] = []

    def add(kind: str, cond: str, node: Node, cond_node: Node | None):
        dep = cond_node is not None and _references(cond_node, params)
        points.append(BranchPoint(kind, cond, to_file_location(focal, node), sig, dep))

    for n in walk(body, skip=("class_body", "class_declaration", "interface_declaration", "enum_declaration")):
        if n.type == "if_statement":
            cond = n.child_by_field_name("condition")
            add(CONDITIONAL, _strip_parens(text(cond)), n, cond)
        elif n.type in ("switch_expression", "switch_statement"):
            subject = n.child_by_field_name("condition")
            subj_text = _strip_parens(text(subject))
            block = n.child_by_field_name("body")
            for label in walk(block, skip=("class_body", "switch_expression", "switch_statement")):
                if label.type == "switch_label" and label.children and label.children[0].type == "case":
                    for cond in _case_conditions(label, subj_text):
                        add(CONDITIONAL, cond, label, subject)
        elif n.type in _LOOPS:
            cond = n.child_by_field_name("condition") or n.child_by_field_name("value")
            add(LOOP, _loop_header(n), n, cond)
        elif n.type == "catch_clause":
            param = next((c for c in n.named_children if c.type == "catch_formal_parameter"), None)
            types = param.child_by_field_name("type") if param is not None else None
            if types is None and param is not None:
                types = next((c for c in param.named_children if c.type in ("catch_type", "type_identifier")), None)
            add(EXCEPTION, f"catch ({text(types)})", n, None)
        elif n.type == "throw_statement":
            expr = n.named_children[0] if n.named_children else None
            add(EXCEPTION, f"throw {text(expr)}", n, expr)
    points.sort(key=lambda p: p.location)
    return points


# --------------------------------------------------------------------------
# intentions


def mechanical_intention(point: BranchPoint) -> str:
    return f"taken when {point.condition_text} holds"


_JSON_OBJECT = re.compile(r"\{.*\}", re.S)


def _load_json(content: str) -> dict | None:
    m = _JSON_OBJECT.search(content or "")
    if not m:
        return None
    try:
        data = json.loads(m.group(0))
    except json.JSONDecodeError:
        return None
    return data if isinstance(data, dict) else None


def infer_branch_intentions(
    points: Sequence[BranchPoint],
    gateway: Gateway,
    focal: MethodInfo | None = None,
    templates: Templates | None = None,
    model_id: str = "gpt-3.5-turbo",
    max_tokens: int = 2048,
) -> list[BranchIntention]:
    """One batched call for all points; missing answers fall back mechanically."""
    if not points:
        return []
    templates = templates or Templates()
    listing = "\n".join(f"{i}. {p.describe()}" for i, p in enumerate(points, 1))
    prompt = render(templates["branch_intentions"], focal_body=focal.content if focal else "", branch_points=listing)
    resp = gateway.complete(CompletionRequest.user(prompt, model_id=model_id, max_tokens=max_tokens, purpose="branch_intentions"))
    answers: dict[int, str] = {}
    data = _load_json(resp.content)
    items = data.get("intentions") if data else None
    if isinstance(items, list):
        for item in items:
            if not isinstance(item, dict):
                continue
            try:
                idx = int(item.get("id"))
            except (TypeError, ValueError):
                continue
            desc = item.get("description")
            if isinstance(desc, str) and desc.strip() and 1 <= idx <= len(points):
                answers.setdefault(idx, desc.strip())
    else:
        log.info("malformed branch intention response; using mechanical descriptions")
    return [BranchIntention(p, answers.get(i, mechanical_intention(p))) for i, p in enumerate(points, 1)]


def summarize_function_intention(
    focal: MethodInfo,
    cls: SourceClass,
    gateway: Gateway,
    templates: Templates | None = None,
    model_id: str = "gpt-3.5-turbo",
    max_tokens: int = 2048,
) -> FunctionIntention:
    templates = templates or Templates()
    prompt = render(
        templates["function_intention"],
        focal_signature=focal.signature,
        focal_body=focal.content,
        class_context=class_context(cls),
    )
    resp = gateway.complete(CompletionRequest.user(prompt, model_id=model_id, max_tokens=max_tokens, purpose="function_intention"))
    data = _load_json(resp.content) or {}

    def field_of(key: str) -> str:
        v = data.get(key)
        return v.strip() if isinstance(v, str) else ""

    purpose = field_of("purpose") or f"Behaviour of {focal.signature}"
    return FunctionIntention(purpose, field_of("io_behavior"), field_of("side_effects"), field_of("corner_cases"))


# --------------------------------------------------------------------------
# prompt assembly


def _render_intentions(intentions: Sequence[BranchIntention]) -> str:
    if not intentions:
        return "(no branches)"
    return "\n".join(f"{i}. {bi.branch.condition_text}: {bi.description}" for i, bi in enumerate(intentions, 1))


def assemble_steer_prompt(
    prefix: SeedPrefix,
    intentions: Sequence[BranchIntention],
    func: FunctionIntention,
    focal_body: str = "",
    test_class_name: str = "",
    templates: Templates | None = None,
    budget_tokens: int = DEFAULT_PROMPT_BUDGET,
) -> SteerPrompt:
    templates = templates or Templates()
    kept = list(intentions)

    def render_with(items):
        return render(
            templates["steer"],
            prefix=prefix.code,
            branch_intentions=_render_intentions(items),
            function_intention=func.render(),
            focal_body=focal_body,
            test_class_name=test_class_name,
        )

    rendered = render_with(kept)
    while estimate_tokens(rendered) > budget_tokens and kept:
        kept.pop()
        rendered = render_with(kept)
    if estimate_tokens(rendered) > budget_tokens:
        raise PromptOverflow("steer prompt exceeds the budget even without branch intentions")
    return SteerPrompt(prefix, tuple(kept), func, rendered)
