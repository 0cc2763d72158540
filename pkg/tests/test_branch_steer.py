import json

import pytest

from conftest import focal
from jtestgen.branch_steer import (
    CONDITIONAL,
    EXCEPTION,
    LOOP,
    BranchIntention,
    FunctionIntention,
    assemble_steer_prompt,
    extract_branch_points,
    infer_branch_intentions,
    mechanical_intention,
    summarize_function_intention,
)
from jtestgen.code_model import parse_compilation_unit
from jtestgen.errors import PromptOverflow
from jtestgen.llm_gateway import StubBackend
from jtestgen.seed_miner import SeedPrefix


@pytest.fixture(scope="module")
def settle(fixtures_dir):
    cls = parse_compilation_unit((fixtures_dir / "misc" / "Orders.java").read_text())[0]
    return next(m for m in cls.methods if m.name == "settle")


def test_branch_fixture_hand_counted(settle):
    points = extract_branch_points(settle)
    kinds = [p.kind for p in points]
    # if (amount < 0), throw, for, catch, if (sum > 1000)
    assert kinds == [CONDITIONAL, EXCEPTION, LOOP, EXCEPTION, CONDITIONAL]
    assert [p.condition_text for p in points] == [
        "amount < 0",
        'throw new IllegalArgumentException("negative")',
        "i < parts.size()",
        "catch (ArithmeticException)",
        "sum > 1000",
    ]
    assert points[0].location == (44, 8)
    assert [p.input_dependent for p in points] == [True, False, True, False, False]


def _method(body: str, params: str = "int x"):
    cls = parse_compilation_unit(f"public class S {{\n    public int f({params}) {{\n{body}\n    }}\n}}\n")[0]
    return cls.methods[0]


def test_switch_labels_and_loops():
    body = """
        switch (x) {
            case 0: case 1: return 1;
            case 2: return 2;
            default: return 3;
        }"""
    points = extract_branch_points(_method(body))
    assert [p.condition_text for p in points] == ["x == 0", "x == 1", "x == 2"]


def test_enhanced_for_and_else_if():
    body = """
        int s = 0;
        for (int v : xs) { s += v; }
        if (s > 0) { return 1; } else if (s < 0) { return -1; }
        while (s > 10) { s--; }
        return 0;"""
    points = extract_branch_points(_method(body, "int[] xs"))
    assert [(p.kind, p.condition_text) for p in points] == [
        (LOOP, "int v : xs"), (CONDITIONAL, "s > 0"), (CONDITIONAL, "s < 0"), (LOOP, "s > 10"),
    ]


def test_no_branches(shop):
    assert extract_branch_points(focal(shop, "isEmpty")[1]) == []


def test_intentions_batched_in_one_call(settle):
    points = extract_branch_points(settle)
    answer = {"intentions": [{"id": 1, "description": "amount is negative"}, {"id": 3, "description": "parts non-empty"}]}
    gw = StubBackend([json.dumps(answer)])
    out = infer_branch_intentions(points, gw, settle)
    assert len(gw.calls) == 1
    assert [bi.description for bi in out] == [
        "amount is negative", mechanical_intention(points[1]), "parts non-empty",
        mechanical_intention(points[3]), mechanical_intention(points[4]),
    ]


def test_malformed_intentions_fall_back(settle):
    points = extract_branch_points(settle)
    out = infer_branch_intentions(points, StubBackend(["I cannot answer in JSON"]), settle)
    assert [bi.description for bi in out] == [mechanical_intention(p) for p in points]


def test_no_points_no_call():
    gw = StubBackend(["{}"])
    assert infer_branch_intentions([], gw) == [] and gw.calls == []


def test_empty_intention_rejected(settle):
    with pytest.raises(ValueError):
        BranchIntention(extract_branch_points(settle)[0], "  ")
    with pytest.raises(ValueError):
        FunctionIntention("")


def test_function_intention(shop):
    cls, m = focal(shop, "restock")
    gw = StubBackend(['{"purpose": "adds stock", "corner_cases": "overflow"}'])
    fi = summarize_function_intention(m, cls, gw)
    assert (fi.purpose, fi.corner_cases, fi.io_behavior) == ("adds stock", "overflow", "")
    fallback = summarize_function_intention(m, cls, StubBackend(["nope"]))
    assert fallback.purpose == f"Behaviour of {m.signature}"


def test_steer_prompt_trims_intentions(settle):
    intentions = [BranchIntention(p, "x" * 400) for p in extract_branch_points(settle)]
    prefix = SeedPrefix("class T {}", settle.signature, 1)
    func = FunctionIntention("settles an amount")
    full = assemble_steer_prompt(prefix, intentions, func, settle.content, "T")
    assert len(full.branch_intentions) == 5 and "// TODO: assert here" in full.rendered
    budget = (len(full.rendered) + 3) // 4 - 200
    trimmed = assemble_steer_prompt(prefix, intentions, func, settle.content, "T", budget_tokens=budget)
    assert 0 < len(trimmed.branch_intentions) < 5
    assert trimmed.branch_intentions == tuple(intentions[: len(trimmed.branch_intentions)])
    with pytest.raises(PromptOverflow):
        assemble_steer_prompt(prefix, intentions, func, settle.content, "T", budget_tokens=10)
