import re
from pathlib import Path

import pytest

from jtestgen.code_model import parse_compilation_unit
from jtestgen.errors import CompileTimeout, MalformedReport, RunnerCrash, ToolchainMissing
from jtestgen.toolchain import (
    ASSERTION_FAILURE,
    PASSED,
    RUNTIME_EXCEPTION,
    Diagnostic,
    JavaToolchain,
    MethodCoverage,
    TestRunResult,
    ToolchainConfig,
    apply_lightweight_fixes,
    descriptor_param_types,
    extract_code,
    junit_test_methods,
    make_test_class_name,
    parse_jacoco_xml,
    parse_javac_output,
    parse_junit_output,
    truncate_diagnostics,
)

CART = parse_compilation_unit("package com.example.shop;\npublic class Cart { public boolean isEmpty() { return true; } }")[0]
KNOWN = {"Cart": "com.example.shop.Cart", "Inventory": "com.example.shop.Inventory", "Money": "com.example.money.Money"}


def test_test_class_names():
    taken = set()
    assert make_test_class_name("Cart", "add", taken) == "Cart_add_Test"
    assert make_test_class_name("Cart", "add", taken) == "Cart_add_1_Test"
    assert make_test_class_name("Cart", "add", taken) == "Cart_add_2_Test"
    assert make_test_class_name("Cart", "add", suffix="SeedTest") == "Cart_add_SeedTest"


def test_extract_code():
    assert extract_code("class A {}") == "class A {}"
    assert extract_code("Sure:\n```java\nclass A {}\n```\nDone") == "class A {}\n"
    assert extract_code("```\nclass B {}\n```") == "class B {}\n"


RAW = """Here you go:
```java
package com.example.shop;
package com.example.shop;

public class Whatever {
    public Whatever() {}
    @Test
    public void t() {
        List<String> xs = new ArrayList<>();
        Money m = null;
        assertTrue(new Cart().isEmpty());
        assertEquals(0, xs.size());
    }
}
```"""


def test_lightweight_fixes():
    out = apply_lightweight_fixes(RAW, CART, KNOWN, "Cart_isEmpty_Test")
    assert out.count("package com.example.shop;") == 1
    assert "public class Cart_isEmpty_Test {" in out and "public Cart_isEmpty_Test() {}" in out
    imports = re.findall(r"^import .*;$", out, re.M)
    assert imports == [
        "import com.example.money.Money;",
        "import java.util.ArrayList;",
        "import java.util.List;",
        "import org.junit.Test;",
        "import static org.junit.Assert.assertEquals;",
        "import static org.junit.Assert.assertTrue;",
    ]
    assert "import com.example.shop.Cart;" not in out  # same package


def test_lightweight_fixes_idempotent_and_adds_package():
    once = apply_lightweight_fixes("public class X { @Test public void t() { fail(); } }", CART, KNOWN, "T")
    assert once.startswith("package com.example.shop;\n\nimport org.junit.Test;\nimport static org.junit.Assert.fail;\n")
    assert apply_lightweight_fixes(once, CART, KNOWN, "T") == once


def test_wildcard_and_existing_imports_respected():
    src = "import java.util.*;\nimport static org.junit.Assert.*;\npublic class T { @Test public void t() { List<String> a; assertTrue(true); } }"
    out = apply_lightweight_fixes(src)
    assert "import java.util.List;" not in out and "import static org.junit.Assert.assertTrue;" not in out
    assert "import org.junit.Test;" in out


JAVAC = """/tmp/ws/Cart_isEmpty_Test.java:7: error: cannot find symbol
        Widget w = new Widget();
        ^
  symbol:   class Widget
  location: class Cart_isEmpty_Test
/tmp/ws/Cart_isEmpty_Test.java:9: warning: [deprecation] foo() in Bar has been deprecated
        bar.foo();
           ^
/tmp/ws/Cart_isEmpty_Test.java:12: error: ';' expected
        int x = 1
                 ^
2 errors
1 warning
"""


def test_parse_javac_output():
    diags = parse_javac_output(JAVAC)
    assert [(d.file, d.line, d.kind) for d in diags] == [
        ("Cart_isEmpty_Test.java", 7, "error"), ("Cart_isEmpty_Test.java", 9, "warning"), ("Cart_isEmpty_Test.java", 12, "error"),
    ]
    assert diags[0].message == "cannot find symbol symbol:   class Widget location: class Cart_isEmpty_Test"


def test_truncate_diagnostics_bounds():
    diags = [Diagnostic("T.java", i, "x" * 900) for i in range(10)]
    out = truncate_diagnostics(diags)
    assert len(out) <= 2000 and out.count("error:") <= 5
    assert truncate_diagnostics(diags[:2], max_chars=10_000).count("\n") == 1


JUNIT_FAIL = """JUnit version 4.13.2
.E.E.
Time: 0.01
There were 2 failures:
1) testA(com.example.shop.Cart_isEmpty_Test)
java.lang.AssertionError: expected:<1> but was:<2>
\tat org.junit.Assert.fail(Assert.java:89)
\tat com.example.shop.Cart_isEmpty_Test.testA(Cart_isEmpty_Test.java:10)
2) testB(com.example.shop.Cart_isEmpty_Test)
java.lang.NullPointerException
\tat com.example.shop.Cart.isEmpty(Cart.java:30)

FAILURES!!!
Tests run: 3,  Failures: 2
"""


def test_parse_junit_output():
    r = parse_junit_output(JUNIT_FAIL, ["testA", "testB", "testC"])
    assert r.outcomes == {"testA": ASSERTION_FAILURE, "testB": RUNTIME_EXCEPTION, "testC": PASSED}
    assert r.failures[0].message == "expected:<1> but was:<2>"
    assert r.failures[1].first_frame == "com.example.shop.Cart.isEmpty(Cart.java:30)"
    assert not r.all_passed


def test_junit_ok_and_crash():
    assert parse_junit_output("JUnit version 4.13.2\n..\nTime: 0\n\nOK (2 tests)\n", ["a", "b"]).all_passed
    with pytest.raises(RunnerCrash):
        parse_junit_output("Error: Could not find or load main class org.junit.runner.JUnitCore", ["a"])


def test_class_level_failure_marks_every_test():
    out = "1) initializationError(T)\njava.lang.Exception: No runnable methods\n\nFAILURES!!!\nTests run: 1,  Failures: 1\n"
    r = parse_junit_output(out, ["a", "b"])
    assert r.outcomes == {"a": RUNTIME_EXCEPTION, "b": RUNTIME_EXCEPTION}


def test_run_result_invariant():
    with pytest.raises(ValueError):
        TestRunResult({"a": RUNTIME_EXCEPTION}, ())
    assert not TestRunResult({}, ()).all_passed


def test_junit_test_methods():
    src = "class T { @Test public void a() {} public void helper() {} @org.junit.Test public void b() {} }"
    assert junit_test_methods(src) == ["a", "b"]


# --------------------------------------------------------------------------
# JaCoCo


@pytest.fixture(scope="module")
def jacoco_xml(fixtures_dir):
    return (fixtures_dir / "jacoco" / "report.xml").read_text()


def test_jacoco_hand_authored_counts(jacoco_xml):
    report = parse_jacoco_xml(jacoco_xml, ["com.example.shop.PriceCalculator#discount(double,int)"])
    assert report.get("com.example.shop.PriceCalculator#discount(double,int)") == MethodCoverage(3, 4, 10, 12)
    assert report.get("com.example.shop.PriceCalculator#applyTax(double,String)") == MethodCoverage(3, 6, 4, 6)
    assert report.diagnostics == []


def test_jacoco_overloads_are_distinct(jacoco_xml):
    report = parse_jacoco_xml(jacoco_xml)
    assert report.get("com.example.shop.PriceCalculator#discount(long,int)") == MethodCoverage(0, 2, 0, 4)
    assert report.get("com.example.shop.PriceCalculator#discount(double,int)") != report.get(
        "com.example.shop.PriceCalculator#discount(long,int)")
    assert report.get("com.example.shop.PriceCalculator#<init>(double)") == MethodCoverage(0, 0, 3, 3)
    assert report.get("com.example.shop.Cart$Line#merge(Line[],Map)") == MethodCoverage(0, 0, 2, 3)


def test_jacoco_missing_focal_and_zero_branches(jacoco_xml):
    report = parse_jacoco_xml(jacoco_xml, ["com.example.shop.Cart#isEmpty()"])
    assert report.get("com.example.shop.Cart#isEmpty()") == MethodCoverage()
    assert report.diagnostics == ["no coverage entry for com.example.shop.Cart#isEmpty()"]
    assert MethodCoverage(0, 0, 3, 3).branch_ratio is None


def test_jacoco_duplicate_entry_kept_first():
    xml = ('<report name="r"><package name="p"><class name="p/A">'
           '<method name="f" desc="(Ljava/util/List;)V"><counter type="LINE" missed="1" covered="1"/></method>'
           '<method name="f" desc="(Ljava/util/List;)V"><counter type="LINE" missed="0" covered="2"/></method>'
           '</class></package></report>')
    report = parse_jacoco_xml(xml)
    assert report.get("p.A#f(List)") == MethodCoverage(0, 0, 1, 2)
    assert len(report.diagnostics) == 1


@pytest.mark.parametrize("bad", ["<report", "<coverage/>", '<report><class/></report>'])
def test_jacoco_malformed(bad):
    with pytest.raises(MalformedReport):
        parse_jacoco_xml(bad)


@pytest.mark.parametrize("desc,types", [
    ("()V", []), ("(DI)D", ["double", "int"]), ("([[ILjava/lang/String;Z)V", ["int[][]", "String", "boolean"]),
    ("(Lcom/x/Outer$Inner;J)V", ["Inner", "long"]),
])
def test_descriptors(desc, types):
    assert descriptor_param_types(desc) == types


def test_coverage_counts_validated():
    with pytest.raises(ValueError):
        MethodCoverage(5, 4, 0, 0)


# --------------------------------------------------------------------------
# subprocess adapter without a JDK


def _empty_config(tmp_path):
    return ToolchainConfig(jdk_home=tmp_path / "no-jdk")


def test_missing_components_listed(tmp_path):
    missing = _empty_config(tmp_path).missing_components()
    assert missing == ["javac", "java", "JUnit 4 jar", "hamcrest jar", "JaCoCo agent jar", "JaCoCo CLI jar"]


def test_compile_without_jdk_raises_toolchain_missing(tmp_path):
    f = tmp_path / "T.java"
    f.write_text("class T {}")
    tc = JavaToolchain(_empty_config(tmp_path), tmp_path / "log.ndjson")
    with pytest.raises(ToolchainMissing):
        tc.compile(f, tmp_path)
    with pytest.raises(ToolchainMissing):
        tc.run_tests(f, tmp_path)


def test_nonpositive_timeout_is_a_compile_timeout(tmp_path):
    f = tmp_path / "T.java"
    f.write_text("class T {}")
    cfg = _empty_config(tmp_path)
    cfg.compile_timeout = 0
    with pytest.raises(CompileTimeout):
        JavaToolchain(cfg).compile(f, tmp_path)


def test_env_config(monkeypatch, tmp_path):
    monkeypatch.setenv("JTESTGEN_JDK_HOME", str(tmp_path))
    monkeypatch.setenv("JTESTGEN_JUNIT_JAR", str(tmp_path / "junit.jar"))
    cfg = ToolchainConfig.from_env()
    assert cfg.jdk_home == tmp_path and cfg.junit_jar == Path(tmp_path / "junit.jar")
