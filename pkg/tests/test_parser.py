"""Parsing, diagnostics, round-trips, and mutation robustness."""

import random

import pytest

from qhoare.core import (
    And, BindCmd, Do, Emp, IdAt, MemberOf, Ket, Ret, Top, pretty,
)
from qhoare.parser import parse_assertion, parse_program, ParseResult
from genlib import Gen
from conftest import CORPUS_FILES


def comp_steps(comp):
    """Source-level steps: consecutive bind/return nodes grouped by span."""
    spans = []
    node = comp
    while True:
        span = getattr(node, "span", None)
        key = (span.line if span else None)
        if not spans or spans[-1] != key:
            spans.append(key)
        if isinstance(node, Ret):
            return spans
        node = node.rest


class TestCorpus:
    @pytest.mark.parametrize("path", CORPUS_FILES, ids=lambda p: p.name)
    def test_zero_diagnostics(self, path):
        res = parse_program(path.read_text(), str(path))
        assert res.ok and res.program is not None
        assert res.diagnostics == []

    def test_testbell_shape(self, corpus):
        decl = corpus["testbell.qh"].decl("testBell")
        assert isinstance(decl.body, Do)
        # five source steps: two inits, two unitaries, the measuring pair
        assert len(comp_steps(decl.body.body)) == 5
        # the trailing pair desugars to two binds before the return
        chain = []
        node = decl.body.body
        while not isinstance(node, Ret):
            chain.append(node)
            node = node.rest
        assert len(chain) == 6
        assert all(isinstance(c, BindCmd) for c in chain)

    def test_cross_declaration_references(self, corpus):
        prog = corpus["bellpair.qh"]
        names = [d.name for d in prog.decls]
        assert names.index("qplus") < names.index("bell")

    def test_round_trip_corpus(self, corpus):
        for name, prog in corpus.items():
            res = parse_program(pretty(prog), name)
            assert res.ok, [d.render() for d in res.diagnostics]
            assert res.program == prog


class TestFragments:
    def test_empty_program(self):
        res = parse_program("")
        assert res.ok and res.program.decls == ()

    def test_truncated_do(self):
        res = parse_program("x : Bool = do")
        errors = [d for d in res.diagnostics if d.severity == "error"]
        assert len(errors) == 1
        assert "do" in errors[0].message or "end of input" in errors[0].message

    def test_duplicate_declaration(self):
        res = parse_program("x : Bool = true\nx : Bool = false")
        assert any("duplicate" in d.message for d in res.diagnostics)

    def test_assertion_examples(self):
        a = parse_assertion("emp /\\ Id(a, b)")
        assert isinstance(a, And) and isinstance(a.left, Emp)
        assert isinstance(a.right, IdAt)

        b = parse_assertion("a \\in {|+\\>, |-\\>}")
        assert b == MemberOf(b.term, (Ket("+"), Ket("-")))

        assert isinstance(parse_assertion("T"), Top)

    def test_assertion_error(self):
        res = parse_assertion("emp /\\")
        assert isinstance(res, ParseResult) and not res.ok

    def test_ketvec_round_trip(self):
        from qhoare.core import KetVec, PointsTo, Emb, Var
        s = 2 ** -0.5
        a = PointsTo(Emb(Var("q")), KetVec((s, 0j, 0j, complex(-s))))
        back = parse_assertion(pretty(a))
        assert back == a

    def test_diagnostic_rendering(self):
        res = parse_program("x : Wrong = true", "f.qh")
        err = [d for d in res.diagnostics if d.severity == "error"][0]
        text = err.render()
        assert text.startswith("f.qh:") and ": error: " in text

    def test_spans_inside_source(self):
        src = "x : Bool = do"
        res = parse_program(src)
        for d in res.diagnostics:
            assert 1 <= d.span.line <= src.count("\n") + 1


class TestRoundTripProperty:
    def test_generated_programs(self):
        # parse(pretty(p)) == p over the grammar generator
        count = 0
        for seed in range(260):
            gen = Gen(seed)
            prog = gen.program()
            text = pretty(prog)
            res = parse_program(text)
            assert res.ok, (text, [d.render() for d in res.diagnostics])
            assert res.program == prog, text
            count += 1
        assert count >= 200

    def test_generated_assertions(self):
        for seed in range(220):
            gen = Gen(seed + 1000)
            a = gen.assertion(3)
            text = pretty(a)
            back = parse_assertion(text)
            assert not isinstance(back, ParseResult), (text, back)
            assert back == a, text


MUTATIONS = [
    lambda s: s.replace("{", "", 1),                      # unbalanced brace
    lambda s: s.replace("}", "", 1),
    lambda s: s.replace("(", "", 1),                      # unbalanced paren
    lambda s: s.replace("mkQbit", "mkQubit", 1),          # unknown keyword
    lambda s: s.replace("testBell :", "testBell", 1),     # missing colon
    lambda s: s.replace("=", "", 1),                      # missing equals
    lambda s: s + "\n" + s.splitlines()[-1],              # stray tail
    lambda s: s.replace("<=", "<", 1),                    # broken bind arrow
    lambda s: s.replace("false", "|0>", 1),               # broken ket token
    lambda s: s[: len(s) // 2],                           # truncation
]


class TestRecovery:
    @pytest.mark.parametrize("idx", range(len(MUTATIONS)))
    def test_curated_mutations_produce_diagnostics(self, idx):
        src = CORPUS_FILES[0].read_text()
        for path in CORPUS_FILES:
            if path.name == "testbell.qh":
                src = path.read_text()
        mutated = MUTATIONS[idx](src)
        if mutated == src:
            pytest.skip("mutation did not apply")
        res = parse_program(mutated, f"mut{idx}.qh")
        assert not res.ok
        assert any(d.severity == "error" for d in res.diagnostics)

    def test_byte_mutation_fuzz_never_raises(self):
        rng = random.Random(2024)
        sources = [p.read_bytes() for p in CORPUS_FILES]
        for trial in range(300):
            raw = bytearray(rng.choice(sources))
            pos = rng.randrange(len(raw))
            raw[pos] = rng.randrange(256)
            text = bytes(raw).decode("utf-8", errors="replace")
            parse_program(text, f"fuzz{trial}.qh")  # must not raise

    def test_error_recovery_continues(self):
        src = ("one : Bool = do\n\n"
               "two : Bool = true\n")
        res = parse_program(src)
        assert not res.ok
        assert any(d.name == "two" for d in res.program.decls)
