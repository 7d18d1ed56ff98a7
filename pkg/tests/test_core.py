"""AST pretty-printing, free variables, and derived assertion forms."""

from qhoare.core import (
    And, App, Ascribe, BoolLit, BoolT, Decl, Emb, Emp, ExistsVar, GhostRef,
    HeapId, HEmpty, HoareT, HVar, IdAt, Ket, Lam, Lookup, MemberOf, Or,
    Pair, PiT, PointsTo, Program, QbitT, Top, UnitVal, Upd, Var,
    WildcardState, contract_derived, expand_derived, free_vars, pretty,
    well_formed, NameSupply,
)
from genlib import Gen


class TestPretty:
    def test_hoare_type(self):
        ty = HoareT((), (), Emp(), ("r",), BoolT(),
                    And(Emp(), IdAt(None, Emb(Var("r")), BoolLit(False))))
        assert pretty(ty) == "{emp} r : Bool {emp /\\ Id(r, false)}"

    def test_unit_literal(self):
        assert pretty(UnitVal()) == "()"

    def test_points_to_ket(self):
        assert pretty(PointsTo(Emb(Var("qa")), Ket("+"))) == "qa |-> |+\\>"

    def test_pair_location(self):
        loc = Pair(Emb(Var("qa")), Emb(Var("qb")))
        assert pretty(PointsTo(loc, Ket("phi+"))) == \
            "(qa, qb) |-> |\\Phi+\\>"

    def test_kets(self):
        assert pretty(Ket("0")) == "|0\\>"
        assert pretty(Ket("1")) == "|1\\>"
        assert pretty(Ket("-")) == "|-\\>"

    def test_lambda_and_pi(self):
        assert pretty(Lam("x", Emb(Var("x")))) == "\\x. x"
        assert pretty(PiT("a", QbitT(), BoolT())) == "\\Pi a : Qbit. Bool"

    def test_membership(self):
        a = MemberOf(Emb(Var("a")), (Ket("+"), Ket("-")))
        assert pretty(a) == "a \\in {|+\\>, |-\\>}"


class TestFreeVars:
    def test_lambda_closed(self):
        assert free_vars(Lam("x", Emb(Var("x")))) == set()

    def test_application(self):
        term = Emb(App(Var("f"), Emb(Var("x"))))
        assert free_vars(term) == {"f", "x"}

    def test_hoare_post_binder_removed(self):
        post = ExistsVar("x", QbitT(),
                         And(IdAt(None, Emb(Var("x")), Emb(Var("y"))),
                             Top()))
        ty = HoareT((), (), Top(), ("r",), BoolT(), post)
        assert free_vars(ty) == {"y"}

    def test_program_decl_names_not_free(self, corpus):
        for name, prog in corpus.items():
            leftovers = free_vars(prog) - {
                "H", "X", "Y", "Z", "ifQ", "rot", "cond", "mempty",
                "mappend"}
            assert leftovers == set(), (name, leftovers)


class TestDerivedForms:
    def test_emp_expansion(self):
        assert expand_derived(Emp()) == HeapId(HVar("%h"), HEmpty())

    def test_points_to_expansion(self):
        a = PointsTo(Emb(Var("q")), Ket("0"))
        assert expand_derived(a) == HeapId(
            HVar("%h"), Upd(HEmpty(), Emb(Var("q")), Ket("0")))

    def test_member_of_expansion(self):
        a = MemberOf(Emb(Var("a")), (Ket("+"), Ket("-")))
        assert expand_derived(a) == Or(
            IdAt(None, Emb(Var("a")), Ket("+")),
            IdAt(None, Emb(Var("a")), Ket("-")))

    def test_contract_inverts(self):
        cases = [
            Emp(),
            PointsTo(Emb(Var("q")), Ket("1")),
            MemberOf(Emb(Var("a")), (Ket("0"), Ket("1"))),
            And(Emp(), PointsTo(Emb(Var("q")), GhostRef("s"))),
        ]
        for a in cases:
            assert contract_derived(expand_derived(a)) == a

    def test_expand_contract_stable(self):
        # expand(contract(a)) == expand(a) on generated assertions
        gen = Gen(7)
        for i in range(200):
            a = gen.assertion(3)
            lhs = expand_derived(contract_derived(a), supply=NameSupply())
            rhs = expand_derived(a, supply=NameSupply())
            assert lhs == rhs, pretty(a)


class TestWellFormed:
    def test_duplicate_decl(self):
        d = Decl("x", BoolT(), BoolLit(True))
        problems = well_formed(Program((d, d)))
        assert any("duplicate" in p for p in problems)

    def test_duplicate_hoare_context(self):
        ty = HoareT((("x", QbitT()), ("x", BoolT())), (), Top(), ("r",),
                    BoolT(), Top())
        assert well_formed(ty)

    def test_clean_corpus(self, corpus):
        for prog in corpus.values():
            assert well_formed(prog) == []
