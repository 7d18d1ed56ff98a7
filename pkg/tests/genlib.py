"""Seeded structured generators over the surface grammar, for round-trip
and property tests."""

import random

from qhoare.core import (
    And, App, ARef, Ascribe, BindCmd, BindRun, BoolLit, BoolT, Bot,
    CellGroup, Compose, Decl, Do, Emb, Emp, Entangled, ExistsHeap,
    ExistsVar, ForallHeap, ForallVar, GhostRef, HeapId, HEmpty, HoareT,
    HVar, IdAt, IfCmd, IfTerm, Implies, InDom, Ket, KetVec, Lam, LetEq,
    Lookup, MatrixLit, MatrixT, MeasQbit, MkQbit, MemberOf, Not, Or, Pair,
    PiT, PointsTo, Program, PureT, QbitT, Replace, Ret, TensorT, Top,
    UnitT, UnitVal, Upd, UT, Var, WildcardState, ApplyU,
)

NAMES = ["x", "y", "z", "f", "g", "qa", "qb", "a", "b", "c", "m1", "w"]
HNAMES = ["h", "h1", "g0"]
AREFS = ["P0", "P1", "P2", "Q0"]
KETS = ["0", "1", "+", "-"]


class Gen:
    def __init__(self, seed: int):
        self.rng = random.Random(seed)

    def pick(self, xs):
        return self.rng.choice(xs)

    def name(self):
        return self.pick(NAMES)

    # --- types

    def type_(self, depth=2):
        if depth <= 0:
            return self.pick([UnitT(), BoolT(), QbitT(), UT(), PureT()])
        k = self.rng.randrange(8)
        if k < 4:
            return self.type_(0)
        if k == 4:
            return TensorT(self.type_(depth - 1), self.type_(depth - 1))
        if k == 5:
            return PiT(self.name(), self.type_(depth - 1),
                       self.type_(depth - 1))
        return self.hoare(depth - 1)

    def hoare(self, depth=1):
        vctx = []
        if self.rng.random() < 0.4:
            vctx.append((self.pick(["gx", "gy"]), PureT()))
        hctx = tuple(self.pick([[], ["h"]])) if self.rng.random() < 0.3 \
            else ()
        binder = (self.name(),) if self.rng.random() < 0.7 else ("a", "b")
        return HoareT(tuple(vctx), tuple(hctx), self.assertion(depth),
                      binder, self.type_(0), self.assertion(depth))

    # --- state expressions

    def state(self):
        k = self.rng.randrange(6)
        if k < 3:
            return Ket(self.pick(KETS))
        if k == 3:
            return Ket("phi+")
        if k == 4:
            return GhostRef(self.name())
        return WildcardState()

    def loc(self, pair_ok=True):
        if pair_ok and self.rng.random() < 0.25:
            return Pair(Emb(Var(self.name())), Emb(Var(self.name())))
        return Emb(Var(self.name()))

    # --- heap expressions

    def heap_expr(self, depth=1):
        if depth <= 0 or self.rng.random() < 0.4:
            return self.pick([HEmpty(), HVar(self.pick(HNAMES))])
        return Upd(self.heap_expr(depth - 1), self.loc(pair_ok=False),
                   self.state())

    # --- assertions

    def atom(self):
        k = self.rng.randrange(10)
        if k == 0:
            return Top()
        if k == 1:
            return Bot()
        if k == 2:
            return Emp()
        if k == 3:
            return IdAt(None, self.operand(), self.operand())
        if k == 4:
            return PointsTo(self.loc(), self.state())
        if k == 5:
            return Lookup(self.loc(pair_ok=False), self.state())
        if k == 6:
            return MemberOf(Emb(Var(self.name())),
                            tuple(Ket(self.pick(KETS))
                                  for _ in range(self.rng.randrange(1, 3))))
        if k == 7:
            return HeapId(self.heap_expr(), self.heap_expr())
        if k == 8:
            return InDom(self.heap_expr(), Emb(Var(self.name())))
        return Entangled(Emb(Var(self.name())))

    def operand(self):
        k = self.rng.randrange(5)
        if k == 0:
            return BoolLit(self.rng.random() < 0.5)
        if k == 1:
            return Ket(self.pick(KETS))
        if k == 2:
            return WildcardState()
        return Emb(Var(self.name()))

    def delta_side(self):
        k = self.rng.randrange(4)
        if k == 0:
            return Emp()
        if k == 3:
            return CellGroup(tuple(
                PointsTo(self.loc(), self.state())
                for _ in range(self.rng.randrange(2, 4))))
        return PointsTo(self.loc(), self.state())

    def assertion(self, depth=3):
        if depth <= 0:
            return self.atom()
        k = self.rng.randrange(12)
        if k == 0:
            return And(self.assertion(depth - 1), self.assertion(depth - 1))
        if k == 1:
            return Or(self.assertion(depth - 1), self.assertion(depth - 1))
        if k == 2:
            return Implies(self.assertion(depth - 1),
                           self.assertion(depth - 1))
        if k == 3:
            return Not(self.assertion(depth - 1))
        if k == 4:
            return ExistsVar(self.name(), self.type_(0),
                             self.assertion(depth - 1))
        if k == 5:
            return ForallVar(self.name(), self.type_(0),
                             self.assertion(depth - 1))
        if k == 6:
            return self.pick([ExistsHeap, ForallHeap])(
                self.pick(HNAMES), self.assertion(depth - 1))
        if k == 7:
            return Compose(self.assertion(depth - 1),
                           self.pick([self.delta_side(),
                                      Replace(self.delta_side(),
                                              self.delta_side())]))
        if k == 8:
            return Replace(self.delta_side(), self.delta_side())
        if k == 9:
            return ARef(self.pick(AREFS))
        return self.atom()

    # --- terms

    def matrix(self):
        def entry():
            re = self.pick([0.0, 1.0, -1.0, 0.5, 0.70710678])
            im = self.pick([0.0, 0.0, 1.0, -0.5])
            return complex(re, im)
        return MatrixLit(((entry(), entry()), (entry(), entry())))

    def term(self, depth=2):
        if depth <= 0:
            return self.pick([
                UnitVal(), BoolLit(True), BoolLit(False),
                Emb(Var(self.name())), Ket(self.pick(KETS)),
            ])
        k = self.rng.randrange(10)
        if k == 0:
            return Lam(self.name(), self.term(depth - 1))
        if k == 1:
            return Pair(self.term(depth - 1), self.term(depth - 1))
        if k == 2:
            return Emb(App(Var(self.name()), self.term(depth - 1)))
        if k == 3:
            return Ascribe(self.term(depth - 1), self.type_(1))
        if k == 4:
            return IfTerm(self.term(0), self.term(depth - 1),
                          self.term(depth - 1))
        if k == 5:
            return Do(self.comp(depth - 1))
        if k == 6:
            return self.matrix()
        return self.term(0)

    # --- computations

    def command(self, depth=1):
        k = self.rng.randrange(4)
        if k == 0:
            return MkQbit(self.term(0))
        if k == 1:
            return MeasQbit(Emb(Var(self.name())))
        if k == 2:
            return ApplyU(Emb(App(Var("H"), Emb(Var(self.name())))))
        return IfCmd(self.term(0), self.term(max(0, depth - 1)),
                     self.term(max(0, depth - 1)))

    def comp(self, depth=2):
        if depth <= 0:
            return Ret(self.term(0))
        k = self.rng.randrange(4)
        if k == 0:
            return Ret(self.term(depth - 1))
        if k == 1:
            return BindCmd(self.name(), self.command(depth - 1),
                           self.comp(depth - 1))
        if k == 2:
            pat = (self.name(),) if self.rng.random() < 0.7 else ("a", "b")
            return BindRun(pat, Var(self.name()), self.comp(depth - 1))
        return LetEq(self.name(), self.type_(0), self.term(depth - 1),
                     self.comp(depth - 1))

    # --- programs

    def decl(self, name: str):
        return Decl(name, self.type_(2), self.term(2))

    def program(self, n=None):
        n = n if n is not None else self.rng.randrange(1, 4)
        return Program(tuple(self.decl(f"d{i}") for i in range(n)))
