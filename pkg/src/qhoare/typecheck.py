"""Bidirectional type checking with strongest-postcondition synthesis.

Elimination terms synthesize their types; introduction terms are checked
against a given type.  Canonical forms are beta-normal and eta-long,
computed by substitution-based reduction followed by type-directed eta
expansion; no reductions happen under ``do``.

Checking a ``do`` block walks the computation over a set of symbolic
branches, each a symbolic heap plus value bindings.  Quantum commands
delegate to the transformers in :mod:`qhoare.heap`; measurements case-split
on outcomes with projected residual states (the refinement extension) unless
literal mode is selected.  Suspended-computation binds are checked
modularly: the callee's precondition becomes a call obligation, its
footprint is framed out, and its postcondition's heap denotation is spliced
in.  All verification conditions are collected for the prover; checking a
declaration never mutates shared state, so independent declarations may be
checked concurrently once their dependencies are recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import heap as heaplib
from . import sim as simlib
from .core import (
    And, App, ApplyU, ARef, Ascribe, Assn, BindCmd, BindRun, BoolLit, BoolT,
    Bot, Compose, Decl, Do, Emb, Emp, Entangled, ExistsVar, GhostRef, HoareT,
    IdAt, IfCmd, IfTerm, Ket, KetVec, Lam, LetEq, Lookup, MatrixLit, MatrixT,
    MeasQbit, MemberOf, MkQbit, NameSupply, Or, Pair, PiT, PointsTo, Program,
    PureT, QbitT, Ret, Span, TensorT, Top, Ty, UnitT, UnitVal, Upd, UT, Var,
    WildcardState, free_vars, pretty, subst,
)
from .heap import (
    AbsBranch, Cell, SymbolicHeap, UNKNOWN_STATE, cell_assertion,
    delta_assertion, footprint_qubits, heap_from_assertion,
    heap_to_assertions, sp_apply_unitary, sp_init, sp_measure,
)
from .prover import (
    ALLOCATION, CALL_PRE, POSTCONDITION, UNITARITY, Model, Obligation,
    UNKNOWNV,
)
from .sim import UnitaryError, eval_unitary

BRANCH_CAP = 64

BUILTIN_TYPES = {
    "H": PiT("q", QbitT(), UT()),
    "X": PiT("q", QbitT(), UT()),
    "Y": PiT("q", QbitT(), UT()),
    "Z": PiT("q", QbitT(), UT()),
    "ifQ": PiT("q", QbitT(), PiT("u", UT(), UT())),
    "rot": PiT("q", QbitT(), PiT("m", MatrixT(), UT())),
    "cond": PiT("q", QbitT(), PiT("f", PiT("b", BoolT(), UT()), UT())),
    "mempty": UT(),
    "mappend": PiT("u", UT(), PiT("v", UT(), UT())),
}


class CheckError(Exception):
    def __init__(self, message: str, span: Optional[Span] = None):
        super().__init__(message)
        self.message = message
        self.span = span


# ---------------------------------------------------------------------------
# Alpha normalization (canonical bound names, used for type equality and
# trace comparison)


def alpha_normalize(node, counter=None):
    counter = counter if counter is not None else [0]

    def fresh():
        counter[0] += 1
        return f"%a{counter[0]}"

    def ren(n, mapping):
        match n:
            case PiT(x, dom, cod):
                nx = fresh()
                return PiT(nx, ren(dom, mapping),
                           ren(subst(cod, {x: Var(nx)}), mapping))
            case HoareT(vctx, hctx, pre, binder, result, post):
                m = {}
                nvctx = []
                for x, t in vctx:
                    nx = fresh()
                    m[x] = Var(nx)
                    nvctx.append((nx, ren(t, mapping)))
                nbinder = tuple(fresh() for _ in binder)
                bm = dict(m)
                for old, new in zip(binder, nbinder):
                    bm[old] = Var(new)
                return HoareT(tuple(nvctx), hctx,
                              ren(subst(pre, m), mapping), nbinder,
                              ren(subst(result, m), mapping),
                              ren(subst(post, bm), mapping))
            case Lam(x, body):
                nx = fresh()
                return Lam(nx, ren(subst(body, {x: Var(nx)}), mapping))
            case ExistsVar(x, t, body):
                nx = fresh()
                return ExistsVar(nx, ren(t, mapping),
                                 ren(subst(body, {x: Var(nx)}), mapping))
            case _:
                pass
        # generic structural recursion over dataclasses
        if hasattr(n, "__dataclass_fields__"):
            kwargs = {}
            for f in n.__dataclass_fields__:
                v = getattr(n, f)
                if f == "span":
                    kwargs[f] = None
                elif isinstance(v, tuple):
                    kwargs[f] = tuple(
                        ren(i, mapping) if hasattr(i, "__dataclass_fields__")
                        else i for i in v)
                elif hasattr(v, "__dataclass_fields__"):
                    kwargs[f] = ren(v, mapping)
                else:
                    kwargs[f] = v
            return type(n)(**kwargs)
        return n

    return ren(node, {})


def types_equal(a: Ty, b: Ty) -> bool:
    return alpha_normalize(a) == alpha_normalize(b)


# ---------------------------------------------------------------------------
# Normalization: beta reduction + type-directed eta expansion


def _strip(m):
    while True:
        if isinstance(m, Emb) and not isinstance(m.elim, (Var, App)):
            m = m.elim
        elif isinstance(m, Ascribe):
            m = m.term
        else:
            return m


def _reduce(m):
    match m:
        case Emb(inner):
            r = _reduce(inner)
            return Emb(r) if isinstance(r, (Var, App)) else r
        case Ascribe(inner, _):
            return _reduce(inner)
        case App(fn, arg):
            rf = _reduce(fn)
            ra = _reduce(arg)
            target = rf.elim if isinstance(rf, Emb) else rf
            if isinstance(target, Lam):
                return _reduce(subst(
                    target.body,
                    {target.binder: ra.elim if isinstance(ra, Emb) else ra}))
            if isinstance(target, (Var, App)):
                return App(target, ra if not isinstance(ra, (Var, App))
                           else Emb(ra))
            raise CheckError("application of a non-function")
        case Lam(x, body):
            return Lam(x, _mk_intro(_reduce(body)))
        case Pair(a, b):
            return Pair(_mk_intro(_reduce(a)), _mk_intro(_reduce(b)))
        case IfTerm(c, t, e):
            rc = _reduce(c)
            if isinstance(rc, BoolLit):
                return _reduce(t if rc.value else e)
            return IfTerm(_mk_intro(rc), _mk_intro(_reduce(t)),
                          _mk_intro(_reduce(e)))
        case _:
            return m


def _mk_intro(m):
    return Emb(m) if isinstance(m, (Var, App)) else m


def _eta(m, ty: Ty, counter: list):
    m = _mk_intro(m)
    match ty:
        case PiT(x, dom, cod):
            if isinstance(m, Lam):
                return Lam(m.binder,
                           _eta(m.body, subst(cod, {x: Var(m.binder)}),
                                counter))
            counter[0] += 1
            fresh = f"%e{counter[0]}"
            target = m.elim if isinstance(m, Emb) else m
            if not isinstance(target, (Var, App)):
                return m
            return Lam(fresh, _eta(Emb(App(target, Emb(Var(fresh)))),
                                   subst(cod, {x: Var(fresh)}), counter))
        case TensorT(l, r):
            if isinstance(m, Pair):
                return Pair(_eta(m.first, l, counter),
                            _eta(m.second, r, counter))
            return m
        case _:
            return m


def normalize(m, ty: Ty):
    """Beta-normal, eta-long form of ``m`` at ``ty``; idempotent.

    Suspended computations are values: ``do E`` is returned unchanged.
    """
    return _eta(_reduce(m), ty, [0])


# ---------------------------------------------------------------------------
# Results


@dataclass
class TraceStep:
    span: Optional[Span]
    assertion: Assn
    refined: bool = False
    alternatives: int = 0


@dataclass
class CompResult:
    result_name: str
    result_type: Ty
    strongest_post: Assn
    obligations: list
    trace: list


@dataclass
class DeclResult:
    name: str
    signature: Ty
    canonical: Optional[object] = None
    obligations: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    strongest_post: Optional[Assn] = None
    error: Optional[CheckError] = None


@dataclass
class CheckedProgram:
    program: Program
    decls: list  # list[DeclResult]

    def decl(self, name: str) -> DeclResult:
        for d in self.decls:
            if d.name == name:
                return d
        raise KeyError(name)


@dataclass
class _Branch:
    heap: SymbolicHeap
    env: dict
    assumed: list = field(default_factory=list)
    result: object = None

    def copy(self) -> "_Branch":
        return _Branch(self.heap, dict(self.env), list(self.assumed))


# ---------------------------------------------------------------------------
# Checker


class Checker:
    """Checks a program declaration by declaration.

    With ``literal_measurement`` the measurement transformer follows the
    literal rule (no outcome case split).
    """

    def __init__(self, program: Program, literal_measurement: bool = False):
        self.program = program
        self.literal = literal_measurement
        self.supply = NameSupply()
        self.decl_types = {}
        self._reset_decl_state("")

    def _reset_decl_state(self, decl_name: str):
        self._decl = decl_name
        self._obs = []
        self._events = []  # (span, op_id, delta assertion, refined)
        self._op_counter = 0
        self._binders = []  # existential closure, program order
        self._span = None
        self._sp = None

    # --- program

    def check_program(self) -> CheckedProgram:
        results = []
        for decl in self.program.decls:
            results.append(self.check_decl(decl))
            if results[-1].error is None:
                self.decl_types[decl.name] = decl.signature
        return CheckedProgram(self.program, results)

    def check_decl(self, decl: Decl) -> DeclResult:
        self._reset_decl_state(decl.name)
        result = DeclResult(decl.name, decl.signature)
        try:
            self.check_type({}, decl.signature)
            ctx = {}
            result.canonical = self.check(ctx, decl.body, decl.signature,
                                          span=decl.span)
            result.obligations = self._obs
            result.trace = self._assemble_trace()
            result.strongest_post = self._sp
        except CheckError as e:
            result.error = e
        return result

    # --- types

    def check_type(self, ctx: dict, ty: Ty) -> None:
        match ty:
            case UnitT() | BoolT() | QbitT() | UT() | PureT() | MatrixT():
                return
            case TensorT(a, b):
                self.check_type(ctx, a)
                self.check_type(ctx, b)
            case PiT(x, dom, cod):
                self.check_type(ctx, dom)
                self.check_type({**ctx, x: dom}, cod)
            case HoareT(vctx, hctx, _, binder, resultty, _):
                inner = dict(ctx)
                seen = set()
                for x, t in vctx:
                    if x in seen:
                        raise CheckError(f"duplicate context name {x!r}")
                    seen.add(x)
                    self.check_type(inner, t)
                    inner[x] = t
                if len(set(hctx)) != len(hctx):
                    raise CheckError("duplicate heap variable")
                if len(set(binder)) != len(binder):
                    raise CheckError("duplicate name in binder pattern")
                self.check_type(inner, resultty)
            case _:
                raise CheckError(f"not a type: {ty!r}")

    # --- bidirectional terms

    def lookup(self, ctx: dict, name: str) -> Ty:
        if name in ctx:
            return ctx[name]
        if name in self.decl_types:
            return self.decl_types[name]
        if name in BUILTIN_TYPES:
            return BUILTIN_TYPES[name]
        raise CheckError(f"unbound variable {name!r}", self._span)

    def synth(self, ctx: dict, k):
        """Type and canonical form of an elimination term."""
        match k:
            case Var(name):
                ty = self.lookup(ctx, name)
                return ty, normalize(Emb(k), ty)
            case App(fn, arg):
                fty, fc = self.synth(ctx, fn)
                if not isinstance(fty, PiT):
                    raise CheckError(
                        f"cannot apply a value of type {pretty(fty)}",
                        self._span)
                ac = self.check(ctx, arg, fty.domain)
                at = ac.elim if isinstance(ac, Emb) else ac
                rty = subst(fty.codomain, {fty.binder: at})
                canonical = normalize(App(_as_elim(fc), ac), rty)
                return rty, canonical
            case Ascribe(term, ty):
                self.check_type(ctx, ty)
                return ty, self.check(ctx, term, ty)
            case Emb(inner):
                return self.synth(ctx, inner)
        raise CheckError(f"cannot synthesize a type for {pretty(k)!r}",
                         self._span)

    def check(self, ctx: dict, m, ty: Ty, span: Optional[Span] = None):
        """Canonical form of intro term ``m`` at type ``ty``."""
        if span is not None:
            self._span = span
        match (m, ty):
            case (Emb(k), _):
                kt, kc = self.synth(ctx, k)
                if not types_equal(kt, ty):
                    raise CheckError(
                        f"expected {pretty(ty)}, found {pretty(kt)}",
                        self._span)
                return kc
            case (UnitVal(), UnitT()):
                return m
            case (BoolLit(), BoolT()):
                return m
            case (Ket(), PureT()) | (KetVec(), PureT()):
                return m
            case (MatrixLit(), MatrixT()):
                return m
            case (Lam(x, body), PiT(y, dom, cod)):
                inner = {**ctx, x: dom}
                bc = self.check(inner, body, subst(cod, {y: Var(x)}))
                return Lam(x, bc)
            case (Pair(a, b), TensorT(l, r)):
                return Pair(self.check(ctx, a, l), self.check(ctx, b, r))
            case (IfTerm(c, t, e), _):
                cc = self.check(ctx, c, BoolT())
                tc = self.check(ctx, t, ty)
                ec = self.check(ctx, e, ty)
                return normalize(IfTerm(cc, tc, ec), ty)
            case (Do(comp), HoareT()):
                return self.check_do(ctx, comp, ty)
            case (Do(), _):
                raise CheckError(
                    f"a suspended computation needs a Hoare type, "
                    f"not {pretty(ty)}", self._span)
            case _:
                raise CheckError(
                    f"term {pretty(m)} does not have type {pretty(ty)}",
                    self._span)

    # --- computations

    def _kind_of(self, ctx: dict):
        def kind(name: str) -> str:
            t = ctx.get(name)
            if isinstance(t, QbitT):
                return "qubit"
            if isinstance(t, BoolT):
                return "bool"
            if isinstance(t, PureT):
                return "pure"
            return "unknown"
        return kind

    def check_do(self, ctx: dict, comp, hoare: HoareT):
        ctx = dict(ctx)
        for x, t in hoare.var_ctx:
            ctx[x] = t
        branches = self._initial_branches(ctx, hoare.pre)
        out, result_ty = self._steps(ctx, branches, comp, hoare.result,
                                     parent_span=None)
        if not types_equal(result_ty, hoare.result):
            raise CheckError(
                f"computation returns {pretty(result_ty)}, "
                f"declared {pretty(hoare.result)}", self._span)
        models = []
        for b in out:
            env = dict(b.env)
            self._bind_pattern(env, hoare.binder, b.result)
            models.append(Model(b.heap, env))
        self._sp = self._strongest_post(out, hoare.binder)
        self._emit(
            POSTCONDITION, hoare.post, models,
            var_ctx=self._obligation_ctx(ctx, hoare),
            heap_ctx=hoare.heap_ctx or ("%h0",),
            hyps=self._hypotheses(out),
            note="declared postcondition")
        return Do(comp)

    def _obligation_ctx(self, ctx: dict, hoare: Optional[HoareT] = None):
        items = list(ctx.items())
        items += [(x, t) for x, t in self._binders]
        if hoare is not None:
            seen = {x for x, _ in items}
            for x in hoare.binder:
                if x not in seen:
                    items.append((x, hoare.result))
        return tuple(items)

    def _initial_branches(self, ctx: dict, pre: Assn) -> list:
        kind = self._kind_of(ctx)
        abs_branches = heap_from_assertion(pre, kind, self.supply)
        out = []
        for ab in abs_branches:
            env = dict(ab.env)
            for x, t in ctx.items():
                if isinstance(t, PureT):
                    env.setdefault(x, GhostRef(x))
            out.append(_Branch(SymbolicHeap(tuple(ab.cells)), env,
                               list(ab.assumed)))
        return out

    def _bind_pattern(self, env: dict, pattern, value) -> None:
        if len(pattern) == 1:
            env[pattern[0]] = value
            return
        if isinstance(value, tuple) and len(value) == len(pattern):
            for name, v in zip(pattern, value):
                env[name] = v
        else:
            for name in pattern:
                env[name] = UNKNOWNV

    def _hypotheses(self, branches: list) -> list:
        def branch_assn(b: _Branch) -> Assn:
            parts = heap_to_assertions(b.heap)
            for k, v in b.env.items():
                if v is True or v is False:
                    parts.append(IdAt(None, Emb(Var(k)), BoolLit(v)))
            out = parts[0]
            for p in parts[1:]:
                out = And(out, p)
            return out

        if not branches:
            return [Bot()]
        if len(branches) == 1:
            return [branch_assn(branches[0])]
        out = branch_assn(branches[0])
        for b in branches[1:]:
            out = Or(out, branch_assn(b))
        return [out]

    def _value_term(self, v):
        if v is True or v is False:
            return BoolLit(bool(v))
        if v is None:
            return UnitVal()
        if isinstance(v, str):
            return Emb(Var(v))
        if isinstance(v, GhostRef):
            return Emb(Var(v.name))
        if isinstance(v, tuple) and len(v) == 2:
            return Pair(self._value_term(v[0]), self._value_term(v[1]))
        return None

    def _strongest_post(self, branches: list, binder) -> Assn:
        rname = binder[0] if len(binder) == 1 else "%r"

        def branch_sp(b: _Branch) -> Assn:
            parts = heap_to_assertions(b.heap)
            value = b.result
            if len(binder) == 2 and isinstance(value, tuple):
                for name, v in zip(binder, value):
                    t = self._value_term(v)
                    if t is not None:
                        parts.append(IdAt(None, Emb(Var(name)), t))
            else:
                t = self._value_term(value)
                if t is not None:
                    parts.append(IdAt(None, Emb(Var(rname)), t))
            for k, v in b.env.items():
                if (v is True or v is False) and k not in binder:
                    parts.append(IdAt(None, Emb(Var(k)), BoolLit(v)))
            out = parts[0]
            for p in parts[1:]:
                out = And(out, p)
            return out

        if not branches:
            sp = Bot()
        else:
            sp = branch_sp(branches[0])
            for b in branches[1:]:
                sp = Or(sp, branch_sp(b))
        for name, ty in reversed(self._binders):
            sp = ExistsVar(name, ty, sp)
        return sp

    def _emit(self, kind: str, conclusion: Assn, models, var_ctx=(),
              heap_ctx=("%h0",), hyps=None, note: str = "",
              span: Optional[Span] = None):
        ob = Obligation(
            kind=kind, conclusion=conclusion,
            hypotheses=hyps if hyps is not None else [],
            var_ctx=tuple(var_ctx), heap_ctx=tuple(heap_ctx),
            span=span or self._span, note=note, models=models,
            decl=self._decl)
        self._obs.append(ob)
        return ob

    def _record_delta(self, span, op_id, delta, refined=False):
        if delta.is_empty():
            return
        self._events.append((span, op_id, delta_assertion(delta), refined))

    def _assemble_trace(self) -> list:
        steps = []
        for span, op_id, assn, refined in self._events:
            if steps and steps[-1][0] == span:
                steps[-1][1].setdefault(op_id, []).append(assn)
                steps[-1][2] = steps[-1][2] or refined
            else:
                steps.append([span, {op_id: [assn]}, refined])
        out = []
        for span, by_op, refined in steps:
            chain_items = []
            alternatives = 0
            for op_id in sorted(by_op):
                unique = []
                for a in by_op[op_id]:
                    if a not in unique:
                        unique.append(a)
                chain_items.append(unique[0])
                alternatives = max(alternatives, len(unique) - 1)
            label = ARef(f"P{len(out)}")
            chain = chain_items[-1]
            for item in reversed(chain_items[:-1]):
                chain = Compose(item, chain)
            out.append(TraceStep(span, Compose(label, chain), refined,
                                 alternatives))
        return out

    def _eval_value(self, ctx: dict, m, env: dict):
        m = _strip(m)
        match m:
            case BoolLit(v):
                return v
            case UnitVal():
                return None
            case Emb(Var(name)) | Var(name):
                if name in env:
                    return env[name]
                t = ctx.get(name)
                if isinstance(t, QbitT):
                    return name
                if isinstance(t, PureT):
                    return GhostRef(name)
                return UNKNOWNV
            case Pair(a, b):
                return (self._eval_value(ctx, a, env),
                        self._eval_value(ctx, b, env))
            case Ket() | KetVec():
                return m
            case _:
                return UNKNOWNV

    def _qubit_name_for(self, binder: str, branches: list) -> str:
        taken = set()
        for b in branches:
            taken |= b.heap.qubits()
        if binder not in taken and not binder.startswith("%s"):
            return binder
        return self.supply.fresh(binder.lstrip("%"))

    def _cap_branches(self, branches: list, ctx: dict) -> list:
        if len(branches) <= BRANCH_CAP:
            return branches
        g1, g2 = self.supply.fresh("b"), self.supply.fresh("b")
        self._emit(
            POSTCONDITION, IdAt(None, GhostRef(g1), GhostRef(g2)),
            [Model(SymbolicHeap(), {})],
            var_ctx=self._obligation_ctx(ctx) + ((g1, PureT()),
                                                 (g2, PureT())),
            note="symbolic branch bound exceeded; state collapsed to unknown")
        merged = branches[0].copy()
        cells = tuple(Cell(c.qubits, UNKNOWN_STATE)
                      for c in merged.heap.cells)
        merged.heap = SymbolicHeap(cells, merged.heap.frame_var)
        merged.env = {k: (v if isinstance(v, str) else UNKNOWNV)
                      for k, v in merged.env.items()}
        return [merged]

    def _steps(self, ctx: dict, branches: list, comp, expected: Optional[Ty],
               parent_span):
        match comp:
            case Ret(value, span):
                self._span = span or parent_span
                if expected is not None:
                    vc = self.check(ctx, value, expected)
                    rty = expected
                else:
                    rty, vc = self._synth_intro(ctx, value)
                for b in branches:
                    b.result = self._eval_value(ctx, vc, b.env)
                return branches, rty

            case LetEq(x, ann, value, rest, span):
                self._span = span or parent_span
                self.check_type(ctx, ann)
                vc = self.check(ctx, value, ann)
                inner = {**ctx, x: ann}
                for b in branches:
                    b.env[x] = self._eval_value(ctx, vc, b.env)
                return self._steps(inner, branches, rest, expected,
                                   span or parent_span)

            case BindCmd(x, cmd, rest, span):
                span = span or parent_span
                self._span = span
                branches, bty = self._run_command(ctx, branches, x, cmd, span)
                inner = {**ctx, x: bty}
                self._binders.append((x, bty))
                branches = self._cap_branches(branches, inner)
                return self._steps(inner, branches, rest, expected, span)

            case BindRun(pat, source, rest, span):
                span = span or parent_span
                self._span = span
                branches, rty = self._run_call(ctx, branches, pat, source,
                                               span)
                inner = dict(ctx)
                if len(pat) == 1:
                    inner[pat[0]] = rty
                    self._binders.append((pat[0], rty))
                else:
                    if not isinstance(rty, TensorT):
                        raise CheckError(
                            f"pair pattern on non-pair result "
                            f"{pretty(rty)}", span)
                    inner[pat[0]] = rty.left
                    inner[pat[1]] = rty.right
                    self._binders.append((pat[0], rty.left))
                    self._binders.append((pat[1], rty.right))
                branches = self._cap_branches(branches, inner)
                return self._steps(inner, branches, rest, expected, span)
        raise CheckError(f"bad computation node {comp!r}", parent_span)

    def _synth_intro(self, ctx: dict, m):
        m2 = _strip(m)
        match m2:
            case BoolLit():
                return BoolT(), m2
            case UnitVal():
                return UnitT(), m2
            case Ket() | KetVec():
                return PureT(), m2
            case Emb(k):
                return self.synth(ctx, k)
            case Pair(a, b):
                lt, lc = self._synth_intro(ctx, a)
                rt, rc = self._synth_intro(ctx, b)
                return TensorT(lt, rt), Pair(lc, rc)
            case _:
                raise CheckError(
                    f"cannot infer a type for {pretty(m)!r}; add an "
                    f"ascription", self._span)

    # --- commands

    def _run_command(self, ctx: dict, branches: list, binder: str, cmd,
                     span):
        self._op_counter += 1
        op = self._op_counter
        match cmd:
            case MkQbit(init):
                ic = self.check(ctx, init, BoolT())
                qname = self._qubit_name_for(binder, branches)
                out = []
                for b in branches:
                    v = self._eval_value(ctx, ic, b.env)
                    values = [v] if v is not UNKNOWNV else [False, True]
                    for value in values:
                        nb = b.copy()
                        nb.heap, delta = sp_init(b.heap, value, qname)
                        nb.env[binder] = qname
                        out.append(nb)
                        self._record_delta(span, op, delta)
                return out, QbitT()

            case MeasQbit(target):
                tc = self.check(ctx, target, QbitT())
                self._emit(
                    ALLOCATION, Lookup(tc, WildcardState()),
                    [Model(b.heap, dict(b.env)) for b in branches],
                    var_ctx=self._obligation_ctx(ctx),
                    hyps=self._hypotheses(branches),
                    note="measured qubit must be allocated", span=span)
                out = []
                for b in branches:
                    q = self._eval_value(ctx, tc, b.env)
                    if not isinstance(q, str) or b.heap.find(q) is None:
                        nb = b.copy()
                        nb.env[binder] = UNKNOWNV
                        out.append(nb)
                        continue
                    for mb in sp_measure(b.heap, q, refine=not self.literal):
                        nb = b.copy()
                        nb.heap = mb.heap
                        nb.env[binder] = (mb.outcome if mb.outcome is not None
                                          else UNKNOWNV)
                        out.append(nb)
                        self._record_delta(span, op, mb.delta,
                                           refined=not self.literal)
                return out, BoolT()

            case ApplyU(uterm):
                uc = self.check(ctx, uterm, UT())

                def resolve(name):
                    if isinstance(ctx.get(name), QbitT):
                        return name
                    raise KeyError(name)

                try:
                    u = eval_unitary(uc, resolve)
                except UnitaryError as e:
                    if e.matrix is not None:
                        self._emit(
                            UNITARITY, Bot(), [Model(SymbolicHeap(), {})],
                            var_ctx=self._obligation_ctx(ctx),
                            note=e.message, span=span)
                        for b in branches:
                            b.env[binder] = None
                        return branches, UnitT()
                    raise CheckError(e.message, span)
                rots = _rot_matrices(u)
                if rots:
                    self._emit(
                        UNITARITY, Top(), [Model(SymbolicHeap(), {})],
                        var_ctx=self._obligation_ctx(ctx),
                        note=f"{len(rots)} rotation matrix(es) validated "
                             f"unitary", span=span)
                missing_models = []
                residual_models = []
                residual_cell = None
                out = []
                for b in branches:
                    fp = simlib.footprint(u)
                    missing = [q for q in fp if b.heap.find(q) is None]
                    if missing:
                        missing_models.append((b, missing))
                        nb = b.copy()
                        nb.env[binder] = None
                        out.append(nb)
                        continue
                    res = sp_apply_unitary(b.heap, u)
                    nb = b.copy()
                    nb.heap = res.heap
                    nb.env[binder] = None
                    out.append(nb)
                    self._record_delta(span, op, res.delta)
                    if res.residual:
                        residual_models.append(Model(nb.heap, dict(nb.env)))
                        residual_cell = res.delta.produced[0]
                if residual_models:
                    g = self.supply.fresh("u")
                    self._emit(
                        UNITARITY,
                        IdAt(None, heaplib.loc_term(residual_cell.qubits),
                             GhostRef(g)),
                        residual_models,
                        var_ctx=self._obligation_ctx(ctx) + ((g, PureT()),),
                        note="unitary applied to an opaque or assumed "
                             "state; result not computable statically",
                        span=span)
                if missing_models:
                    concl = None
                    for q in simlib.footprint(u):
                        atom = Lookup(Emb(Var(q)), WildcardState())
                        concl = atom if concl is None else And(concl, atom)
                    self._emit(
                        ALLOCATION, concl or Top(),
                        [Model(b.heap, dict(b.env)) for b, _ in
                         missing_models],
                        var_ctx=self._obligation_ctx(ctx),
                        note="unitary footprint must be allocated",
                        span=span)
                return out, UnitT()

            case IfCmd(scrut, then_t, else_t):
                sc = self.check(ctx, scrut, BoolT())
                taken = {True: [], False: []}
                for b in branches:
                    v = self._eval_value(ctx, sc, b.env)
                    if v is True or v is False:
                        taken[v].append(b)
                    else:
                        for value in (True, False):
                            nb = b.copy()
                            s = _strip(sc)
                            if isinstance(s, Emb) and isinstance(s.elim, Var):
                                nb.env[s.elim.name] = value
                            taken[value].append(nb)
                tb, tty = self._run_branch(ctx, taken[True], then_t, span)
                eb, ety = self._run_branch(ctx, taken[False], else_t, span)
                if not types_equal(tty, ety):
                    raise CheckError(
                        f"conditional branches disagree: {pretty(tty)} vs "
                        f"{pretty(ety)}", span)
                out = tb + eb
                for b in out:
                    b.env[binder] = b.result
                    b.result = None
                return out, tty
        raise CheckError(f"bad command {cmd!r}", span)

    def _run_branch(self, ctx: dict, branches: list, term, span):
        """Type and run one conditional branch over the given branch set."""
        t = _strip(term)
        if isinstance(t, Do):
            out, rty = self._steps(ctx, branches, t.body, None, span)
            return out, rty
        rty, tc = self._synth_intro(ctx, t)
        for b in branches:
            b.result = self._eval_value(ctx, tc, b.env)
        return branches, rty

    # --- calls

    def _run_call(self, ctx: dict, branches: list, pat, source, span):
        sty, _ = self.synth(ctx, source)
        if not isinstance(sty, HoareT):
            raise CheckError(
                f"bind source has type {pretty(sty)}; a suspended "
                f"computation was expected", span)
        # instantiate callee ghosts with fresh logic variables
        mapping = {}
        ghost_ctx = {}
        for g, gty in sty.var_ctx:
            fresh = self.supply.fresh(g.lstrip("%"))
            mapping[g] = Var(fresh)
            ghost_ctx[fresh] = gty
        pre = subst(sty.pre, mapping)
        post = subst(sty.post, mapping)
        result_ty = subst(sty.result, mapping)

        # rename the callee's result binder to the caller's pattern
        binder = sty.binder
        if len(binder) == len(pat):
            post = subst(post, {b: Var(p) for b, p in zip(binder, pat)})
        elif len(binder) == 1 and len(pat) == 2:
            post = subst(post, {binder[0]: Pair(Emb(Var(pat[0])),
                                                Emb(Var(pat[1])))})
        else:
            raise CheckError("binder pattern arity mismatch", span)

        ctx2 = dict(ctx)
        ctx2.update(ghost_ctx)
        for g, gty in ghost_ctx.items():
            self._binders.append((g, gty))
        kind = self._kind_of(ctx2)
        self._emit(
            CALL_PRE, _small_footprint(pre),
            [Model(b.heap, dict(b.env)) for b in branches],
            var_ctx=self._obligation_ctx(ctx2),
            hyps=self._hypotheses(branches),
            note="precondition of the computation being run", span=span)

        # frame: consume the callee footprint, splice in its postcondition
        fq = footprint_qubits(pre, kind)
        pat_kinds = dict(ctx2)
        if len(pat) == 1:
            pat_kinds[pat[0]] = result_ty
        elif isinstance(result_ty, TensorT):
            pat_kinds[pat[0]] = result_ty.left
            pat_kinds[pat[1]] = result_ty.right
        post_branches = heap_from_assertion(post, self._kind_of(pat_kinds),
                                            self.supply)
        self._op_counter += 1
        op = self._op_counter
        out = []
        for b in branches:
            framed, consumed = _frame_out(b.heap, fq)
            for pb in post_branches:
                nb = b.copy()
                produced = tuple(pb.cells)
                try:
                    cells = framed.cells + produced
                    heaplib.check_disjoint(cells)
                except heaplib.HeapError:
                    renamed = []
                    for c in produced:
                        qs = tuple(q if framed.find(q) is None
                                   else self.supply.fresh(q.lstrip("%"))
                                   for q in c.qubits)
                        renamed.append(Cell(qs, c.state))
                    produced = tuple(renamed)
                    cells = framed.cells + produced
                nb.heap = SymbolicHeap(cells, b.heap.frame_var)
                nb.env.update(pb.env)
                nb.assumed.extend(pb.assumed)
                value = self._call_result_value(pat, pat_kinds, pb)
                self._bind_pattern(nb.env, pat, value)
                out.append(nb)
                self._record_delta(
                    span, op, heaplib.HeapDelta(consumed, produced))
        return out, result_ty

    def _call_result_value(self, pat, kinds: dict, pb: AbsBranch):
        def component(name):
            t = kinds.get(name)
            if isinstance(t, QbitT):
                return name
            if name in pb.env:
                return pb.env[name]
            if isinstance(t, UnitT):
                return None
            return UNKNOWNV

        if len(pat) == 1:
            return component(pat[0])
        return tuple(component(p) for p in pat)


def _as_elim(m):
    if isinstance(m, Emb):
        return m.elim
    return m


def _rot_matrices(u) -> list:
    out = []

    def go(u):
        match u:
            case simlib.Rot(_, m):
                out.append(m)
            case simlib.MAppend(a, b):
                go(a), go(b)
            case simlib.Cond(_, fb, tb):
                go(fb), go(tb)
            case _:
                pass
    go(u)
    return out


def _frame_out(h: SymbolicHeap, qubits) -> tuple:
    """Remove the named qubits; returns (framed heap, consumed cells)."""
    consumed = []
    cells = list(h.cells)
    for q in qubits:
        cell = None
        for c in cells:
            if q in c.qubits:
                cell = c
                break
        if cell is None:
            continue
        if cell not in consumed:
            consumed.append(cell)
        cells.remove(cell)
        rest = tuple(x for x in cell.qubits if x != q and x not in qubits)
        if rest:
            cells.append(Cell(rest, UNKNOWN_STATE))
    return SymbolicHeap(tuple(cells), h.frame_var), tuple(consumed)


def _small_footprint(a: Assn) -> Assn:
    """Small-footprint reading of a callee precondition at a call site:
    ``emp`` frames trivially and exact points-to weakens to containment."""
    match a:
        case Emp():
            return Top()
        case PointsTo(loc, st):
            return Lookup(loc, st)
        case And(l, r):
            return And(_small_footprint(l), _small_footprint(r))
        case Or(l, r):
            return Or(_small_footprint(l), _small_footprint(r))
        case _:
            return a


# ---------------------------------------------------------------------------
# Module-level convenience operations


def synth(var_ctx: dict, k, program: Optional[Program] = None):
    """Synthesize (type, canonical form) for an elim term."""
    checker = Checker(program or Program(()))
    return checker.synth(dict(var_ctx), k)


def check(var_ctx: dict, m, ty: Ty, program: Optional[Program] = None):
    """Check an intro term against a type; returns the canonical form."""
    checker = Checker(program or Program(()))
    return checker.check(dict(var_ctx), m, ty)


def synth_computation(var_ctx: dict, pre: Assn, comp,
                      expected: Optional[Ty] = None,
                      program: Optional[Program] = None,
                      literal_measurement: bool = False,
                      result_name: str = "r") -> CompResult:
    """Strongest postcondition of a computation under a precondition."""
    checker = Checker(program or Program(()), literal_measurement)
    checker._reset_decl_state("<computation>")
    ctx = dict(var_ctx)
    branches = checker._initial_branches(ctx, pre)
    out, rty = checker._steps(ctx, branches, comp, expected, None)
    sp = checker._strongest_post(out, (result_name,))
    return CompResult(result_name, rty, sp, checker._obs,
                      checker._assemble_trace())


def check_computation(var_ctx: dict, pre: Assn, comp, result_name: str,
                      result_type: Ty, post: Assn,
                      program: Optional[Program] = None,
                      literal_measurement: bool = False) -> list:
    """Check a computation against a declared pre/post pair; returns all
    obligations including the final postcondition condition."""
    checker = Checker(program or Program(()), literal_measurement)
    checker._reset_decl_state("<computation>")
    hoare = HoareT((), (), pre, (result_name,), result_type, post)
    ctx = dict(var_ctx)
    checker.check_do(ctx, comp, hoare)
    return checker._obs


def check_program(program: Program,
                  literal_measurement: bool = False) -> CheckedProgram:
    """Type-check and generate verification conditions for a program."""
    return Checker(program, literal_measurement).check_program()
