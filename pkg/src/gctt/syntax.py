"""Abstract syntax: terms, delayed substitutions, systems, modules.

Terms are immutable trees with named binders; substitution is
capture-avoiding and descends into interval and face positions.  Spans are
carried for diagnostics but ignored by structural equality.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Optional

from .interval import (
    Face,
    IExpr,
    IVar,
    dm_subst,
    dm_subst_all,
    face_names,
    face_str,
    face_subst,
    face_subst_all,
    iexpr_str,
    inames,
)


@dataclass(frozen=True)
class Span:
    line: int
    col: int
    start: int
    end: int

    def __str__(self):
        return f"{self.line}:{self.col}"


def _span_field():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Term:
    span: Optional[Span] = _span_field()

    def with_span(self, span: Optional[Span]) -> "Term":
        return replace(self, span=span) if span is not None else self


@dataclass(frozen=True)
class Var(Term):
    name: str = ""


@dataclass(frozen=True)
class Lam(Term):
    binder: str = ""
    annotation: Optional[Term] = None
    body: Term = None


@dataclass(frozen=True)
class App(Term):
    fn: Term = None
    arg: Term = None


@dataclass(frozen=True)
class Pi(Term):
    binder: str = ""
    domain: Term = None
    codomain: Term = None


@dataclass(frozen=True)
class Sigma(Term):
    binder: str = ""
    first: Term = None
    second: Term = None


@dataclass(frozen=True)
class Pair(Term):
    fst: Term = None
    snd: Term = None


@dataclass(frozen=True)
class Fst(Term):
    pair: Term = None


@dataclass(frozen=True)
class Snd(Term):
    pair: Term = None


@dataclass(frozen=True)
class Zero(Term):
    pass


@dataclass(frozen=True)
class Suc(Term):
    pred: Term = None


@dataclass(frozen=True)
class NatRec(Term):
    motive: Term = None
    base: Term = None
    step: Term = None
    scrutinee: Term = None


@dataclass(frozen=True)
class Nat(Term):
    pass


@dataclass(frozen=True)
class Univ(Term):
    pass


@dataclass(frozen=True)
class PLam(Term):
    binder: str = ""
    body: Term = None


@dataclass(frozen=True)
class PApp(Term):
    fn: Term = None
    arg: IExpr = None


@dataclass(frozen=True)
class PathT(Term):
    space: Term = None
    lhs: Term = None
    rhs: Term = None


@dataclass(frozen=True)
class SystemTerm(Term):
    branches: tuple = ()  # of (Face, Term)


@dataclass(frozen=True)
class Comp(Term):
    binder: str = ""
    line: Term = None
    face: Face = None
    tube: Term = None  # under the binder, defined on the face
    base: Term = None


@dataclass(frozen=True)
class GlueT(Term):
    face: Face = None
    partial: Optional[Term] = None  # type on the face; None iff face is bottom
    equiv: Optional[Term] = None
    base: Term = None


@dataclass(frozen=True)
class GlueIntro(Term):
    face: Face = None
    partial: Optional[Term] = None  # term on the face; None iff face is bottom
    base: Term = None


@dataclass(frozen=True)
class Unglue(Term):
    arg: Term = None


@dataclass(frozen=True)
class LaterT(Term):
    subst: tuple = ()  # of (str, Term)
    body: Term = None


@dataclass(frozen=True)
class Next(Term):
    subst: tuple = ()
    body: Term = None


@dataclass(frozen=True)
class DFix(Term):
    clock: IExpr = None  # interval element controlling the unfolding
    binder: str = ""
    body: Term = None


@dataclass(frozen=True)
class Declaration:
    name: str
    type: Term
    body: Term
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class ModuleFile:
    name: str
    imports: tuple = ()
    declarations: tuple = ()


# ---------------------------------------------------------------------------
# Free names


_free_cache: dict = {}


def free_names(t: Term) -> tuple[frozenset, frozenset]:
    """Free term variables and free interval names of a term (memoized by
    node identity; terms are immutable)."""
    hit = _free_cache.get(id(t))
    if hit is not None and hit[0] is t:
        return hit[1]
    fvs, fis = set(), set()
    _free(t, frozenset(), frozenset(), fvs, fis)
    result = (frozenset(fvs), frozenset(fis))
    _free_cache[id(t)] = (t, result)
    return result


def _free(t, bound, ibound, fvs, fis):
    def go(u, b=bound, ib=ibound):
        _free(u, b, ib, fvs, fis)

    def go_i(r, ib=ibound):
        fis.update(inames(r) - ib)

    def go_face(phi, ib=ibound):
        fis.update(face_names(phi) - ib)

    match t:
        case Var(name=x):
            if x not in bound:
                fvs.add(x)
        case Lam(binder=x, annotation=ann, body=b):
            if ann is not None:
                go(ann)
            go(b, bound | {x})
        case App(fn=f, arg=a):
            go(f), go(a)
        case Pi(binder=x, domain=d, codomain=c) | Sigma(binder=x, first=d, second=c):
            go(d), go(c, bound | {x})
        case Pair(fst=a, snd=b):
            go(a), go(b)
        case Fst(pair=p) | Snd(pair=p) | Unglue(arg=p) | Suc(pred=p):
            go(p)
        case NatRec(motive=m, base=z, step=s, scrutinee=n):
            go(m), go(z), go(s), go(n)
        case Zero() | Nat() | Univ():
            pass
        case PLam(binder=x, body=b):
            go(b, bound, ibound | {x})
        case PApp(fn=f, arg=r):
            go(f), go_i(r)
        case PathT(space=a, lhs=l, rhs=r):
            go(a), go(l), go(r)
        case SystemTerm(branches=bs):
            for phi, u in bs:
                go_face(phi), go(u)
        case Comp(binder=x, line=a, face=phi, tube=u, base=b):
            go(a, bound, ibound | {x})
            go_face(phi)
            go(u, bound, ibound | {x})
            go(b)
        case GlueT(face=phi, partial=p, equiv=e, base=b):
            go_face(phi)
            if p is not None:
                go(p)
            if e is not None:
                go(e)
            go(b)
        case GlueIntro(face=phi, partial=p, base=b):
            go_face(phi)
            if p is not None:
                go(p)
            go(b)
        case LaterT(subst=ds, body=b) | Next(subst=ds, body=b):
            names = bound
            for x, u in ds:
                go(u, names)
                names = names | {x}
            go(b, names)
        case DFix(clock=r, binder=x, body=b):
            go_i(r)
            go(b, bound | {x})
        case _:
            raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Substitution

_fresh_counter = itertools.count()


def fresh_name(base: str, avoid) -> str:
    base = base.rstrip("0123456789") or "x"
    if base not in avoid:
        return base
    for n in itertools.count(1):
        cand = f"{base}{n}"
        if cand not in avoid:
            return cand
    raise AssertionError


def subst_term(t: Term, x: str, u: Term) -> Term:
    """Capture-avoiding substitution of u for the term variable x."""
    fv_u, _ = free_names(u)
    return _subst(t, {x: u}, fv_u | {x})


def subst_terms(t: Term, sub: dict) -> Term:
    avoid = set(sub)
    for u in sub.values():
        avoid |= free_names(u)[0]
    return _subst(t, sub, frozenset(avoid))


def _rename_binder(x, body, sub, avoid, extra=()):
    """Pick a binder avoiding capture; returns (binder, adjusted body)."""
    sub = {y: v for y, v in sub.items() if y != x}
    if not sub:
        return x, body, sub
    if x in avoid:
        used = avoid | free_names(body)[0] | set(extra)
        x2 = fresh_name(x, used)
        body = _subst(body, {x: Var(name=x2)}, frozenset({x2}))
        return x2, body, sub
    return x, body, sub


def _subst(t, sub, avoid):
    if not sub:
        return t

    def go(u, s=None):
        return _subst(u, sub if s is None else s, avoid)

    match t:
        case Var(name=y):
            return sub.get(y, t)
        case Lam(binder=x, annotation=ann, body=b):
            ann2 = go(ann) if ann is not None else None
            x2, b, sub2 = _rename_binder(x, b, sub, avoid)
            return Lam(t.span, x2, ann2, _subst(b, sub2, avoid))
        case App(fn=f, arg=a):
            return App(t.span, go(f), go(a))
        case Pi(binder=x, domain=d, codomain=c):
            d2 = go(d)
            x2, c, sub2 = _rename_binder(x, c, sub, avoid)
            return Pi(t.span, x2, d2, _subst(c, sub2, avoid))
        case Sigma(binder=x, first=d, second=c):
            d2 = go(d)
            x2, c, sub2 = _rename_binder(x, c, sub, avoid)
            return Sigma(t.span, x2, d2, _subst(c, sub2, avoid))
        case Pair(fst=a, snd=b):
            return Pair(t.span, go(a), go(b))
        case Fst(pair=p):
            return Fst(t.span, go(p))
        case Snd(pair=p):
            return Snd(t.span, go(p))
        case Zero() | Nat() | Univ():
            return t
        case Suc(pred=p):
            return Suc(t.span, go(p))
        case NatRec(motive=m, base=z, step=s, scrutinee=n):
            return NatRec(t.span, go(m), go(z), go(s), go(n))
        case PLam(binder=x, body=b):
            return PLam(t.span, x, go(b))
        case PApp(fn=f, arg=r):
            return PApp(t.span, go(f), r)
        case PathT(space=a, lhs=l, rhs=r):
            return PathT(t.span, go(a), go(l), go(r))
        case SystemTerm(branches=bs):
            return SystemTerm(t.span, tuple((phi, go(u)) for phi, u in bs))
        case Comp(binder=x, line=a, face=phi, tube=u, base=b):
            return Comp(t.span, x, go(a), phi, go(u), go(b))
        case GlueT(face=phi, partial=p, equiv=e, base=b):
            return GlueT(
                t.span, phi,
                go(p) if p is not None else None,
                go(e) if e is not None else None,
                go(b),
            )
        case GlueIntro(face=phi, partial=p, base=b):
            return GlueIntro(t.span, phi, go(p) if p is not None else None, go(b))
        case LaterT(subst=ds, body=b) | Next(subst=ds, body=b):
            # Binding terms live outside the binders; binders scope over the
            # body only.  Rename any binder that could capture.
            ctor = LaterT if isinstance(t, LaterT) else Next
            entries = [(x, go(u)) for x, u in ds]
            body = b
            body_sub = {y: v for y, v in sub.items() if y not in {x for x, _ in ds}}
            if body_sub:
                ren = {}
                used = avoid | free_names(body)[0] | {x for x, _ in entries}
                for idx, (x, u) in enumerate(entries):
                    if x in avoid:
                        x2 = fresh_name(x, used)
                        used = used | {x2}
                        ren[x] = Var(name=x2)
                        entries[idx] = (x2, u)
                if ren:
                    body = _subst(body, ren, frozenset(v.name for v in ren.values()))
                body = _subst(body, body_sub, avoid)
            return ctor(t.span, tuple(entries), body)
        case DFix(clock=r, binder=x, body=b):
            x2, b, sub2 = _rename_binder(x, b, sub, avoid)
            return DFix(t.span, r, x2, _subst(b, sub2, avoid))
        case _:
            raise TypeError(f"not a term: {t!r}")


def subst_interval(t: Term, i: str, r: IExpr) -> Term:
    """Substitute the interval expression r for the name i everywhere."""
    return _isubst(t, i, r)


def _isubst(t, i, r):
    def go(u):
        return _isubst(u, i, r)

    match t:
        case Var():
            return t
        case Lam(binder=x, annotation=ann, body=b):
            return Lam(t.span, x, go(ann) if ann is not None else None, go(b))
        case App(fn=f, arg=a):
            return App(t.span, go(f), go(a))
        case Pi(binder=x, domain=d, codomain=c):
            return Pi(t.span, x, go(d), go(c))
        case Sigma(binder=x, first=d, second=c):
            return Sigma(t.span, x, go(d), go(c))
        case Pair(fst=a, snd=b):
            return Pair(t.span, go(a), go(b))
        case Fst(pair=p):
            return Fst(t.span, go(p))
        case Snd(pair=p):
            return Snd(t.span, go(p))
        case Zero() | Nat() | Univ():
            return t
        case Suc(pred=p):
            return Suc(t.span, go(p))
        case NatRec(motive=m, base=z, step=s, scrutinee=n):
            return NatRec(t.span, go(m), go(z), go(s), go(n))
        case PLam(binder=x, body=b):
            if x == i:
                return t
            if x in inames(r):
                x2 = fresh_name(x, inames(r) | free_names(t)[1] | {i})
                b = _isubst(b, x, IVar(x2))
                return PLam(t.span, x2, _isubst(b, i, r))
            return PLam(t.span, x, go(b))
        case PApp(fn=f, arg=s):
            return PApp(t.span, go(f), dm_subst(s, i, r))
        case PathT(space=a, lhs=l, rhs=rr):
            return PathT(t.span, go(a), go(l), go(rr))
        case SystemTerm(branches=bs):
            return SystemTerm(
                t.span, tuple((face_subst(phi, i, r), go(u)) for phi, u in bs)
            )
        case Comp(binder=x, line=a, face=phi, tube=u, base=b):
            phi2 = face_subst(phi, i, r)
            b2 = go(b)
            if x == i:
                return Comp(t.span, x, a, phi2, u, b2)
            if x in inames(r):
                x2 = fresh_name(x, inames(r) | free_names(t)[1] | {i})
                a = _isubst(a, x, IVar(x2))
                u = _isubst(u, x, IVar(x2))
                return Comp(t.span, x2, _isubst(a, i, r), phi2, _isubst(u, i, r), b2)
            return Comp(t.span, x, go(a), phi2, go(u), b2)
        case GlueT(face=phi, partial=p, equiv=e, base=b):
            return GlueT(
                t.span, face_subst(phi, i, r),
                go(p) if p is not None else None,
                go(e) if e is not None else None,
                go(b),
            )
        case GlueIntro(face=phi, partial=p, base=b):
            return GlueIntro(
                t.span, face_subst(phi, i, r),
                go(p) if p is not None else None, go(b),
            )
        case LaterT(subst=ds, body=b):
            return LaterT(t.span, tuple((x, go(u)) for x, u in ds), go(b))
        case Next(subst=ds, body=b):
            return Next(t.span, tuple((x, go(u)) for x, u in ds), go(b))
        case DFix(clock=s, binder=x, body=b):
            return DFix(t.span, dm_subst(s, i, r), x, go(b))
        case _:
            raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# Alpha-canonical renaming (binders renamed in traversal order)


def alpha_canonical(t: Term) -> Term:
    counter = itertools.count()
    icounter = itertools.count()
    return _alpha(t, {}, {}, counter, icounter)


def _alpha(t, env, ienv, counter, icounter):
    def go(u, e=None, ie=None):
        return _alpha(u, env if e is None else e, ienv if ie is None else ie,
                      counter, icounter)

    def bind(x):
        fresh = f"x{next(counter)}"
        e = dict(env)
        e[x] = fresh
        return fresh, e

    match t:
        case Var(name=x):
            return Var(None, env.get(x, x))
        case Lam(binder=x, annotation=ann, body=b):
            ann2 = go(ann) if ann is not None else None
            x2, e = bind(x)
            return Lam(None, x2, ann2, go(b, e))
        case Pi(binder=x, domain=d, codomain=c):
            d2 = go(d)
            x2, e = bind(x)
            return Pi(None, x2, d2, go(c, e))
        case Sigma(binder=x, first=d, second=c):
            d2 = go(d)
            x2, e = bind(x)
            return Sigma(None, x2, d2, go(c, e))
        case PLam(binder=x, body=b):
            fresh = f"i{next(icounter)}"
            ie = dict(ienv)
            ie[x] = IVar(fresh)
            return PLam(None, fresh, go(b, None, ie))
        case PApp(fn=f, arg=r):


            return PApp(None, go(f), dm_subst_all(r, ienv))
        case Comp(binder=x, line=a, face=phi, tube=u, base=b):


            fresh = f"i{next(icounter)}"
            ie = dict(ienv)
            ie[x] = IVar(fresh)
            phi2 = face_subst_all(phi, ienv)
            return Comp(None, fresh, go(a, None, ie), phi2, go(u, None, ie), go(b))
        case SystemTerm(branches=bs):


            return SystemTerm(
                None,
                tuple((face_subst_all(phi, ienv), go(u)) for phi, u in bs),
            )
        case GlueT(face=phi, partial=p, equiv=e, base=b):


            return GlueT(
                None, face_subst_all(phi, ienv),
                go(p) if p is not None else None,
                go(e) if e is not None else None, go(b),
            )
        case GlueIntro(face=phi, partial=p, base=b):


            return GlueIntro(
                None, face_subst_all(phi, ienv),
                go(p) if p is not None else None, go(b),
            )
        case LaterT(subst=ds, body=b) | Next(subst=ds, body=b):
            ctor = LaterT if isinstance(t, LaterT) else Next
            e = dict(env)
            entries = []
            for x, u in ds:
                u2 = _alpha(u, e, ienv, counter, icounter)
                fresh = f"x{next(counter)}"
                e[x] = fresh
                entries.append((fresh, u2))
            return ctor(None, tuple(entries), _alpha(b, e, ienv, counter, icounter))
        case DFix(clock=r, binder=x, body=b):


            x2, e = bind(x)
            return DFix(None, dm_subst_all(r, ienv), x2, go(b, e))
        case App(fn=f, arg=a):
            return App(None, go(f), go(a))
        case Pair(fst=a, snd=b):
            return Pair(None, go(a), go(b))
        case Fst(pair=p):
            return Fst(None, go(p))
        case Snd(pair=p):
            return Snd(None, go(p))
        case Suc(pred=p):
            return Suc(None, go(p))
        case NatRec(motive=m, base=z, step=s, scrutinee=n):
            return NatRec(None, go(m), go(z), go(s), go(n))
        case PathT(space=a, lhs=l, rhs=r):
            return PathT(None, go(a), go(l), go(r))
        case Unglue(arg=p):
            return Unglue(None, go(p))
        case Zero() | Nat() | Univ():
            return replace(t, span=None)
        case _:
            raise TypeError(f"not a term: {t!r}")


def alpha_equal(t: Term, u: Term) -> bool:
    return alpha_canonical(t) == alpha_canonical(u)


# ---------------------------------------------------------------------------
# Pretty printer.  Precedence levels, loosest to tightest:
#   0 lambdas / arrows / sigma / later / next / dfix
#   1 pairs never bare (always parenthesized), path application @
#   2 application
#   3 atoms and projections

ARROW = 0
PATHAPP = 1
APPLY = 2
ATOM = 3


def _wrap(s: str, have: int, want: int) -> str:
    return f"({s})" if have < want else s


def _numeral(t: Term):
    n = 0
    while isinstance(t, Suc):
        t = t.pred
        n += 1
    return n if isinstance(t, Zero) else None


def _ds_str(ds) -> str:
    if not ds:
        return ""
    inner = ", ".join(f"{x} <- {term_str(u, ARROW)}" for x, u in ds)
    return f"[{inner}] "


def _system_body(branches) -> str:
    return ", ".join(
        f"{face_str(phi)} -> {term_str(u, ARROW)}" for phi, u in branches
    )


def term_str(t: Term, prec: int = ARROW) -> str:
    match t:
        case Var(name=x):
            return x
        case Lam(binder=x, annotation=ann, body=b):
            head = f"\\({x} : {term_str(ann, ARROW)})" if ann is not None else f"\\{x}"
            return _wrap(f"{head} -> {term_str(b, ARROW)}", ARROW, prec)
        case App(fn=f, arg=a):
            s = f"{term_str(f, APPLY)} {term_str(a, ATOM)}"
            return _wrap(s, APPLY, prec)
        case Pi(binder=x, domain=d, codomain=c):
            if x in free_names(c)[0]:
                dom = f"({x} : {term_str(d, ARROW)})"
            else:
                dom = term_str(d, PATHAPP)
            return _wrap(f"{dom} -> {term_str(c, ARROW)}", ARROW, prec)
        case Sigma(binder=x, first=d, second=c):
            if x in free_names(c)[0]:
                dom = f"({x} : {term_str(d, ARROW)})"
            else:
                dom = term_str(d, PATHAPP)
            return _wrap(f"{dom} * {term_str(c, PATHAPP)}", ARROW, prec)
        case Pair(fst=a, snd=b):
            return f"({term_str(a, ARROW)}, {term_str(b, ARROW)})"
        case Fst(pair=p):
            return f"{term_str(p, ATOM)}.1"
        case Snd(pair=p):
            return f"{term_str(p, ATOM)}.2"
        case Zero():
            return "0"
        case Suc():
            n = _numeral(t)
            if n is not None:
                return str(n)
            return _wrap(f"suc {term_str(t.pred, ATOM)}", APPLY, prec)
        case NatRec(motive=m, base=z, step=s, scrutinee=n):
            parts = " ".join(term_str(u, ATOM) for u in (m, z, s, n))
            return _wrap(f"natrec {parts}", APPLY, prec)
        case Nat():
            return "N"
        case Univ():
            return "U"
        case PLam(binder=x, body=b):
            return _wrap(f"<{x}> {term_str(b, ARROW)}", ARROW, prec)
        case PApp(fn=f, arg=r):
            s = f"{term_str(f, PATHAPP)} @ {iexpr_str(r)}"
            return _wrap(s, PATHAPP, prec)
        case PathT(space=a, lhs=l, rhs=r):
            s = f"Path {term_str(a, ATOM)} {term_str(l, ATOM)} {term_str(r, ATOM)}"
            return _wrap(s, APPLY, prec)
        case SystemTerm(branches=bs):
            return f"[ {_system_body(bs)} ]" if bs else "[]"
        case Comp(binder=x, line=a, face=phi, tube=u, base=b):
            tube = _tube_str(phi, u)
            s = f"comp {x} {term_str(a, ATOM)} {tube} {term_str(b, ATOM)}"
            return _wrap(s, APPLY, prec)
        case GlueT(face=phi, partial=p, equiv=e, base=b):
            if p is None:
                return _wrap(f"Glue [] {term_str(b, ATOM)}", APPLY, prec)
            s = (f"Glue [ {face_str(phi)} -> {term_str(p, ARROW)},"
                 f" {term_str(e, ARROW)} ] {term_str(b, ATOM)}")
            return _wrap(s, APPLY, prec)
        case GlueIntro(face=phi, partial=p, base=b):
            if p is None:
                return _wrap(f"glue [] {term_str(b, ATOM)}", APPLY, prec)
            s = f"glue [ {face_str(phi)} -> {term_str(p, ARROW)} ] {term_str(b, ATOM)}"
            return _wrap(s, APPLY, prec)
        case Unglue(arg=p):
            return _wrap(f"unglue {term_str(p, ATOM)}", APPLY, prec)
        case LaterT(subst=ds, body=b):
            return _wrap(f"|> {_ds_str(ds)}{term_str(b, ATOM)}", APPLY, prec)
        case Next(subst=ds, body=b):
            return _wrap(f"next {_ds_str(ds)}{term_str(b, ATOM)}", APPLY, prec)
        case DFix(clock=r, binder=x, body=b):
            s = f"dfix {iexpr_str(r, 2)} {x}. {term_str(b, ARROW)}"
            return _wrap(s, ARROW, prec)
        case _:
            raise TypeError(f"not a term: {t!r}")


def _tube_str(phi: Face, tube: Term) -> str:
    from .interval import face_is_false

    if isinstance(tube, SystemTerm):
        if not tube.branches:
            return "[]"
        return f"[ {_system_body(tube.branches)} ]"
    if face_is_false(phi):
        return "[]"
    return f"[ {face_str(phi)} -> {term_str(tube, ARROW)} ]"


def module_str(m: ModuleFile) -> str:
    lines = [f"module {m.name} where", ""]
    for imp in m.imports:
        lines.append(f"import {imp}")
    if m.imports:
        lines.append("")
    for d in m.declarations:
        lines.append(f"{d.name} : {term_str(d.type)} = {term_str(d.body)}")
        lines.append("")
    return "\n".join(lines)
