"""Judgemental equality on values.

Conversion is type-directed where a type is available (eta for functions,
pairs, paths, and glue) and structural otherwise.  Delayed substitutions are
compared through `canon_ds`, the fixpoint of weakening, next-substitution and
a deterministic ordering of independent bindings.  Equality under a face
restriction is checked clause by clause.
"""

from __future__ import annotations

from typing import Optional

from . import syntax as S
from .interval import (
    Face,
    IVar,
    clause_assignment,
    clause_face,
    dm_equal,
    face_clauses,
    face_equal,
)
from .eval import (
    NApp,
    NComp,
    NDFix,
    NFst,
    NNatRec,
    NPApp,
    NSnd,
    NUnglue,
    NVar,
    VGlueIntro,
    VGlueT,
    VLam,
    VLaterT,
    VNat,
    VNext,
    VNeutral,
    VPair,
    VPathT,
    VPi,
    VPLam,
    VSigma,
    VSuc,
    VSystem,
    VUniv,
    VZero,
    Value,
    act,
    apply_v,
    fresh_iname,
    fst_v,
    papp_v,
    probe_var,
    readback_value,
    snd_v,
    unglue_v,
)
from .syntax import Term


class FuelExhausted(Exception):
    """Raised when conversion exceeds its step bound."""


class _Fuel:
    def __init__(self):
        self.remaining: Optional[int] = None

    def set(self, limit: Optional[int]):
        self.remaining = limit

    def tick(self):
        if self.remaining is not None:
            self.remaining -= 1
            if self.remaining < 0:
                raise FuelExhausted("conversion step bound exceeded")


FUEL = _Fuel()


# ---------------------------------------------------------------------------
# Canonical delayed substitutions (term level)


def canon_ds(entries: list, body: Term) -> tuple[list, Term]:
    """Fixpoint of weakening (drop unused bindings), next-substitution
    (inline bindings of the form `next ds' t` whose ds' matches a
    subsequence of the preceding prefix), and sorting of bindings by their
    printed form."""
    entries = list(entries)
    while True:
        changed = False
        fv = S.free_names(body)[0]
        kept = [(x, u) for x, u in entries if x in fv]
        if len(kept) != len(entries):
            entries = kept
            changed = True
        for i, (x, u) in enumerate(entries):
            ren = _match_prefix(u, entries[:i])
            if ren is not None:
                inner = S.subst_terms(u.body, ren) if ren else u.body
                body = S.subst_term(body, x, inner)
                del entries[i]
                changed = True
                break
        key_sorted = sorted(entries, key=_entry_key)
        if key_sorted != entries:
            entries = key_sorted
            changed = True
        if not changed:
            return entries, body


def _entry_key(entry):
    return S.term_str(S.alpha_canonical(entry[1]))


def _match_prefix(u: Term, prefix: list):
    """If u is `next ds' t` with ds' matching a subsequence of the prefix
    (terms alpha-equal, in order), return the renaming of ds' binders to
    prefix binders; otherwise None."""
    if not isinstance(u, S.Next):
        return None
    ren = {}
    pos = 0
    for y, w in u.subst:
        while pos < len(prefix) and not S.alpha_equal(prefix[pos][1], w):
            pos += 1
        if pos == len(prefix):
            return None
        ren[y] = S.Var(name=prefix[pos][0])
        pos += 1
    return ren


# ---------------------------------------------------------------------------
# Conversion


def conv(used: frozenset, a: Value, b: Value,
         ty: Optional[Value] = None) -> bool:
    FUEL.tick()
    if a is b:
        return True
    match ty:
        case VPi(domain=d, codomain=c):
            x = probe_var(d)
            return conv(used, apply_v(a, x), apply_v(b, x), c.apply(x))
        case VSigma(first=d, second=c):
            fa = fst_v(a)
            return (conv(used, fa, fst_v(b), d)
                    and conv(used, snd_v(a), snd_v(b), c.apply(fa)))
        case VPathT(space=sp):
            i = IVar(fresh_iname())
            return conv(used, papp_v(a, i), papp_v(b, i), sp)
        case VGlueT(face=phi, partial=p, base=base):
            if not conv(used, unglue_v(a), unglue_v(b), base):
                return False
            for cl in face_clauses(phi):
                asg = clause_assignment(cl)
                if not conv(used, act(a, asg), act(b, asg), act(p, asg)):
                    return False
            return True
    if isinstance(a, VSystem) or isinstance(b, VSystem):
        clauses = set()
        for v in (a, b):
            if isinstance(v, VSystem):
                clauses.update(cl for cl, _ in v.branches)
        for cl in sorted(clauses, key=sorted):
            asg = clause_assignment(cl)
            if not conv(used, act(a, asg), act(b, asg),
                        act(ty, asg) if ty is not None else None):
                return False
        return True
    return _conv_structural(used, a, b)


def _conv_structural(used: frozenset, a: Value, b: Value) -> bool:
    match (a, b):
        case (VLam(), VLam() | VNeutral()) | (VNeutral(), VLam()):
            x = probe_var()
            return conv(used, apply_v(a, x), apply_v(b, x))
        case (VPLam(), VPLam() | VNeutral()) | (VNeutral(), VPLam()):
            i = IVar(fresh_iname())
            return conv(used, papp_v(a, i), papp_v(b, i))
        case (VPair(), VPair() | VNeutral()) | (VNeutral(), VPair()):
            return (conv(used, fst_v(a), fst_v(b))
                    and conv(used, snd_v(a), snd_v(b)))
        case (VPi(domain=d1, codomain=c1), VPi(domain=d2, codomain=c2)) | \
             (VSigma(first=d1, second=c1), VSigma(first=d2, second=c2)):
            if type(a) is not type(b) or not conv(used, d1, d2):
                return False
            x = probe_var(d1)
            return conv(used, c1.apply(x), c2.apply(x))
        case (VPathT(space=s1, lhs=l1, rhs=r1),
              VPathT(space=s2, lhs=l2, rhs=r2)):
            return (conv(used, s1, s2) and conv(used, l1, l2, s1)
                    and conv(used, r1, r2, s1))
        case (VNat(), VNat()) | (VUniv(), VUniv()) | (VZero(), VZero()):
            return True
        case (VSuc(pred=p1), VSuc(pred=p2)):
            return conv(used, p1, p2)
        case (VLaterT(), VLaterT()) | (VNext(), VNext()):
            return (S.alpha_canonical(readback_value(used, a))
                    == S.alpha_canonical(readback_value(used, b)))
        case (VGlueT(face=f1, partial=p1, equiv=e1, base=b1),
              VGlueT(face=f2, partial=p2, equiv=e2, base=b2)):
            if not face_equal(f1, f2) or not conv(used, b1, b2):
                return False
            for cl in face_clauses(f1):
                asg = clause_assignment(cl)
                if not conv(used, act(p1, asg), act(p2, asg), VUniv()):
                    return False
                if not conv(used, act(e1, asg), act(e2, asg)):
                    return False
            return True
        case (VGlueIntro(face=f1, partial=p1, base=b1),
              VGlueIntro(face=f2, partial=p2, base=b2)):
            if not conv(used, b1, b2):
                return False
            clauses = set(face_clauses(f1)) | set(face_clauses(f2))
            for cl in sorted(clauses, key=sorted):
                asg = clause_assignment(cl)
                if not conv(used, act(a, asg), act(b, asg)):
                    return False
            return True
        case (VGlueIntro(), VNeutral()) | (VNeutral(), VGlueIntro()):
            intro, other = (a, b) if isinstance(a, VGlueIntro) else (b, a)
            if not conv(used, intro.base, unglue_v(other)):
                return False
            for cl in face_clauses(intro.face):
                asg = clause_assignment(cl)
                if not conv(used, act(intro, asg), act(other, asg)):
                    return False
            return True
        case (VNeutral(neutral=n1), VNeutral(neutral=n2)):
            return _conv_neutral(used, n1, n2)
    return False


def _conv_neutral(used: frozenset, a, b) -> bool:
    FUEL.tick()
    match (a, b):
        case (NVar(name=x), NVar(name=y)):
            return x == y
        case (NApp(fn=f1, arg=a1), NApp(fn=f2, arg=a2)):
            arg_ty = f1.type.domain if isinstance(f1.type, VPi) else None
            return conv(used, f1, f2) and conv(used, a1, a2, arg_ty)
        case (NPApp(fn=f1, arg=r1), NPApp(fn=f2, arg=r2)):
            return conv(used, f1, f2) and dm_equal(r1, r2)
        case (NFst(pair=p1), NFst(pair=p2)) | (NSnd(pair=p1), NSnd(pair=p2)):
            return type(a) is type(b) and conv(used, p1, p2)
        case (NNatRec(motive=m1, base=z1, step=s1, scrutinee=n1),
              NNatRec(motive=m2, base=z2, step=s2, scrutinee=n2)):
            return (conv(used, m1, m2) and conv(used, z1, z2)
                    and conv(used, s1, s2) and conv(used, n1, n2))
        case (NUnglue(arg=g1), NUnglue(arg=g2)):
            return conv(used, g1, g2)
        case (NComp(binder=k1, line=l1, face=f1, tube=t1, base=b1),
              NComp(binder=k2, line=l2, face=f2, tube=t2, base=b2)):
            if not face_equal(f1, f2):
                return False
            k = IVar(fresh_iname())
            if not conv(used, act(l1, {k1: k}), act(l2, {k2: k})):
                return False
            for cl in face_clauses(f1):
                asg = clause_assignment(cl)
                if not conv(used, act(act(t1, {k1: k}), asg),
                            act(act(t2, {k2: k}), asg)):
                    return False
            return conv(used, b1, b2)
        case (NDFix(clock=r1, closure=c1), NDFix(clock=r2, closure=c2)):
            if not dm_equal(r1, r2):
                return False
            x = probe_var()
            return conv(used, c1.apply(x), c2.apply(x))
    return False


def conv_under(phi: Face, used: frozenset, a: Value, b: Value,
               ty: Optional[Value] = None) -> bool:
    """Equality under a face restriction: checked clause by clause.  A
    contradictory restriction makes everything equal."""
    for cl in face_clauses(phi):
        asg = clause_assignment(cl)
        if not conv(used, act(a, asg), act(b, asg),
                    act(ty, asg) if ty is not None else None):
            return False
    return True


def conv_system(used: frozenset, lhs: Value, rhs: Value, ty: Value,
                face: Face) -> bool:
    """System equality: under every clause of the join of all mentioned
    faces (meeting the ambient restriction), the selected branches must be
    convertible."""
    from .interval import FACE_BOT, face_join, face_meet

    mentioned = FACE_BOT
    for v in (lhs, rhs):
        if isinstance(v, VSystem):
            for cl, _ in v.branches:
                mentioned = face_join(mentioned, clause_face(cl))
    total = face_meet(face, mentioned) if mentioned.clauses else face
    return conv_under(total, used, lhs, rhs, ty)
