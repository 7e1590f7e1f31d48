"""Evaluator tests: beta/eta, endpoints, composition per type former,
fillers, delayed fixed points, readback."""

import random

import pytest

from gctt.conversion import conv
from gctt.eval import (
    FnClosure,
    NComp,
    VGlueIntro,
    VGlueT,
    VLam,
    VLaterT,
    VNat,
    VNeutral,
    VNext,
    VPair,
    VPathT,
    VPi,
    VPLam,
    VSuc,
    VSystem,
    VZero,
    ValueClosure,
    act,
    apply_v,
    comp_v,
    eval_term,
    fill_at,
    fresh_iname,
    make_system,
    neutral_var,
    papp_v,
    readback,
    normalize,
)
from gctt.interval import (
    FACE_BOT,
    IVar,
    ONE,
    ZERO,
    face_join,
    face_lit,
)
from gctt.parser import parse_term
from gctt.syntax import term_str


def ev(src, env=None):
    return eval_term(dict(env or {}), parse_term(src))


def norm(src, env=None):
    env = dict(env or {})
    return term_str(readback(frozenset(env), eval_term(env, parse_term(src))))


def norm_v(v, env=None, ty=None):
    return term_str(readback(frozenset(env or {}), v, ty))


def nat_fn_type():
    return VPi(VNat(), FnClosure(lambda _x: VNat()))


# ---------------------------------------------------------------------------
# beta / structural evaluation


def test_beta():
    assert norm(r"(\x -> suc x) 1") == "2"


def test_path_beta():
    p = ev(r"<i> f ((<j> x) @ i)", {"f": neutral_var("f", nat_fn_type()),
                                    "x": neutral_var("x", VNat())})
    got = papp_v(p, IVar("k"))
    assert norm_v(got, {"f", "x", "k"}) == "f x"


def test_natrec():
    assert norm(r"natrec (\n -> N) 0 (\n r -> suc (suc r)) 3") == "6"


def test_systems_collapse_when_a_face_is_total():
    v = ev("<i> [ (i=0) -> 0, (i=1) -> 1 ]")
    assert isinstance(papp_v(v, ZERO), VZero)
    assert isinstance(papp_v(v, ONE), VSuc)
    mid = papp_v(v, IVar("j"))
    assert isinstance(mid, VSystem)


# ---------------------------------------------------------------------------
# path application endpoints


def test_papp_endpoints_from_neutral_type():
    a, b = neutral_var("a", VNat()), neutral_var("b", VNat())
    q = neutral_var("q", VPathT(VNat(), a, b))
    assert papp_v(q, ZERO) is a
    assert papp_v(q, ONE) is b
    stuck = papp_v(q, IVar("i"))
    assert isinstance(stuck, VNeutral)


def test_papp_canonicalizes_argument():
    a = neutral_var("a", VNat())
    q = neutral_var("q", VPathT(VNat(), a, a))
    got = papp_v(q, parse_interval_meet())
    assert got is a


def parse_interval_meet():
    from gctt.parser import parse_interval

    return parse_interval("i /\\ 0")


# ---------------------------------------------------------------------------
# composition


def test_comp_total_face_collapses_to_tube_end():
    # a constant tube wins regardless of the line
    from gctt.interval import FACE_TOP

    A = neutral_var("A", None)
    a = neutral_var("a", None)
    k = fresh_iname()
    got = comp_v(k, A, FACE_TOP, make_system([(FACE_TOP, a)]), a)
    assert got is a


def test_comp_nat_numerals():
    assert norm("comp i N [] 0") == "0"
    assert norm("comp i N [] (suc 0)") == "1"


def test_comp_nat_neutral_sticks():
    n = neutral_var("n", VNat())
    k = fresh_iname()
    got = comp_v(k, VNat(), FACE_BOT, make_system([]), n)
    assert isinstance(got, VNeutral) and isinstance(got.neutral, NComp)


def test_comp_at_later_is_stuck():
    later = VLaterT((), ValueClosure(VNat()))
    k = fresh_iname()
    got = comp_v(k, later, FACE_BOT, make_system([]), ev("next 0"))
    assert isinstance(got, VNeutral) and isinstance(got.neutral, NComp)


def test_comp_pi_degenerate_is_pointwise_identity():
    v = ev(r"(comp i (N -> N) [] (\x -> suc x)) 2")
    assert norm_v(v) == "3"


def test_comp_pi_total_face_equals_tube_end():
    env = {"f": neutral_var("f", nat_fn_type())}
    got = ev("<i> (comp j (N -> N) [ (i=0) -> f, (i=1) -> f ] f) 1", env)
    assert norm_v(papp_v(got, ZERO), {"f"}) == "f 1"


def test_comp_sigma_components():
    v = ev("comp i ((x : N) * N) [] (1, 2)")
    assert norm_v(v) == "(1, 2)"


def test_comp_sigma_fst_commutes():
    v = ev("(comp i ((x : N) * N) [] (1, 2)).1")
    w = ev("comp i N [] 1")
    assert conv(frozenset(), v, w)


def test_comp_path_endpoints():
    r = ev("comp i (Path N 0 0) [] (<j> 0)")
    assert isinstance(r, VPLam)
    assert norm_v(papp_v(r, ZERO)) == "0"
    assert norm_v(papp_v(r, ONE)) == "0"


def test_comp_univ_empty_tube_is_glue_over_base():
    got = ev("comp i U [] N")
    assert isinstance(got, VGlueT)
    assert got.partial is None and isinstance(got.base, VNat)


def test_comp_univ_neutral_tube_sticks():
    d = neutral_var("D", None)
    k = fresh_iname()
    got = comp_v(k, VNeutral(d.neutral, None), FACE_BOT, make_system([]), d)
    assert isinstance(got, VNeutral)


def test_comp_univ_roundtrip_of_numeral():
    src = ("transp k (comp j U [ (k=1) -> N ] N)"
           " (transp i (comp j U [ (i=0) -> N ] N) 2)")
    assert norm(src) == "2"


def test_unglue_of_glue_intro():
    assert norm("unglue (glue [] 0)") == "0"


# ---------------------------------------------------------------------------
# fill


def test_fill_at_zero_is_base():
    base = VSuc(VZero())
    k = fresh_iname()
    assert fill_at(k, VNat(), FACE_BOT, make_system([]), base, ZERO) is base


def test_fill_at_one_is_comp():
    base = VSuc(VZero())
    k = fresh_iname()
    f1 = fill_at(k, VNat(), FACE_BOT, make_system([]), base, ONE)
    c = comp_v(k, VNat(), FACE_BOT, make_system([]), base)
    assert conv(frozenset(), f1, c)


def test_fill_on_total_face_is_tube():
    from gctt.interval import FACE_TOP

    a = neutral_var("a", VNat())
    k = fresh_iname()
    got = fill_at(k, VNat(), FACE_TOP, a, a, IVar("j"))
    assert got is a


# ---------------------------------------------------------------------------
# delayed fixed points


def test_dfix_one_unfolds_once():
    f = neutral_var(
        "f", VPi(VLaterT((), ValueClosure(VNat())), FnClosure(lambda _: VNat()))
    )
    env = {"f": f}
    assert norm("dfix 1 x. f x", env) == "next (f (dfix 0 x. f x))"
    assert norm("dfix 0 x. f x", env) == "dfix 0 x. f x"


def test_fix_at_one_is_single_unfolding():
    f = neutral_var(
        "f", VPi(VLaterT((), ValueClosure(VNat())), FnClosure(lambda _: VNat()))
    )
    env = {"f": f}
    assert norm("fix 1 x. f x", env) == "f (next (f (dfix 0 x. f x)))"


def test_next_eta_collapse():
    t = neutral_var("t", VLaterT((), ValueClosure(VNat())))
    assert norm("next [x <- t] x", {"t": t}) == "t"


def test_readback_of_next_weakens():
    t = neutral_var("t", VLaterT((), ValueClosure(VNat())))
    assert norm("next [x <- t] 0", {"t": t}) == "next 0"


# ---------------------------------------------------------------------------
# readback


def test_readback_eta_long_at_function_type():
    f = neutral_var("f", nat_fn_type())
    assert norm_v(f, {"f"}, nat_fn_type()) == r"\x -> f x"


def test_readback_eta_at_path_type():
    a = neutral_var("a", VNat())
    p = neutral_var("p", VPathT(VNat(), a, a))
    assert norm_v(p, {"p", "a"}, p.type) == "<i> p @ i"


def test_readback_fresh_names_avoid_used():
    v = ev(r"\x -> x")
    assert norm_v(v, {"x"}) == r"\x1 -> x1"


def test_readback_idempotent_through_eval():
    srcs = [
        r"\y -> (\x -> suc x) y",
        "comp i N [] 2",
        "<i> comp j N [ (i=0) -> 0, (i=1) -> 0 ] 0",
        "next [x <- t] (suc 0)",
    ]
    t_ty = VLaterT((), ValueClosure(VNat()))
    env = {"t": neutral_var("t", t_ty)}
    for src in srcs:
        once = normalize(dict(env), parse_term(src), used=frozenset(env))
        twice = normalize(dict(env), once, used=frozenset(env))
        assert once == twice, src


# ---------------------------------------------------------------------------
# boundary law on generated compositions (the acceptance suite runs more)


def boundary_instances(count, seed=7):
    """Random well-typed composition terms over N, Path N, and Sigma/Pi over
    N, in a context with interval names i, l and a path variable."""
    rng = random.Random(seed)
    types = [
        "N",
        "Path N 0 0",
        "(x : N) * N",
        "N -> N",
    ]
    elements = {
        "N": ["0", "2", "p @ i", "p @ l"],
        "Path N 0 0": ["<m> 0", "p", "<m> p @ -m"],
        "(x : N) * N": ["(1, 2)", "(p @ i, 0)"],
        "N -> N": [r"\x -> x", r"\x -> suc x", r"\x -> p @ i"],
    }
    faces = ["(i=0)", "(i=1)", "(l=0)", "(i=0) \\/ (i=1)",
             "(i=1) /\\ (l=0)", "(l=1)"]
    out = []
    for _ in range(count):
        ty = rng.choice(types)
        elem = rng.choice(elements[ty])
        n_branches = rng.randint(1, 2)
        branch_faces = rng.sample(faces, n_branches)
        tube = ", ".join(f"{phi} -> {elem}" for phi in branch_faces)
        out.append(f"comp k ({ty}) [ {tube} ] ({elem})")
    return out


def test_boundary_law_sampled():
    from gctt.typechecker import Checker, Ctx
    from gctt.interval import clause_assignment, face_clauses
    from gctt.eval import act

    ck = Checker()
    ctx = Ctx()
    ctx, _ = ctx.bind_interval("i")
    ctx, _ = ctx.bind_interval("l")
    p_ty = ck.check_type(ctx, parse_term("Path N 0 0"))
    ctx, _ = ctx.bind_term("p", p_ty)
    for src in boundary_instances(40):
        comp = parse_term(src)
        ck.infer(ctx, comp)
        phi = comp.face
        result = eval_term(ctx.env, comp)
        env_i = dict(ctx.env)
        env_i[comp.binder] = IVar("?bl")
        tube1 = act(eval_term(env_i, comp.tube), {"?bl": ONE})
        for clause in face_clauses(phi):
            asg = clause_assignment(clause)
            assert conv(ctx.used, act(result, asg), act(tube1, asg)), src
