"""Conversion tests: the later-type equational theory, canonical delayed
substitutions, systems, and general properties of judgemental equality."""

import itertools

import pytest

from gctt.conversion import canon_ds, conv, conv_under
from gctt.eval import (
    FnClosure,
    VLaterT,
    VNat,
    VPathT,
    VPi,
    ValueClosure,
    act,
    eval_term,
    neutral_var,
    readback,
)
from gctt.interval import FACE_TOP, IVar, ONE, ZERO, face_join, face_lit
from gctt.parser import parse_term
from gctt.syntax import App, Next, Suc, Var, alpha_equal, term_str


def later_of(v):
    return VLaterT((), ValueClosure(v))


def std_env():
    nat_fn = VPi(VNat(), FnClosure(lambda _x: VNat()))
    later_nat = later_of(VNat())
    env = {
        "A": neutral_var("A", None),
        "u": neutral_var("u", VNat()),
        "t": neutral_var("t", later_nat),
        "s": neutral_var("s", later_nat),
        "g": neutral_var("g", VPi(VNat(), FnClosure(
            lambda _x: VPi(VNat(), FnClosure(lambda _y: VNat()))
        ))),
        "f": neutral_var("f", VPi(later_nat, FnClosure(lambda _x: VNat()))),
        "h": neutral_var("h", nat_fn),
    }
    return env, frozenset(env)


def ev(src, env):
    return eval_term(dict(env), parse_term(src))


def cv(a, b, env=None):
    env, used = std_env() if env is None else (env, frozenset(env))
    return conv(used, ev(a, env), ev(b, env))


# ---------------------------------------------------------------------------
# the later-type equational theory (term rules)


def test_term_weakening():
    assert cv("next [x <- t] u", "next u")


def test_term_weakening_negative_when_variable_occurs():
    assert not cv("next [x <- t] (suc x)", "next (suc u)")


def test_term_exchange():
    assert cv("next [x <- t, y <- s] (g x y)",
              "next [y <- s, x <- t] (g x y)")


def test_term_next_substitution():
    assert cv("next [x <- next u] (suc x)", "next (suc u)")


def test_term_next_substitution_under_prefix():
    assert cv("next [a <- t, x <- next [a <- t] (suc a)] (g a x)",
              "next [a <- t] (g a (suc a))")


def test_term_eta():
    assert cv("next [x <- t] x", "t")


# ---------------------------------------------------------------------------
# the later-type equational theory (type rules)


def test_type_weakening():
    assert cv("|> [x <- t] N", "|> N")


def test_type_weakening_negative():
    env, used = std_env()
    lhs = ev("|> [x <- t] (Path N x x)", env)
    rhs = ev("|> (Path N u u)", env)
    assert not conv(used, lhs, rhs)


def test_type_exchange():
    assert cv("|> [x <- t, y <- s] (Path N x y)",
              "|> [y <- s, x <- t] (Path N x y)")


def test_type_next_substitution():
    assert cv("|> [x <- next u] (Path N x x)", "|> (Path N u u)")


# ---------------------------------------------------------------------------
# canon_ds (term level)


def test_canon_ds_weakening():
    entries, body = canon_ds([("x", Var(None, "t"))], Var(None, "A"))
    assert entries == [] and body == Var(None, "A")


def test_canon_ds_orders_independent_bindings():
    e1 = ("x", Var(None, "t"))
    e2 = ("y", Var(None, "s"))
    body = App(None, App(None, Var(None, "g"), Var(None, "x")), Var(None, "y"))
    a, _ = canon_ds([e1, e2], body)
    b, _ = canon_ds([e2, e1], body)
    assert a == b


def test_canon_ds_next_substitution():
    entries, body = canon_ds(
        [("x", Next(None, (), Var(None, "t")))], Suc(None, Var(None, "x"))
    )
    assert entries == [] and body == Suc(None, Var(None, "t"))


def test_canon_ds_idempotent():
    ds = [("x", Var(None, "t")), ("y", Next(None, (), Var(None, "u")))]
    body = App(None, Var(None, "y"), Var(None, "x"))
    e1, b1 = canon_ds(ds, body)
    e2, b2 = canon_ds(e1, b1)
    assert (e1, b1) == (e2, b2)


# ---------------------------------------------------------------------------
# dfix discipline


def test_dfix_not_convertible_to_its_unfolding():
    assert not cv("dfix 0 x. f x", "next (f (dfix 0 x. f x))")


def test_dfix_one_convertible_to_unfolding():
    assert cv("dfix 1 x. f x", "next (f (dfix 0 x. f x))")


# ---------------------------------------------------------------------------
# systems


def test_system_with_total_branch_equals_branch():
    env, used = std_env()
    from gctt.eval import make_system

    v = make_system([(FACE_TOP, env["u"])])
    assert conv(used, v, env["u"])


def test_system_branch_order_irrelevant():
    env, used = std_env()
    lhs = ev("<i> [ (i=0) -> 0, (i=1) -> suc u ]", env)
    rhs = ev("<i> [ (i=1) -> suc u, (i=0) -> 0 ]", env)
    assert conv(used, lhs, rhs)


def test_system_equals_plain_value_under_covering_restriction():
    env, used = std_env()
    i = IVar("i")
    env2 = dict(env)
    env2["i"] = i
    lhs = ev("[ (i=0) -> u, (i=1) -> u ]", env2)
    rhs = env["u"]
    phi = face_join(face_lit("i", 0), face_lit("i", 1))
    assert conv_under(phi, used | {"i"}, lhs, rhs)


# ---------------------------------------------------------------------------
# general properties


SAMPLES = [
    "u",
    "suc u",
    "h (h u)",
    "next [x <- t] (suc x)",
    r"\n -> h n",
    "<i> u",
    "f t",
]


def test_reflexive():
    env, used = std_env()
    for s in SAMPLES:
        assert conv(used, ev(s, env), ev(s, env)), s


def test_symmetric_and_transitive_on_samples():
    env, used = std_env()
    pairs = [
        ("next [x <- t] u", "next u"),
        ("next [x <- next u] (suc x)", "next (suc u)"),
        (r"\n -> h n", "h"),
    ]
    for a, b in pairs:
        va, vb = ev(a, env), ev(b, env)
        assert conv(used, va, vb) and conv(used, vb, va)
    va = ev("next [x <- next u] x", env)
    vb = ev("next u", env)
    vc = ev("next [y <- t] u", env)
    assert conv(used, va, vb) and conv(used, vb, vc) and conv(used, va, vc)


def test_congruence_application():
    env, used = std_env()
    f1, f2 = ev(r"\n -> h n", env), ev("h", env)
    a1, a2 = ev("suc u", env), ev("suc u", env)
    assert conv(used, f1, f2) and conv(used, a1, a2)
    from gctt.eval import apply_v

    assert conv(used, apply_v(f1, a1), apply_v(f2, a2))


def test_eta_function():
    assert cv(r"\n -> h n", "h")


def test_eta_pair():
    env, used = std_env()
    from gctt.eval import VSigma

    pty = VSigma(VNat(), FnClosure(lambda _x: VNat()))
    p = neutral_var("pr", pty)
    env2 = dict(env)
    env2["pr"] = p
    lhs = ev("(pr.1, pr.2)", env2)
    assert conv(used | {"pr"}, lhs, p, pty)


def test_eta_path():
    env, used = std_env()
    pty = VPathT(VNat(), env["u"], env["u"])
    p = neutral_var("q", pty)
    env2 = dict(env)
    env2["q"] = p
    lhs = ev("<i> q @ i", env2)
    assert conv(used | {"q"}, lhs, p)


def test_restriction_monotonicity():
    env, used = std_env()
    env2 = dict(env)
    env2["i"] = IVar("i")
    lhs = ev("[ (i=0) -> 0, (i=1) -> suc u ]", env2)
    rhs = ev("0", env2)
    wide = face_join(face_lit("i", 0), face_lit("i", 1))
    narrow = face_lit("i", 0)
    assert not conv_under(wide, used | {"i"}, lhs, rhs)
    assert conv_under(narrow, used | {"i"}, lhs, rhs)


def test_conversion_under_contradictory_restriction_is_trivial():
    env, used = std_env()
    bot = face_lit("i", 0) & face_lit("i", 1)
    assert conv_under(bot, used, ev("0", env), ev("1", env))


def test_interval_arguments_compared_up_to_de_morgan():
    env, used = std_env()
    env2 = dict(env)
    env2.update({"i": IVar("i"), "j": IVar("j")})
    pty = VPathT(VNat(), env["u"], env["u"])
    env2["q"] = neutral_var("q", pty)
    lhs = ev("q @ -(i /\\ j)", env2)
    rhs = ev("q @ (-i \\/ -j)", env2)
    assert conv(used | {"i", "j", "q"}, lhs, rhs)


def test_conv_system_operation():
    from gctt.conversion import conv_system

    env, used = std_env()
    env2 = dict(env)
    env2["i"] = IVar("i")
    lhs = ev("[ (i=0) -> 0, (i=1) -> suc u ]", env2)
    rhs = ev("[ (i=1) -> suc u, (i=0) -> 0 ]", env2)
    assert conv_system(used | {"i"}, lhs, rhs, VNat(), FACE_TOP)
    other = ev("[ (i=0) -> 1, (i=1) -> suc u ]", env2)
    assert not conv_system(used | {"i"}, lhs, other, VNat(), FACE_TOP)
