r"""Lexer and parser for the surface language.

One module per file: `module name where` followed by declarations
`name : Type = term`.  There is no layout rule; an application chain stops
when the next identifier is followed by `:`, which begins a new declaration.

`fix r x. t` and `transp i A a` are surface sugar, eliminated here:
the former becomes t[dfix r x.t / x], the latter a composition with an
empty tube.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .interval import (
    FACE_BOT,
    Face,
    IExpr,
    IJoin,
    IMeet,
    INeg,
    IVar,
    ONE,
    ZERO,
    face_join,
    face_meet,
    face_of_eq,
)
from .syntax import (
    App,
    Comp,
    DFix,
    Declaration,
    Fst,
    GlueIntro,
    GlueT,
    Lam,
    LaterT,
    ModuleFile,
    Nat,
    NatRec,
    Next,
    PApp,
    PLam,
    Pair,
    PathT,
    Pi,
    Sigma,
    Snd,
    Span,
    Suc,
    SystemTerm,
    Term,
    Unglue,
    Univ,
    Var,
    Zero,
    subst_term,
)

KEYWORDS = frozenset((
    "module", "where", "import", "data", "let",
    "U", "N", "Path", "comp", "Glue", "glue", "unglue",
    "next", "dfix", "fix", "transp", "suc", "natrec",
))

SYMBOLS = (
    "->", "<-", "|>", "/\\", "\\/",
    "\\", "<", ">", "@", ".", ",", ":", "=", "(", ")", "[", "]", "*", "-",
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | keyword | symbol | int | eof
    lexeme: str
    span: Span


class ParseError(Exception):
    def __init__(self, span: Optional[Span], expected, found: str):
        self.span = span
        self.expected = tuple(sorted(set(expected)))
        self.found = found
        where = f"{span.line}:{span.col}" if span else "?"
        exp = ", ".join(self.expected)
        super().__init__(f"{where}: expected {exp}, found {found}")


def _ident_char(c: str) -> bool:
    return c.isalnum() or c in "_'"


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, col = 0, 1, 1
    n = len(source)
    while pos < n:
        c = source[pos]
        if c == "\n":
            pos += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            pos += 1
            col += 1
            continue
        if source.startswith("--", pos):
            while pos < n and source[pos] != "\n":
                pos += 1
            continue
        start_span = Span(line, col, pos, pos)
        if c.isdigit():
            end = pos
            while end < n and source[end].isdigit():
                end += 1
            lex = source[pos:end]
            tokens.append(Token("int", lex, Span(line, col, pos, end)))
            col += end - pos
            pos = end
            continue
        if c.isalpha() or c == "_":
            end = pos
            while end < n and _ident_char(source[end]):
                end += 1
            lex = source[pos:end]
            kind = "keyword" if lex in KEYWORDS else "ident"
            tokens.append(Token(kind, lex, Span(line, col, pos, end)))
            col += end - pos
            pos = end
            continue
        for sym in SYMBOLS:
            if source.startswith(sym, pos):
                tokens.append(Token("symbol", sym, Span(line, col, pos, pos + len(sym))))
                pos += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(start_span, ["a token"], repr(c))
    tokens.append(Token("eof", "", Span(line, col, pos, pos)))
    return tokens


class Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    def peek(self, offset: int = 0) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        self.pos += 1
        return tok

    def at_symbol(self, *syms: str) -> bool:
        t = self.peek()
        return t.kind == "symbol" and t.lexeme in syms

    def at_keyword(self, *kws: str) -> bool:
        t = self.peek()
        return t.kind == "keyword" and t.lexeme in kws

    def expect(self, kind: str, lexeme: Optional[str] = None) -> Token:
        t = self.peek()
        if t.kind != kind or (lexeme is not None and t.lexeme != lexeme):
            raise ParseError(t.span, [lexeme or kind], t.lexeme or t.kind)
        return self.next()

    def fail(self, expected) -> ParseError:
        t = self.peek()
        return ParseError(t.span, expected, t.lexeme or t.kind)

    def ident(self) -> str:
        return self.expect("ident").lexeme

    # -- modules -----------------------------------------------------------

    def module(self) -> ModuleFile:
        self.expect("keyword", "module")
        name = self.ident()
        self.expect("keyword", "where")
        imports = []
        while self.at_keyword("import"):
            self.next()
            imports.append(self.ident())
        decls = []
        while self.peek().kind != "eof":
            decls.append(self.declaration())
        return ModuleFile(name, tuple(imports), tuple(decls))

    def declaration(self) -> Declaration:
        start = self.peek().span
        name = self.ident()
        self.expect("symbol", ":")
        ty = self.term()
        self.expect("symbol", "=")
        body = self.term()
        return Declaration(name, ty, body, span=start)

    # -- terms -------------------------------------------------------------

    def term(self) -> Term:
        span = self.peek().span
        if self.at_symbol("\\"):
            return self.lam(span)
        if self.at_symbol("<"):
            return self.path_lam(span)
        if self.at_keyword("dfix", "fix"):
            return self.fixpoint(span)
        return self.arrow()

    def lam(self, span: Span) -> Term:
        self.next()
        binders = self.binder_group()
        self.expect("symbol", "->")
        body = self.term()
        for x, ann in reversed(binders):
            body = Lam(span, x, ann, body)
        return body

    def binder_group(self) -> list[tuple[str, Optional[Term]]]:
        binders: list[tuple[str, Optional[Term]]] = []
        while True:
            if self.peek().kind == "ident":
                binders.append((self.ident(), None))
            elif self.at_symbol("(") and self.peek(1).kind == "ident":
                save = self.pos
                self.next()
                names = []
                while self.peek().kind == "ident":
                    names.append(self.ident())
                if not self.at_symbol(":"):
                    self.pos = save
                    break
                self.next()
                ann = self.term()
                self.expect("symbol", ")")
                binders.extend((x, ann) for x in names)
            else:
                break
        if not binders:
            raise self.fail(["a binder"])
        return binders

    def path_lam(self, span: Span) -> Term:
        self.next()
        names = [self.ident()]
        while self.peek().kind == "ident":
            names.append(self.ident())
        self.expect("symbol", ">")
        body = self.term()
        for x in reversed(names):
            body = PLam(span, x, body)
        return body

    def fixpoint(self, span: Span) -> Term:
        kw = self.next().lexeme
        clock = self.interval_atom()
        x = self.ident()
        self.expect("symbol", ".")
        body = self.term()
        node = DFix(span, clock, x, body)
        if kw == "fix":
            return subst_term(body, x, node).with_span(span)
        return node

    def _binder_groups_ahead(self) -> bool:
        """Is the upcoming '(' the start of a (x y : A) binder group?"""
        if not self.at_symbol("("):
            return False
        k = 1
        while self.peek(k).kind == "ident":
            k += 1
        return k > 1 and self.peek(k).kind == "symbol" and self.peek(k).lexeme == ":"

    def arrow(self) -> Term:
        span = self.peek().span
        if self._binder_groups_ahead():
            groups: list[tuple[str, Term]] = []
            while self._binder_groups_ahead():
                self.next()
                names = []
                while self.peek().kind == "ident":
                    names.append(self.ident())
                self.expect("symbol", ":")
                ty = self.term()
                self.expect("symbol", ")")
                groups.extend((x, ty) for x in names)
            if self.at_symbol("*"):
                self.next()
                body = self.arrow()
                for x, ty in reversed(groups):
                    body = Sigma(span, x, ty, body)
                return body
            self.expect("symbol", "->")
            body = self.term()
            for x, ty in reversed(groups):
                body = Pi(span, x, ty, body)
            return body
        lhs = self.sigma()
        if self.at_symbol("->"):
            self.next()
            return Pi(span, "_", lhs, self.term())
        return lhs

    def sigma(self) -> Term:
        span = self.peek().span
        lhs = self.path_app()
        if self.at_symbol("*"):
            self.next()
            return Sigma(span, "_", lhs, self.sigma())
        return lhs

    def path_app(self) -> Term:
        t = self.app()
        while self.at_symbol("@"):
            span = self.next().span
            t = PApp(span, t, self.interval())
        return t

    def _stops_chain(self) -> bool:
        # an identifier followed by ':' starts the next declaration
        t = self.peek()
        if t.kind == "ident":
            nxt = self.peek(1)
            return nxt.kind == "symbol" and nxt.lexeme == ":"
        return False

    def _at_atom(self) -> bool:
        t = self.peek()
        if t.kind in ("ident", "int"):
            return not self._stops_chain()
        if t.kind == "keyword":
            return t.lexeme in (
                "U", "N", "Path", "comp", "Glue", "glue", "unglue",
                "next", "suc", "natrec", "transp",
            )
        return t.kind == "symbol" and t.lexeme in ("(", "[", "|>")

    def app(self) -> Term:
        span = self.peek().span
        t = self.atom()
        while self._at_atom():
            t = App(span, t, self.atom())
        return t

    def atom(self) -> Term:
        t = self.peek()
        span = t.span
        if t.kind == "ident":
            self.next()
            return self.postfix(Var(span, t.lexeme))
        if t.kind == "int":
            self.next()
            term: Term = Zero(span)
            for _ in range(int(t.lexeme)):
                term = Suc(span, term)
            return term
        if t.kind == "keyword":
            return self.keyword_atom()
        if self.at_symbol("("):
            self.next()
            inner = self.term()
            if self.at_symbol(","):
                self.next()
                snd = self.term()
                self.expect("symbol", ")")
                return self.postfix(Pair(span, inner, snd))
            self.expect("symbol", ")")
            return self.postfix(inner.with_span(span))
        if self.at_symbol("["):
            return self.postfix(self.system(span))
        if self.at_symbol("|>"):
            self.next()
            ds = self.delayed_subst()
            return self.postfix(LaterT(span, ds, self.atom()))
        raise self.fail(["a term"])

    def postfix(self, t: Term) -> Term:
        while self.at_symbol(".") and self.peek(1).kind == "int":
            span = self.next().span
            idx = self.next().lexeme
            if idx == "1":
                t = Fst(span, t)
            elif idx == "2":
                t = Snd(span, t)
            else:
                raise ParseError(span, [".1", ".2"], f".{idx}")
        return t

    def keyword_atom(self) -> Term:
        t = self.peek()
        span = t.span
        kw = t.lexeme
        if kw == "U":
            self.next()
            return Univ(span)
        if kw == "N":
            self.next()
            return Nat(span)
        if kw == "Path":
            self.next()
            return PathT(span, self.atom(), self.atom(), self.atom())
        if kw == "suc":
            self.next()
            return Suc(span, self.atom())
        if kw == "natrec":
            self.next()
            return NatRec(span, self.atom(), self.atom(), self.atom(), self.atom())
        if kw == "comp":
            self.next()
            binder = self.ident()
            line = self.atom()
            face, tube = self.tube()
            base = self.atom()
            return Comp(span, binder, line, face, tube, base)
        if kw == "transp":
            self.next()
            binder = self.ident()
            line = self.atom()
            base = self.atom()
            return Comp(span, binder, line, FACE_BOT, SystemTerm(span, ()), base)
        if kw == "Glue":
            self.next()
            self.expect("symbol", "[")
            if self.at_symbol("]"):
                self.next()
                return GlueT(span, FACE_BOT, None, None, self.atom())
            face = self.face()
            self.expect("symbol", "->")
            part = self.term()
            self.expect("symbol", ",")
            equiv = self.term()
            self.expect("symbol", "]")
            return GlueT(span, face, part, equiv, self.atom())
        if kw == "glue":
            self.next()
            self.expect("symbol", "[")
            if self.at_symbol("]"):
                self.next()
                return GlueIntro(span, FACE_BOT, None, self.atom())
            face = self.face()
            self.expect("symbol", "->")
            part = self.term()
            self.expect("symbol", "]")
            return GlueIntro(span, face, part, self.atom())
        if kw == "unglue":
            self.next()
            return Unglue(span, self.atom())
        if kw == "next":
            self.next()
            ds = self.delayed_subst()
            return Next(span, ds, self.atom())
        raise self.fail(["a term"])

    def _at_delayed_subst(self) -> bool:
        return (
            self.at_symbol("[")
            and self.peek(1).kind == "ident"
            and self.peek(2).kind == "symbol"
            and self.peek(2).lexeme == "<-"
        )

    def delayed_subst(self) -> tuple:
        if not self._at_delayed_subst():
            return ()
        self.next()
        entries = []
        while True:
            x = self.ident()
            self.expect("symbol", "<-")
            entries.append((x, self.term()))
            if self.at_symbol(","):
                self.next()
                continue
            break
        self.expect("symbol", "]")
        return tuple(entries)

    def system(self, span: Span) -> Term:
        self.expect("symbol", "[")
        if self.at_symbol("]"):
            self.next()
            return SystemTerm(span, ())
        branches = [self.branch()]
        while self.at_symbol(","):
            self.next()
            branches.append(self.branch())
        self.expect("symbol", "]")
        return SystemTerm(span, tuple(branches))

    def branch(self) -> tuple:
        face = self.face()
        self.expect("symbol", "->")
        return (face, self.term())

    def tube(self) -> tuple[Face, Term]:
        span = self.peek().span
        sys = self.system(span)
        face = FACE_BOT
        for phi, _ in sys.branches:
            face = face_join(face, phi)
        return face, sys

    # -- faces and intervals ------------------------------------------------

    def face(self) -> Face:
        phi = self.face_clause()
        while self.at_symbol("\\/"):
            self.next()
            phi = face_join(phi, self.face_clause())
        return phi

    def face_clause(self) -> Face:
        phi = self.face_atom()
        while self.at_symbol("/\\"):
            self.next()
            phi = face_meet(phi, self.face_atom())
        return phi

    def face_atom(self) -> Face:
        self.expect("symbol", "(")
        if self.at_symbol("("):
            inner = self.face()
            self.expect("symbol", ")")
            return inner
        r = self.interval()
        self.expect("symbol", "=")
        pol = self.expect("int")
        if pol.lexeme not in ("0", "1"):
            raise ParseError(pol.span, ["0", "1"], pol.lexeme)
        self.expect("symbol", ")")
        return face_of_eq(r, int(pol.lexeme))

    def interval(self) -> IExpr:
        r = self.interval_meet()
        while self.at_symbol("\\/"):
            self.next()
            r = IJoin(r, self.interval_meet())
        return r

    def interval_meet(self) -> IExpr:
        r = self.interval_atom()
        while self.at_symbol("/\\"):
            self.next()
            r = IMeet(r, self.interval_atom())
        return r

    def interval_atom(self) -> IExpr:
        t = self.peek()
        if self.at_symbol("-"):
            self.next()
            return INeg(self.interval_atom())
        if t.kind == "int" and t.lexeme in ("0", "1"):
            self.next()
            return ZERO if t.lexeme == "0" else ONE
        if t.kind == "ident":
            self.next()
            return IVar(t.lexeme)
        if self.at_symbol("("):
            self.next()
            r = self.interval()
            self.expect("symbol", ")")
            return r
        raise self.fail(["an interval expression"])


def parse_module(source: str) -> ModuleFile:
    p = Parser(tokenize(source))
    m = p.module()
    p.expect("eof")
    return m


def parse_term(source: str) -> Term:
    p = Parser(tokenize(source))
    t = p.term()
    p.expect("eof")
    return t


def parse_interval(source: str) -> IExpr:
    p = Parser(tokenize(source))
    r = p.interval()
    p.expect("eof")
    return r
