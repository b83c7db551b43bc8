"""Parser for the ``:strips`` + ``:typing`` fragment of PDDL."""
from __future__ import annotations

from dataclasses import dataclass

from .model import (
    ActionSchema,
    Atom,
    Domain,
    PddlError,
    PddlSyntaxError,
    PredicateSchema,
    Problem,
    ROOT_TYPE,
    UnsupportedFeature,
    validate_problem,
)

SUPPORTED_REQUIREMENTS = frozenset({":strips", ":typing"})
_UNSUPPORTED_CONNECTIVES = {"or", "imply", "forall", "exists", "when", "=", "increase", "decrease"}


@dataclass
class Token:
    text: str
    line: int
    col: int


@dataclass
class SList:
    items: list
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, i, n = 1, 1, 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col, i = line + 1, 1, i + 1
            continue
        if ch.isspace():
            i, col = i + 1, col + 1
            continue
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            tokens.append(Token(ch, line, col))
            i, col = i + 1, col + 1
            continue
        start, scol = i, col
        while i < n and not text[i].isspace() and text[i] not in "();":
            i, col = i + 1, col + 1
        tokens.append(Token(text[start:i].lower(), line, scol))
    return tokens


def read_sexpr(text: str) -> SList:
    tokens = tokenize(text)
    if not tokens:
        raise PddlSyntaxError(1, 1, "'('", "end of input")
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(tokens):
            last = tokens[-1]
            raise PddlSyntaxError(last.line, last.col, "')'", "end of input")
        tok = tokens[pos]
        pos += 1
        if tok.text == "(":
            items = []
            while True:
                if pos >= len(tokens):
                    raise PddlSyntaxError(tok.line, tok.col, "')' closing this list", "end of input")
                if tokens[pos].text == ")":
                    pos += 1
                    return SList(items, tok.line, tok.col)
                items.append(read())
        if tok.text == ")":
            raise PddlSyntaxError(tok.line, tok.col, "'(' or symbol", ")")
        return tok

    first = tokens[0]
    if first.text != "(":
        raise PddlSyntaxError(first.line, first.col, "'('", first.text)
    tree = read()
    if pos != len(tokens):
        extra = tokens[pos]
        raise PddlSyntaxError(extra.line, extra.col, "end of input", extra.text)
    return tree


def _sym(node, expected: str) -> str:
    if isinstance(node, Token):
        return node.text
    raise PddlSyntaxError(node.line, node.col, expected, "(")


def _lst(node, expected: str) -> SList:
    if isinstance(node, SList):
        return node
    raise PddlSyntaxError(node.line, node.col, expected, node.text)


def _expect(node, text: str):
    got = _sym(node, repr(text))
    if got != text:
        raise PddlSyntaxError(node.line, node.col, repr(text), got)


def _where(node) -> str:
    return f"line {node.line}, col {node.col}"


def parse_typed_list(items: list, *, variables: bool) -> list[tuple[str, str]]:
    """``a b - t c`` -> [(a, t), (b, t), (c, object)]."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        name = _sym(items[i], "name")
        if name == "-":
            if i + 1 >= len(items) or not pending:
                raise PddlSyntaxError(items[i].line, items[i].col, "name before and type after '-'", name)
            tnode = items[i + 1]
            if isinstance(tnode, SList):
                raise UnsupportedFeature(f"{_where(tnode)}: 'either' types are not supported")
            out.extend((p, tnode.text) for p in pending)
            pending = []
            i += 2
            continue
        if variables and not name.startswith("?"):
            raise PddlSyntaxError(items[i].line, items[i].col, "variable starting with '?'", name)
        if not variables and name.startswith("?"):
            raise PddlSyntaxError(items[i].line, items[i].col, "constant name", name)
        pending.append(name)
        i += 1
    out.extend((p, ROOT_TYPE) for p in pending)
    return out


def parse_atom(node) -> Atom:
    lst = _lst(node, "atom '(pred args...)'")
    if not lst.items:
        raise PddlSyntaxError(lst.line, lst.col, "predicate name", "()")
    head = _sym(lst.items[0], "predicate name")
    if head in _UNSUPPORTED_CONNECTIVES:
        raise UnsupportedFeature(f"{_where(lst)}: '{head}' is outside the STRIPS fragment")
    args = tuple(_sym(a, "argument") for a in lst.items[1:])
    return Atom(head, args)


def _conjuncts(node) -> list:
    lst = _lst(node, "'(and ...)' or atom")
    if lst.items and isinstance(lst.items[0], Token) and lst.items[0].text == "and":
        return lst.items[1:]
    return [lst]


def parse_condition(node, *, context: str) -> frozenset[Atom]:
    out = []
    for c in _conjuncts(node):
        lst = _lst(c, "atom")
        if lst.items and isinstance(lst.items[0], Token) and lst.items[0].text == "not":
            raise UnsupportedFeature(f"{_where(lst)}: negative literals in {context} are not supported")
        out.append(parse_atom(lst))
    return frozenset(out)


def parse_effect(node) -> tuple[frozenset[Atom], frozenset[Atom]]:
    adds, dels = [], []
    for c in _conjuncts(node):
        lst = _lst(c, "effect literal")
        if lst.items and isinstance(lst.items[0], Token) and lst.items[0].text == "not":
            if len(lst.items) != 2:
                raise PddlSyntaxError(lst.line, lst.col, "'(not (atom))'")
            dels.append(parse_atom(lst.items[1]))
        else:
            adds.append(parse_atom(lst))
    return frozenset(adds), frozenset(dels)


def _parse_action(lst: SList) -> ActionSchema:
    name = _sym(lst.items[1], "action name") if len(lst.items) > 1 else None
    if name is None:
        raise PddlSyntaxError(lst.line, lst.col, "action name")
    params: list[tuple[str, str]] = []
    pre: frozenset[Atom] = frozenset()
    add: frozenset[Atom] = frozenset()
    dele: frozenset[Atom] = frozenset()
    rest = lst.items[2:]
    if len(rest) % 2:
        raise PddlSyntaxError(rest[-1].line, rest[-1].col, "value after keyword")
    for key_node, val in zip(rest[::2], rest[1::2]):
        key = _sym(key_node, "action keyword")
        if key == ":parameters":
            params = parse_typed_list(_lst(val, "parameter list").items, variables=True)
        elif key == ":precondition":
            pre = parse_condition(val, context="preconditions")
        elif key == ":effect":
            add, dele = parse_effect(val)
        else:
            raise UnsupportedFeature(f"{_where(key_node)}: action keyword {key} is not supported")
    return ActionSchema(name, tuple(params), pre, add, dele)


def parse_domain(text: str) -> Domain:
    tree = read_sexpr(text)
    items = tree.items
    if not items:
        raise PddlSyntaxError(tree.line, tree.col, "'define'")
    _expect(items[0], "define")
    if len(items) < 2:
        raise PddlSyntaxError(tree.line, tree.col, "'(domain NAME)'")
    header = _lst(items[1], "'(domain NAME)'")
    if len(header.items) != 2:
        raise PddlSyntaxError(header.line, header.col, "'(domain NAME)'")
    _expect(header.items[0], "domain")
    name = _sym(header.items[1], "domain name")
    types: dict[str, str] = {}
    constants: dict[str, str] = {}
    predicates: dict[str, PredicateSchema] = {}
    actions: dict[str, ActionSchema] = {}
    requirements: tuple[str, ...] = (":strips",)
    for section in items[2:]:
        sec = _lst(section, "domain section")
        if not sec.items:
            raise PddlSyntaxError(sec.line, sec.col, "section keyword", "()")
        key = _sym(sec.items[0], "section keyword")
        body = sec.items[1:]
        if key == ":requirements":
            reqs = tuple(_sym(r, "requirement flag") for r in body)
            bad = [r for r in reqs if r not in SUPPORTED_REQUIREMENTS]
            if bad:
                raise UnsupportedFeature(f"{_where(sec)}: unsupported requirement {', '.join(bad)}")
            requirements = reqs
        elif key == ":types":
            for t, parent in parse_typed_list(body, variables=False):
                if t in types:
                    raise PddlError(f"{_where(sec)}: duplicate type {t}")
                if t != ROOT_TYPE:
                    types[t] = parent
        elif key == ":constants":
            for c, t in parse_typed_list(body, variables=False):
                if c in constants:
                    raise PddlError(f"{_where(sec)}: duplicate constant {c}")
                constants[c] = t
        elif key == ":predicates":
            for p in body:
                plst = _lst(p, "predicate declaration")
                pname = _sym(plst.items[0], "predicate name") if plst.items else None
                if pname is None:
                    raise PddlSyntaxError(plst.line, plst.col, "predicate name")
                if pname in predicates:
                    raise PddlError(f"{_where(plst)}: duplicate predicate {pname}")
                predicates[pname] = PredicateSchema(pname, tuple(parse_typed_list(plst.items[1:], variables=True)))
        elif key == ":action":
            act = _parse_action(sec)
            if act.name in actions:
                raise PddlError(f"{_where(sec)}: duplicate action {act.name}")
            actions[act.name] = act
        else:
            raise UnsupportedFeature(f"{_where(sec)}: domain section {key} is not supported")
    return Domain(name, types, predicates, actions, constants, requirements)


def parse_problem(text: str, domain: Domain) -> Problem:
    tree = read_sexpr(text)
    items = tree.items
    if not items:
        raise PddlSyntaxError(tree.line, tree.col, "'define'")
    _expect(items[0], "define")
    if len(items) < 2:
        raise PddlSyntaxError(tree.line, tree.col, "'(problem NAME)'")
    header = _lst(items[1], "'(problem NAME)'")
    if len(header.items) != 2:
        raise PddlSyntaxError(header.line, header.col, "'(problem NAME)'")
    _expect(header.items[0], "problem")
    name = _sym(header.items[1], "problem name")
    domain_name = None
    objects: dict[str, str] = {}
    init: frozenset[Atom] = frozenset()
    goal = None
    for section in items[2:]:
        sec = _lst(section, "problem section")
        if not sec.items:
            raise PddlSyntaxError(sec.line, sec.col, "section keyword", "()")
        key = _sym(sec.items[0], "section keyword")
        body = sec.items[1:]
        if key == ":domain":
            domain_name = _sym(body[0], "domain name") if body else None
        elif key == ":objects":
            for o, t in parse_typed_list(body, variables=False):
                if o in objects:
                    raise PddlError(f"{_where(sec)}: duplicate object {o}")
                objects[o] = t
        elif key == ":init":
            init = frozenset(parse_atom(a) for a in body)
        elif key == ":goal":
            if len(body) != 1:
                raise PddlSyntaxError(sec.line, sec.col, "single goal formula")
            goal = parse_condition(body[0], context="goals")
        elif key == ":requirements":
            bad = [r for r in (_sym(b, "requirement") for b in body) if r not in SUPPORTED_REQUIREMENTS]
            if bad:
                raise UnsupportedFeature(f"{_where(sec)}: unsupported requirement {', '.join(bad)}")
        else:
            raise UnsupportedFeature(f"{_where(sec)}: problem section {key} is not supported")
    if domain_name is None:
        raise PddlSyntaxError(tree.line, tree.col, "'(:domain NAME)' section")
    if goal is None:
        raise PddlSyntaxError(tree.line, tree.col, "'(:goal ...)' section")
    problem = Problem(name, domain_name, objects, init, goal)
    validate_problem(domain, problem)
    return problem
