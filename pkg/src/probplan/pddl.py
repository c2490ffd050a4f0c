"""STRIPS-subset PDDL: parsing, printing, grounding and discrete execution.

Supported: ``:strips`` and flat or shallow ``:typing``; positive conjunctive
preconditions and goals; add/delete effects. Anything else is rejected with a
diagnostic that names the feature.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

Template = tuple[str, tuple[str, ...]]  # (predicate, args) with ?vars or objects


class PddlError(ValueError):
    """Base class for every domain/problem error raised by this module."""


class PddlSyntaxError(PddlError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class UnsupportedFeatureError(PddlError):
    def __init__(self, feature: str, where: str = ""):
        suffix = f" (in {where})" if where else ""
        super().__init__(f"unsupported PDDL feature: {feature}{suffix}")
        self.feature = feature


class DuplicateNameError(PddlError):
    pass


class UndeclaredError(PddlError):
    pass


class ArityError(PddlError):
    pass


class StructuralAssumptionError(PddlError):
    def __init__(self, operator: str, message: str):
        super().__init__(f"operator {operator!r}: {message}")
        self.operator = operator


class PreconditionError(PddlError):
    pass


# -- s-expressions ----------------------------------------------------------


@dataclass(frozen=True)
class Sym:
    text: str
    line: int
    col: int


@dataclass
class SList:
    items: list
    line: int
    col: int

    def head(self) -> str | None:
        if self.items and isinstance(self.items[0], Sym):
            return self.items[0].text
        return None


_TOKEN_RE = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


def read_sexpr(text: str) -> SList:
    """Read exactly one top-level s-expression; identifiers are lower-cased."""
    stack: list[SList] = []
    result: SList | None = None
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        tok = m.group(0)
        col = m.start() - line_start + 1
        if tok[0].isspace() or tok[0] == ";":
            nl = tok.count("\n")
            if nl:
                line += nl
                line_start = m.start() + tok.rindex("\n") + 1
            continue
        if result is not None:
            raise PddlSyntaxError("trailing content after expression", line, col)
        if tok == "(":
            stack.append(SList([], line, col))
        elif tok == ")":
            if not stack:
                raise PddlSyntaxError("unbalanced ')'", line, col)
            done = stack.pop()
            if stack:
                stack[-1].items.append(done)
            else:
                result = done
        else:
            if not stack:
                raise PddlSyntaxError(f"unexpected token {tok!r}", line, col)
            stack[-1].items.append(Sym(tok.lower(), line, col))
    if stack:
        open_ = stack[-1]
        raise PddlSyntaxError("unclosed '('", open_.line, open_.col)
    if result is None:
        raise PddlSyntaxError("empty input", line, 1)
    return result


# -- schema types -----------------------------------------------------------


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    arity: int
    parameter_types: tuple[str, ...] = ()

    def __post_init__(self):
        if self.arity < 0:
            raise ValueError("arity must be non-negative")
        if self.parameter_types and len(self.parameter_types) != self.arity:
            raise ValueError(f"predicate {self.name}: {len(self.parameter_types)} types for arity {self.arity}")


@dataclass(frozen=True)
class OperatorSchema:
    name: str
    parameters: tuple[tuple[str, str], ...]  # (?var, type)
    precondition: tuple[Template, ...]
    add_effects: tuple[Template, ...]
    delete_effects: tuple[Template, ...]

    def __post_init__(self):
        both = set(self.add_effects) & set(self.delete_effects)
        if both:
            raise StructuralAssumptionError(self.name, f"atoms both added and deleted: {sorted(both)}")
        declared = {v for v, _ in self.parameters}
        for _, args in self.precondition + self.add_effects + self.delete_effects:
            for a in args:
                if a.startswith("?") and a not in declared:
                    raise UndeclaredError(f"operator {self.name}: variable {a} not in :parameters")


@dataclass(frozen=True)
class DomainDef:
    name: str
    requirements: tuple[str, ...] = ()
    types: tuple[tuple[str, str], ...] = ()  # (type, parent)
    predicates: tuple[PredicateSchema, ...] = ()
    operators: tuple[OperatorSchema, ...] = ()

    def predicate(self, name: str) -> PredicateSchema:
        for p in self.predicates:
            if p.name == name:
                return p
        raise UndeclaredError(f"undeclared predicate {name!r}")

    def is_subtype(self, t: str, ancestor: str) -> bool:
        if ancestor in ("object", t):
            return True
        parents = dict(self.types)
        seen = set()
        while t in parents and t not in seen:
            seen.add(t)
            t = parents[t]
            if t == ancestor:
                return True
        return False


@dataclass(frozen=True)
class ProblemDef:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...]  # (name, type)
    initial_state: tuple[Template, ...]
    goal: tuple[Template, ...]


# -- parsing ----------------------------------------------------------------

_SUPPORTED_REQS = {":strips", ":typing"}
_FEATURE_REQS = {
    ":negative-preconditions": "negative preconditions",
    ":disjunctive-preconditions": "disjunctive preconditions",
    ":conditional-effects": "conditional effects",
    ":numeric-fluents": "numeric fluents",
    ":fluents": "numeric fluents",
    ":equality": "equality",
    ":existential-preconditions": "existential preconditions",
    ":universal-preconditions": "universal preconditions",
    ":quantified-preconditions": "quantified preconditions",
    ":adl": "ADL",
    ":derived-predicates": "derived predicates",
    ":durative-actions": "durative actions",
    ":action-costs": "action costs",
}
_FORMULA_FEATURES = {
    "not": "negative preconditions",
    "or": "disjunctive preconditions",
    "imply": "disjunctive preconditions",
    "exists": "existential preconditions",
    "forall": "universal preconditions",
    "when": "conditional effects",
    "=": "equality",
    "increase": "numeric fluents",
    "decrease": "numeric fluents",
    "assign": "numeric fluents",
    "scale-up": "numeric fluents",
    "scale-down": "numeric fluents",
    ">": "numeric fluents",
    "<": "numeric fluents",
    ">=": "numeric fluents",
    "<=": "numeric fluents",
}


def _expect_list(x, what: str) -> SList:
    if not isinstance(x, SList):
        raise PddlSyntaxError(f"expected ({what} ...), got {x.text!r}", x.line, x.col)
    return x


def _sym(x, what: str) -> str:
    if not isinstance(x, Sym):
        raise PddlSyntaxError(f"expected {what}, got a list", x.line, x.col)
    return x.text


def _typed_list(items: Sequence, what: str) -> list[tuple[str, str]]:
    """Parse ``a b - t c`` into [(a, t), (b, t), (c, object)]."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        name = _sym(items[i], what)
        if name == "-":
            if i + 1 >= len(items) or not pending:
                raise PddlSyntaxError("dangling '-' in typed list", items[i].line, items[i].col)
            typ = items[i + 1]
            if isinstance(typ, SList):
                raise UnsupportedFeatureError("either-types", what)
            out.extend((p, typ.text) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(name)
        i += 1
    out.extend((p, "object") for p in pending)
    return out


def _check_unique(names: Iterable[str], what: str) -> None:
    seen = set()
    for n in names:
        if n in seen:
            raise DuplicateNameError(f"duplicate {what} {n!r}")
        seen.add(n)


def _atom(expr, where: str) -> Template:
    lst = _expect_list(expr, "atom")
    if not lst.items:
        raise PddlSyntaxError("empty atom", lst.line, lst.col)
    head = _sym(lst.items[0], "predicate name")
    if head in _FORMULA_FEATURES:
        raise UnsupportedFeatureError(_FORMULA_FEATURES[head], where)
    if head == "and":
        raise PddlSyntaxError("nested 'and' is not an atom", lst.line, lst.col)
    return head, tuple(_sym(a, "argument") for a in lst.items[1:])


def _conjunction(expr, where: str) -> list[Template]:
    lst = _expect_list(expr, "formula")
    if lst.head() == "and":
        parts = lst.items[1:]
    elif not lst.items:
        parts = []
    else:
        parts = [lst]
    return [_atom(p, where) for p in parts]


def _effects(expr, where: str) -> tuple[list[Template], list[Template]]:
    lst = _expect_list(expr, "effect")
    parts = lst.items[1:] if lst.head() == "and" else ([lst] if lst.items else [])
    add, delete = [], []
    for p in parts:
        pl = _expect_list(p, "effect")
        if pl.head() == "not":
            if len(pl.items) != 2:
                raise PddlSyntaxError("(not ...) takes one atom", pl.line, pl.col)
            delete.append(_atom(pl.items[1], where))
        else:
            add.append(_atom(pl, where))
    return add, delete


def _dedupe(xs: Iterable) -> tuple:
    return tuple(dict.fromkeys(xs))


def _parse_action(lst: SList, predicates: dict[str, PredicateSchema]) -> OperatorSchema:
    if len(lst.items) < 2:
        raise PddlSyntaxError(":action needs a name", lst.line, lst.col)
    name = _sym(lst.items[1], "action name")
    params: list[tuple[str, str]] = []
    pre: list[Template] = []
    add: list[Template] = []
    delete: list[Template] = []
    items = lst.items[2:]
    if len(items) % 2:
        raise PddlSyntaxError(f"action {name}: keyword without value", lst.line, lst.col)
    for key, val in zip(items[::2], items[1::2]):
        k = _sym(key, "action keyword")
        if k == ":parameters":
            params = _typed_list(_expect_list(val, "parameters").items, f"action {name}")
            _check_unique((p for p, _ in params), f"parameter of {name}")
        elif k == ":precondition":
            pre = _conjunction(val, f"precondition of {name}")
        elif k == ":effect":
            add, delete = _effects(val, f"effect of {name}")
        else:
            raise UnsupportedFeatureError(k, f"action {name}")
    for pred, args in pre + add + delete:
        if pred not in predicates:
            raise UndeclaredError(f"action {name}: undeclared predicate {pred!r}")
        if len(args) != predicates[pred].arity:
            raise ArityError(f"action {name}: {pred} expects {predicates[pred].arity} arguments, got {len(args)}")
    return OperatorSchema(name, tuple(params), _dedupe(pre), _dedupe(add), _dedupe(delete))


def parse_domain(text: str) -> DomainDef:
    """Parse a domain file into a :class:`DomainDef`."""
    root = read_sexpr(text)
    if root.head() != "define" or len(root.items) < 2:
        raise PddlSyntaxError("expected (define (domain NAME) ...)", root.line, root.col)
    hdr = _expect_list(root.items[1], "domain")
    if hdr.head() != "domain" or len(hdr.items) != 2:
        raise PddlSyntaxError("expected (domain NAME)", hdr.line, hdr.col)
    name = _sym(hdr.items[1], "domain name")
    reqs: list[str] = []
    types: list[tuple[str, str]] = []
    preds: dict[str, PredicateSchema] = {}
    ops: list[OperatorSchema] = []
    for sec in root.items[2:]:
        sec = _expect_list(sec, "section")
        head = sec.head()
        if head == ":requirements":
            for r in sec.items[1:]:
                r = _sym(r, "requirement")
                if r in _FEATURE_REQS:
                    raise UnsupportedFeatureError(_FEATURE_REQS[r], ":requirements")
                if r not in _SUPPORTED_REQS:
                    raise UnsupportedFeatureError(r, ":requirements")
                reqs.append(r)
        elif head == ":types":
            types = _typed_list(sec.items[1:], ":types")
            _check_unique((t for t, _ in types), "type")
        elif head == ":predicates":
            for p in sec.items[1:]:
                p = _expect_list(p, "predicate")
                pname = _sym(p.items[0], "predicate name") if p.items else None
                if pname is None:
                    raise PddlSyntaxError("empty predicate", p.line, p.col)
                if pname in preds:
                    raise DuplicateNameError(f"duplicate predicate {pname!r}")
                args = _typed_list(p.items[1:], f"predicate {pname}")
                typed = any(t != "object" for _, t in args)
                preds[pname] = PredicateSchema(pname, len(args), tuple(t for _, t in args) if typed else ())
        elif head == ":action":
            ops.append(_parse_action(sec, preds))
        elif head in (":functions",):
            raise UnsupportedFeatureError("numeric fluents", head)
        elif head == ":derived":
            raise UnsupportedFeatureError("derived predicates", head)
        elif head == ":durative-action":
            raise UnsupportedFeatureError("durative actions", head)
        else:
            raise UnsupportedFeatureError(str(head), "domain")
    _check_unique((o.name for o in ops), "operator")
    return DomainDef(name, tuple(reqs), tuple(types), tuple(preds.values()), tuple(ops))


def parse_problem(text: str, domain: DomainDef) -> ProblemDef:
    """Parse a problem file and validate it against ``domain``."""
    root = read_sexpr(text)
    if root.head() != "define" or len(root.items) < 2:
        raise PddlSyntaxError("expected (define (problem NAME) ...)", root.line, root.col)
    hdr = _expect_list(root.items[1], "problem")
    if hdr.head() != "problem" or len(hdr.items) != 2:
        raise PddlSyntaxError("expected (problem NAME)", hdr.line, hdr.col)
    name = _sym(hdr.items[1], "problem name")
    dom_name = domain.name
    objects: list[tuple[str, str]] = []
    init: list[Template] = []
    goal: list[Template] = []
    for sec in root.items[2:]:
        sec = _expect_list(sec, "section")
        head = sec.head()
        if head == ":domain":
            dom_name = _sym(sec.items[1], "domain name")
            if dom_name != domain.name:
                raise PddlError(f"problem is for domain {dom_name!r}, not {domain.name!r}")
        elif head == ":objects":
            objects = _typed_list(sec.items[1:], ":objects")
            _check_unique((o for o, _ in objects), "object")
        elif head == ":init":
            init = [_atom(a, ":init") for a in sec.items[1:]]
        elif head == ":goal":
            if len(sec.items) != 2:
                raise PddlSyntaxError(":goal takes one formula", sec.line, sec.col)
            goal = _conjunction(sec.items[1], ":goal")
        else:
            raise UnsupportedFeatureError(str(head), "problem")
    declared_types = {t for t, _ in domain.types} | {p for _, p in domain.types} | {"object"}
    for o, t in objects:
        if t not in declared_types:
            raise UndeclaredError(f"object {o!r} has undeclared type {t!r}")
    typemap = dict(objects)
    preds = {p.name: p for p in domain.predicates}
    for what, atoms in ((":init", init), (":goal", goal)):
        for pred, args in atoms:
            if pred not in preds:
                raise UndeclaredError(f"{what}: undeclared predicate {pred!r}")
            schema = preds[pred]
            if len(args) != schema.arity:
                raise ArityError(f"{what}: {pred} expects {schema.arity} arguments, got {len(args)}")
            for i, a in enumerate(args):
                if a not in typemap:
                    raise UndeclaredError(f"{what}: undeclared object {a!r} in ({pred} {' '.join(args)})")
                if schema.parameter_types and not domain.is_subtype(typemap[a], schema.parameter_types[i]):
                    raise PddlError(f"{what}: object {a!r} of type {typemap[a]} used as {schema.parameter_types[i]}")
    return ProblemDef(name, dom_name, tuple(objects), _dedupe(init), _dedupe(goal))


# -- printing ---------------------------------------------------------------


def _fmt_atom(t: Template) -> str:
    pred, args = t
    return f"({' '.join((pred,) + args)})"


def _fmt_typed(pairs: Sequence[tuple[str, str]], typed: bool) -> str:
    if not typed:
        return " ".join(n for n, _ in pairs)
    return " ".join(f"{n} - {t}" for n, t in pairs)


def _fmt_conj(atoms: Sequence[Template]) -> str:
    return "(and" + "".join(" " + _fmt_atom(a) for a in atoms) + ")"


def print_domain(d: DomainDef) -> str:
    typed = ":typing" in d.requirements or bool(d.types)
    out = [f"(define (domain {d.name})"]
    if d.requirements:
        out.append(f"  (:requirements {' '.join(d.requirements)})")
    if d.types:
        out.append(f"  (:types {_fmt_typed(d.types, True)})")
    if d.predicates:
        out.append("  (:predicates")
        for p in d.predicates:
            vars_ = [(f"?x{i}", t) for i, t in enumerate(p.parameter_types or ("object",) * p.arity)]
            body = _fmt_typed(vars_, bool(p.parameter_types))
            out.append(f"    ({p.name}{' ' + body if body else ''})")
        out.append("  )")
    for o in d.operators:
        eff = "(and" + "".join(" " + _fmt_atom(a) for a in o.add_effects)
        eff += "".join(f" (not {_fmt_atom(a)})" for a in o.delete_effects) + ")"
        out.append(f"  (:action {o.name}")
        out.append(f"    :parameters ({_fmt_typed(o.parameters, typed)})")
        out.append(f"    :precondition {_fmt_conj(o.precondition)}")
        out.append(f"    :effect {eff})")
    out.append(")")
    return "\n".join(out) + "\n"


def print_problem(p: ProblemDef, typed: bool = True) -> str:
    out = [f"(define (problem {p.name})", f"  (:domain {p.domain_name})"]
    if p.objects:
        out.append(f"  (:objects {_fmt_typed(p.objects, typed)})")
    out.append("  (:init" + "".join(" " + _fmt_atom(a) for a in p.initial_state) + ")")
    out.append(f"  (:goal {_fmt_conj(p.goal)})")
    out.append(")")
    return "\n".join(out) + "\n"


# -- grounding --------------------------------------------------------------


@dataclass(frozen=True, order=True)
class GroundAtom:
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return self.predicate
        return f"{self.predicate}({','.join(self.args)})"


_CALL_RE = re.compile(r"^\s*([^\s(),]+)\s*(?:\(\s*([^()]*)\))?\s*$")


def parse_call(text: str) -> tuple[str, tuple[str, ...]]:
    """Split ``"on(a,b)"`` / ``"handempty"`` / ``"(on a b)"`` into name and args."""
    s = text.strip()
    if s.startswith("("):
        parts = s.strip("()").split()
        if not parts:
            raise ValueError(f"cannot parse {text!r}")
        return parts[0].lower(), tuple(a.lower() for a in parts[1:])
    m = _CALL_RE.match(s)
    if not m:
        raise ValueError(f"cannot parse {text!r}")
    args = tuple(a.strip().lower() for a in m.group(2).split(",") if a.strip()) if m.group(2) else ()
    return m.group(1).lower(), args


class AtomUniverse:
    """Dense, ordered index over ground atoms."""

    def __init__(self, atoms: Iterable[GroundAtom]):
        self.atoms: tuple[GroundAtom, ...] = tuple(atoms)
        self._index = {a: i for i, a in enumerate(self.atoms)}
        if len(self._index) != len(self.atoms):
            raise ValueError("duplicate atoms in universe")

    def __len__(self) -> int:
        return len(self.atoms)

    def __iter__(self) -> Iterator[GroundAtom]:
        return iter(self.atoms)

    def __eq__(self, other) -> bool:
        return isinstance(other, AtomUniverse) and self.atoms == other.atoms

    def __hash__(self) -> int:
        return hash(self.atoms)

    def __contains__(self, atom) -> bool:
        return atom in self._index

    def id(self, atom: GroundAtom | str) -> int:
        if isinstance(atom, str):
            atom = GroundAtom(*parse_call(atom))
        try:
            return self._index[atom]
        except KeyError:
            raise UndeclaredError(f"atom {atom} is not in the universe") from None

    def ids(self, atoms: Iterable[GroundAtom | str]) -> frozenset[int]:
        return frozenset(self.id(a) for a in atoms)

    def by_predicate(self, name: str) -> list[int]:
        return [i for i, a in enumerate(self.atoms) if a.predicate == name]

    def names(self, state: Iterable[int]) -> list[str]:
        return [str(self.atoms[i]) for i in sorted(state)]


@dataclass(frozen=True)
class Action:
    name: str
    args: tuple[str, ...]
    pre: frozenset[int]
    add: frozenset[int]
    delete: frozenset[int]

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.args)})"


SymbolicState = frozenset  # frozenset[int] of true atom ids


@dataclass(frozen=True)
class GroundProblem:
    domain: DomainDef
    problem: ProblemDef
    universe: AtomUniverse
    actions: tuple[Action, ...]
    init: frozenset[int]
    goal: frozenset[int]
    _by_name: dict = field(default_factory=dict, compare=False, repr=False)

    def action(self, text: str) -> Action:
        if not self._by_name:
            self._by_name.update({(a.name, a.args): a for a in self.actions})
        key = parse_call(text)
        try:
            return self._by_name[key]
        except KeyError:
            raise UndeclaredError(f"unknown action {text!r}") from None


def _objects_of_type(domain: DomainDef, objects: Sequence[tuple[str, str]], typ: str) -> list[str]:
    return sorted(o for o, t in objects if domain.is_subtype(t, typ))


def _bindings(domain: DomainDef, objects, types: Sequence[str]) -> Iterator[tuple[str, ...]]:
    # distinct parameters bind distinct objects
    pools = [_objects_of_type(domain, objects, t) for t in types]
    for combo in itertools.product(*pools):
        if len(set(combo)) == len(combo):
            yield combo


def ground_atoms(domain: DomainDef, objects: Sequence[tuple[str, str]]) -> AtomUniverse:
    atoms = []
    for p in domain.predicates:
        types = p.parameter_types or ("object",) * p.arity
        atoms.extend(GroundAtom(p.name, args) for args in _bindings(domain, objects, types))
    return AtomUniverse(sorted(atoms))


def ground(domain: DomainDef, problem: ProblemDef) -> tuple[AtomUniverse, list[Action]]:
    """Enumerate the atom universe and every well-typed action.

    Raises :class:`StructuralAssumptionError` when a grounded action deletes an
    atom outside its precondition or adds one of its own preconditions.
    """
    universe = ground_atoms(domain, problem.objects)
    actions: list[Action] = []
    for op in sorted(domain.operators, key=lambda o: o.name):
        vars_ = [v for v, _ in op.parameters]
        for combo in _bindings(domain, problem.objects, [t for _, t in op.parameters]):
            sub = dict(zip(vars_, combo))

            def inst(ts):
                return [GroundAtom(p, tuple(sub.get(a, a) for a in args)) for p, args in ts]

            pre_atoms = inst(op.precondition)
            if any(a not in universe for a in pre_atoms):
                continue  # statically inapplicable
            eff = inst(op.add_effects) + inst(op.delete_effects)
            missing = [a for a in eff if a not in universe]
            if missing:
                raise StructuralAssumptionError(op.name, f"effect atom {missing[0]} is not well-typed")
            pre = universe.ids(pre_atoms)
            add = universe.ids(inst(op.add_effects))
            delete = universe.ids(inst(op.delete_effects))
            if not delete <= pre:
                bad = universe.names(delete - pre)
                raise StructuralAssumptionError(op.name, f"deletes {bad} outside its precondition")
            if add & pre:
                raise StructuralAssumptionError(op.name, f"adds its own precondition {universe.names(add & pre)}")
            if add & delete:
                raise StructuralAssumptionError(op.name, "adds and deletes the same atom")
            actions.append(Action(op.name, combo, pre, add, delete))
    actions.sort(key=lambda a: (a.name, a.args))
    return universe, actions


def ground_problem(domain: DomainDef, problem: ProblemDef) -> GroundProblem:
    universe, actions = ground(domain, problem)
    init = universe.ids(GroundAtom(p, a) for p, a in problem.initial_state)
    goal = universe.ids(GroundAtom(p, a) for p, a in problem.goal)
    return GroundProblem(domain, problem, universe, tuple(actions), init, goal)


def apply_discrete(state: frozenset[int], action: Action) -> frozenset[int]:
    if not action.pre <= state:
        raise PreconditionError(f"{action}: precondition not satisfied")
    return (state - action.delete) | action.add


def applicable(state: frozenset[int], action: Action) -> bool:
    return action.pre <= state
