"""Built-in grammars, labeled corpora, and the PDA spec text format.

Spec file format, one declaration per line (``#`` starts a comment)::

    states: smile frown
    input: ( ) e
    stack: b
    start: smile
    accept: smile
    rule: smile ( EMPTY -> smile push:b

Declaration order of symbols fixes every vector index. Rules may appear in
any order.
"""

from __future__ import annotations

import itertools
import random
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path

from nnpda.automata import NOOP, POP, PdaSpec, StackOp, run_classical, validate_spec

__all__ = [
    "BUILTINS",
    "LabeledCorpus",
    "PositiveStarvation",
    "SpecParseError",
    "builtin",
    "dumps_corpus",
    "dumps_spec",
    "end_symbol",
    "gen_corpus",
    "loads_corpus",
    "parse_spec",
    "parse_spec_file",
    "random_spec",
    "tokenize",
    "write_spec_file",
]

EMPTY = "EMPTY"


class SpecParseError(ValueError):
    def __init__(self, lineno: int | None, message: str) -> None:
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


class PositiveStarvation(RuntimeError):
    pass


# -- built-in grammars ------------------------------------------------------------


def _parens() -> PdaSpec:
    # Balanced parentheses: push on '(', pop on ')', in either state; fall into
    # 'frown' on ')' with an empty stack or on the end marker with a nonempty one.
    rules = []
    for q in ("smile", "frown"):
        for top in ("b", None):
            rules.append((q, "(", top, q, "push:b"))
            rules.append((q, ")", top, "frown" if top is None else q, "pop"))
            rules.append((q, "e", top, q if top is None else "frown", "noop"))
    return PdaSpec.from_rules(("smile", "frown"), ("(", ")", "e"), ("b",), "smile", ("smile",), rules)


def _dyck2() -> PdaSpec:
    opens = {"(": "P", "[": "B"}
    closes = {")": "P", "]": "B"}
    rules = []
    for top in ("P", "B", None):
        for ch, sym in opens.items():
            rules.append(("ok", ch, top, "ok", f"push:{sym}"))
        for ch, sym in closes.items():
            rules.append(("ok", ch, top, "ok" if top == sym else "dead", "pop" if top == sym else "noop"))
        rules.append(("ok", "e", top, "ok" if top is None else "dead", "noop"))
        for ch in ("(", ")", "[", "]", "e"):
            rules.append(("dead", ch, top, "dead", "noop"))
    return PdaSpec.from_rules(
        ("ok", "dead"), ("(", ")", "[", "]", "e"), ("P", "B"), "ok", ("ok",), rules
    )


def _anbn() -> PdaSpec:
    # a^n b^n, n >= 0, terminated by 'e'.
    rules = []
    for top in ("A", None):
        rules.append(("push", "a", top, "push", "push:A"))
        for phase in ("push", "pop"):
            if top == "A":
                rules.append((phase, "b", top, "pop", "pop"))
                rules.append((phase, "e", top, "dead", "noop"))
            else:
                rules.append((phase, "b", top, "dead", "noop"))
                rules.append((phase, "e", top, "acc", "noop"))
        rules.append(("pop", "a", top, "dead", "noop"))
        for q in ("acc", "dead"):
            for ch in ("a", "b", "e"):
                rules.append((q, ch, top, "dead", "noop"))
    return PdaSpec.from_rules(
        ("push", "pop", "acc", "dead"), ("a", "b", "e"), ("A",), "push", ("acc",), rules
    )


def _dyck_word(rng: random.Random, pairs: int, kinds: Sequence[tuple[int, int]]) -> list[int]:
    # Random walk that closes exactly when the remaining budget forces it.
    out: list[int] = []
    open_stack: list[int] = []
    left = pairs
    while left or open_stack:
        if left and (not open_stack or rng.random() < 0.5):
            o, c = rng.choice(kinds)
            out.append(o)
            open_stack.append(c)
            left -= 1
        else:
            out.append(open_stack.pop())
    return out


PositiveGen = Callable[[random.Random, int], list[int]]

_POSITIVE: dict[str, PositiveGen] = {
    "parens": lambda rng, n: _dyck_word(rng, n // 2, [(0, 1)]),
    "dyck2": lambda rng, n: _dyck_word(rng, n // 2, [(0, 1), (2, 3)]),
    "anbn": lambda rng, n: [0] * (n // 2) + [1] * (n // 2),
}

BUILTINS: dict[str, Callable[[], PdaSpec]] = {"parens": _parens, "dyck2": _dyck2, "anbn": _anbn}


def builtin(name: str) -> PdaSpec:
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown builtin grammar {name!r}; choose from {sorted(BUILTINS)}") from None
    return validate_spec(factory())


def builtin_name(spec: PdaSpec) -> str | None:
    for name, factory in BUILTINS.items():
        if factory() == spec:
            return name
    return None


def random_spec(rng: random.Random, *, max_states: int = 5, max_inputs: int = 4, max_stack: int = 3) -> PdaSpec:
    """A random total deterministic PDA with uniformly drawn sizes and rules."""
    n = rng.randint(1, max_states)
    m1 = rng.randint(1, max_inputs)
    m2 = rng.randint(1, max_stack)
    ops = [POP, NOOP, *(StackOp.push(c) for c in range(m2))]
    transitions = {
        (q, a, r): (rng.randrange(n), rng.choice(ops))
        for q in range(n)
        for a in range(m1)
        for r in range(m2 + 1)
    }
    spec = PdaSpec(
        states=tuple(f"q{i}" for i in range(n)),
        input_alphabet=tuple(f"a{i}" for i in range(m1)),
        stack_alphabet=tuple(f"S{i}" for i in range(m2)),
        start_state=rng.randrange(n),
        accept_states=frozenset(q for q in range(n) if rng.random() < 0.5),
        transitions=transitions,
    )
    return validate_spec(spec)


# -- corpora ---------------------------------------------------------------------------


def end_symbol(spec: PdaSpec) -> int:
    """The end-of-string marker is, by convention, the last input symbol."""
    return spec.m1 - 1


@dataclass(frozen=True)
class LabeledCorpus:
    """Strings (end marker included) with labels from the classical simulator."""

    entries: tuple[tuple[tuple[int, ...], bool], ...]
    provenance: str

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def positives(self) -> int:
        return sum(label for _, label in self.entries)

    def verify(self, spec: PdaSpec) -> None:
        for word, label in self.entries:
            if run_classical(spec, word).accept != label:
                raise ValueError(f"corpus label {label} disagrees with the PDA on {word}")


def _label(spec: PdaSpec, words: Iterable[Sequence[int]]) -> tuple[tuple[tuple[int, ...], bool], ...]:
    return tuple((tuple(w), run_classical(spec, w).accept) for w in words)


def exhaustive_words(spec: PdaSpec, max_len: int) -> list[tuple[int, ...]]:
    end = end_symbol(spec)
    body = [a for a in range(spec.m1) if a != end]
    return [
        (*w, end)
        for length in range(max_len + 1)
        for w in itertools.product(body, repeat=length)
    ]


def gen_corpus(
    spec: PdaSpec,
    *,
    exhaustive: int | None = None,
    count: int | None = None,
    max_len: int = 50,
    seed: int = 0,
    positive_fraction: float = 0.5,
    max_attempts: int = 10**6,
) -> LabeledCorpus:
    """Exhaustive strings up to length ``exhaustive``, or ``count`` random ones.

    Random mode draws a length uniformly in ``0..max_len`` and then symbols
    uniformly, except that a ``positive_fraction`` quota is filled with
    accepted strings: built from the grammar for built-ins, otherwise by
    rejection sampling (at most ``max_attempts`` draws).
    """
    if (exhaustive is None) == (count is None):
        raise ValueError("give exactly one of exhaustive= or count=")
    if exhaustive is not None:
        return LabeledCorpus(_label(spec, exhaustive_words(spec, exhaustive)), f"exhaustive(L={exhaustive})")

    rng = random.Random(seed)
    end = end_symbol(spec)
    body = [a for a in range(spec.m1) if a != end]
    quota = round(count * positive_fraction)
    generator = _POSITIVE.get(builtin_name(spec) or "")

    positives: list[tuple[int, ...]] = []
    attempts = 0
    while len(positives) < quota:
        length = rng.randint(0, max_len)
        if generator is not None:
            word = (*generator(rng, length), end)
        else:
            word = (*(rng.choice(body) for _ in range(length)), end)
        attempts += 1
        if run_classical(spec, word).accept:
            positives.append(word)
        elif attempts >= max_attempts:
            raise PositiveStarvation(f"only {len(positives)}/{quota} accepted strings after {attempts} draws")
    randoms = [
        (*(rng.choice(body) for _ in range(rng.randint(0, max_len))), end)
        for _ in range(count - quota)
    ]
    words = positives + randoms
    rng.shuffle(words)
    return LabeledCorpus(_label(spec, words), f"random(count={count}, max_len={max_len}, seed={seed})")


def dumps_corpus(spec: PdaSpec, corpus: LabeledCorpus) -> str:
    return "".join(
        f"{int(label)} {' '.join(spec.input_alphabet[a] for a in word)}\n"
        for word, label in corpus.entries
    )


def loads_corpus(spec: PdaSpec, text: str, *, verify: bool = True) -> LabeledCorpus:
    index = {name: i for i, name in enumerate(spec.input_alphabet)}
    entries = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        label, *symbols = line.split()
        if label not in ("0", "1"):
            raise ValueError(f"line {lineno}: label must be 0 or 1, got {label!r}")
        try:
            word = tuple(index[s] for s in symbols)
        except KeyError as exc:
            raise ValueError(f"line {lineno}: unknown input symbol {exc.args[0]!r}") from None
        entries.append((word, label == "1"))
    corpus = LabeledCorpus(tuple(entries), "file")
    if verify:
        corpus.verify(spec)
    return corpus


def tokenize(spec: PdaSpec, text: str) -> list[int]:
    """Whitespace-separated symbol names, or one character per symbol if there is no whitespace."""
    index = {name: i for i, name in enumerate(spec.input_alphabet)}
    tokens = text.split() if any(c.isspace() for c in text.strip()) else list(text.strip())
    try:
        return [index[t] for t in tokens]
    except KeyError as exc:
        raise ValueError(f"unknown input symbol {exc.args[0]!r}") from None


# -- spec text format ---------------------------------------------------------------------


def parse_spec(text: str) -> PdaSpec:
    """Parse and validate; syntax problems raise :class:`SpecParseError`,
    a well-formed but non-total machine raises :class:`InvalidSpec`."""
    decls: dict[str, tuple[int, list[str]]] = {}
    rules: list[tuple[int, list[str]]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, rest = line.partition(":")
        key = key.strip()
        if not sep:
            raise SpecParseError(lineno, f"expected '<keyword>: ...', got {line!r}")
        if key == "rule":
            rules.append((lineno, rest.split()))
        elif key in ("states", "input", "stack", "start", "accept"):
            if key in decls:
                raise SpecParseError(lineno, f"duplicate '{key}' declaration")
            decls[key] = (lineno, rest.split())
        else:
            raise SpecParseError(lineno, f"unknown keyword {key!r}")
    for key in ("states", "input", "stack", "start"):
        if key not in decls:
            raise SpecParseError(None, f"missing '{key}:' declaration")

    states, inputs, stack = (decls[k][1] for k in ("states", "input", "stack"))
    start_line, start = decls["start"]
    if len(start) != 1:
        raise SpecParseError(start_line, "'start:' takes exactly one state")
    accept_line, accept = decls.get("accept", (None, []))

    def lookup(lineno: int | None, names: Sequence[str], name: str, what: str) -> int:
        try:
            return list(names).index(name)
        except ValueError:
            raise SpecParseError(lineno, f"unknown {what} {name!r}") from None

    transitions = {}
    for lineno, parts in rules:
        if len(parts) != 6 or parts[3] != "->":
            raise SpecParseError(lineno, "rule must read '<state> <input> <top|EMPTY> -> <state> <op>'")
        q, a, top, _, q2, op = parts
        key = (
            lookup(lineno, states, q, "state"),
            lookup(lineno, inputs, a, "input symbol"),
            len(stack) if top == EMPTY else lookup(lineno, stack, top, "stack symbol"),
        )
        if op == "pop":
            sop = POP
        elif op == "noop":
            sop = NOOP
        elif op.startswith("push:"):
            sop = StackOp.push(lookup(lineno, stack, op[5:], "stack symbol"))
        else:
            raise SpecParseError(lineno, f"unknown stack operation {op!r}")
        if key in transitions:
            raise SpecParseError(lineno, f"second rule for ({q}, {a}, {top}); the PDA must be deterministic")
        transitions[key] = (lookup(lineno, states, q2, "state"), sop)

    spec = PdaSpec(
        states=tuple(states),
        input_alphabet=tuple(inputs),
        stack_alphabet=tuple(stack),
        start_state=lookup(start_line, states, start[0], "state"),
        accept_states=frozenset(lookup(accept_line, states, f, "state") for f in accept),
        transitions=transitions,
    )
    return validate_spec(spec)


def dumps_spec(spec: PdaSpec) -> str:
    lines = [
        f"states: {' '.join(spec.states)}",
        f"input: {' '.join(spec.input_alphabet)}",
        f"stack: {' '.join(spec.stack_alphabet)}",
        f"start: {spec.states[spec.start_state]}",
        f"accept: {' '.join(spec.states[f] for f in sorted(spec.accept_states))}",
    ]
    for (q, a, r), (q2, op) in sorted(spec.transitions.items()):
        top = EMPTY if r == spec.m2 else spec.stack_alphabet[r]
        op_text = f"push:{spec.stack_alphabet[op.symbol]}" if op.kind == "push" else op.kind
        lines.append(f"rule: {spec.states[q]} {spec.input_alphabet[a]} {top} -> {spec.states[q2]} {op_text}")
    return "\n".join(lines) + "\n"


def parse_spec_file(path: str | Path) -> PdaSpec:
    return parse_spec(Path(path).read_text())


def write_spec_file(path: str | Path, spec: PdaSpec) -> None:
    Path(path).write_text(dumps_spec(spec))
