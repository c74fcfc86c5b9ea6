"""LTL formulas, lasso-word checking, Buechi automata and products.

Formulas follow the grammar

    phi ::= true | atom | !phi | phi & phi | phi | phi  |  X phi
          | phi U phi | F phi | G phi

with precedence unary > U > & > | and right-associative U.

Infinite words are handled as lassos (prefix, cycle): finite label-set
sequences with the cycle repeated forever.  ``check_lasso`` evaluates the
exact semantics by fixpoint iteration over the folded position graph.
"""

import re
from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

class Formula:
    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __eq__(self, other):
        return type(self) is type(other) and self.key() == other.key()

    def __hash__(self):
        return hash((type(self).__name__, self.key()))

    def key(self):
        raise NotImplementedError

    def children(self):
        return ()


class TrueF(Formula):
    def key(self):
        return ()

    def __str__(self):
        return "true"


class Atom(Formula):
    def __init__(self, name):
        self.name = name

    def key(self):
        return (self.name,)

    def __str__(self):
        return self.name


class _Unary(Formula):
    op = "?"

    def __init__(self, sub):
        self.sub = sub

    def key(self):
        return (self.sub,)

    def children(self):
        return (self.sub,)

    def __str__(self):
        s = str(self.sub)
        if isinstance(self.sub, (And, Or, Until)):
            s = "(%s)" % s
        return self.op + s


class Not(_Unary):
    op = "!"


class Next(_Unary):
    op = "X "


class Eventually(_Unary):
    op = "F "


class Always(_Unary):
    op = "G "


class _Binary(Formula):
    op = "?"

    def __init__(self, left, right):
        self.left = left
        self.right = right

    def key(self):
        return (self.left, self.right)

    def children(self):
        return (self.left, self.right)


class And(_Binary):
    op = "&"

    def __str__(self):
        parts = []
        for s in (self.left, self.right):
            t = str(s)
            if isinstance(s, Or):
                t = "(%s)" % t
            parts.append(t)
        return " & ".join(parts)


class Or(_Binary):
    op = "|"

    def __str__(self):
        return "%s | %s" % (self.left, self.right)


class Until(_Binary):
    op = "U"

    def __str__(self):
        parts = []
        for s in (self.left, self.right):
            t = str(s)
            if isinstance(s, (And, Or, Until)):
                t = "(%s)" % t
            parts.append(t)
        return " U ".join(parts)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"\s*(?:([A-Za-z_][A-Za-z0-9_]*)|([!&|()]))")
_KEYWORDS = {"X", "U", "F", "G", "true"}


class ParseError(ValueError):
    pass


_UNICODE_ALIASES = {
    "¬": "!",   # negation
    "∧": "&",   # conjunction
    "∨": "|",   # disjunction
    "○": " X ",  # next
    "◇": " F ",  # eventually
    "⋄": " F ",
    "□": " G ",  # always
    "\U0001d5b4": " U ",
    "⊤": " true ",
}


def _tokenize(text):
    for src, dst in _UNICODE_ALIASES.items():
        text = text.replace(src, dst)
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ParseError("unexpected character at %r" % rest[:10])
        word, sym = m.groups()
        tokens.append(word if word is not None else sym)
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of formula")
        if expected is not None and tok != expected:
            raise ParseError("expected %r, got %r" % (expected, tok))
        self.i += 1
        return tok

    def parse(self):
        f = self.parse_or()
        if self.peek() is not None:
            raise ParseError("trailing tokens: %r" % self.peek())
        return f

    def parse_or(self):
        f = self.parse_and()
        while self.peek() == "|":
            self.take()
            f = Or(f, self.parse_and())
        return f

    def parse_and(self):
        f = self.parse_until()
        while self.peek() == "&":
            self.take()
            f = And(f, self.parse_until())
        return f

    def parse_until(self):
        f = self.parse_unary()
        if self.peek() == "U":
            self.take()
            return Until(f, self.parse_until())  # right associative
        return f

    def parse_unary(self):
        tok = self.peek()
        if tok == "!":
            self.take()
            return Not(self.parse_unary())
        if tok == "X":
            self.take()
            return Next(self.parse_unary())
        if tok == "F":
            self.take()
            return Eventually(self.parse_unary())
        if tok == "G":
            self.take()
            return Always(self.parse_unary())
        if tok == "(":
            self.take()
            f = self.parse_or()
            self.take(")")
            return f
        if tok == "true":
            self.take()
            return TrueF()
        if tok is None:
            raise ParseError("unexpected end of formula")
        if tok in _KEYWORDS or tok in "!&|()":
            raise ParseError("unexpected token %r" % tok)
        self.take()
        return Atom(tok)


def parse_ltl(text):
    """Parse an LTL formula string into an AST."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty formula")
    return _Parser(tokens).parse()


def atoms_of(formula):
    out = set()

    def walk(f):
        if isinstance(f, Atom):
            out.add(f.name)
        for ch in f.children():
            walk(ch)

    walk(formula)
    return out


# ---------------------------------------------------------------------------
# lasso-word model checking
# ---------------------------------------------------------------------------

def _as_label_sets(seq):
    return [frozenset(s) for s in seq]


def check_lasso(formula, prefix, cycle):
    """Exact LTL satisfaction of the word prefix . cycle^omega.

    Args:
        formula: Formula or string.
        prefix: sequence of label sets (may be empty).
        cycle: non-empty sequence of label sets.

    Returns bool: satisfaction at position 0.
    """
    if isinstance(formula, str):
        formula = parse_ltl(formula)
    prefix = _as_label_sets(prefix)
    cycle = _as_label_sets(cycle)
    if not cycle:
        raise ValueError("lasso cycle must be non-empty")
    word = prefix + cycle
    n = len(word)
    loop = len(prefix)

    def succ(i):
        return i + 1 if i + 1 < n else loop

    memo = {}

    def sat(f):
        if f in memo:
            return memo[f]
        if isinstance(f, TrueF):
            v = [True] * n
        elif isinstance(f, Atom):
            v = [f.name in word[i] for i in range(n)]
        elif isinstance(f, Not):
            v = [not x for x in sat(f.sub)]
        elif isinstance(f, And):
            a, b = sat(f.left), sat(f.right)
            v = [x and y for x, y in zip(a, b)]
        elif isinstance(f, Or):
            a, b = sat(f.left), sat(f.right)
            v = [x or y for x, y in zip(a, b)]
        elif isinstance(f, Next):
            s = sat(f.sub)
            v = [s[succ(i)] for i in range(n)]
        elif isinstance(f, Until):
            a, b = sat(f.left), sat(f.right)
            v = list(b)  # least fixpoint from below
            for _ in range(n + 1):
                changed = False
                for i in reversed(range(n)):
                    nv = b[i] or (a[i] and v[succ(i)])
                    if nv != v[i]:
                        v[i] = nv
                        changed = True
                if not changed:
                    break
        elif isinstance(f, Eventually):
            s = sat(f.sub)
            v = list(s)
            for _ in range(n + 1):
                changed = False
                for i in reversed(range(n)):
                    nv = s[i] or v[succ(i)]
                    if nv != v[i]:
                        v[i] = nv
                        changed = True
                if not changed:
                    break
        elif isinstance(f, Always):
            s = sat(f.sub)
            v = list(s)  # greatest fixpoint from above
            for _ in range(n + 1):
                changed = False
                for i in reversed(range(n)):
                    nv = s[i] and v[succ(i)]
                    if nv != v[i]:
                        v[i] = nv
                        changed = True
                if not changed:
                    break
        else:
            raise TypeError("unknown formula node %r" % f)
        memo[f] = v
        return v

    return bool(sat(formula)[0])


def eval_propositional(formula, labels):
    """Evaluate a propositional formula (no temporal operators) on a label set."""
    if isinstance(formula, str):
        formula = parse_ltl(formula)
    labels = frozenset(labels)

    def ev(f):
        if isinstance(f, TrueF):
            return True
        if isinstance(f, Atom):
            return f.name in labels
        if isinstance(f, Not):
            return not ev(f.sub)
        if isinstance(f, And):
            return ev(f.left) and ev(f.right)
        if isinstance(f, Or):
            return ev(f.left) or ev(f.right)
        raise ValueError("guard must be propositional: %r" % f)

    return ev(formula)


# ---------------------------------------------------------------------------
# Buechi automata
# ---------------------------------------------------------------------------

@dataclass
class NbaTransition:
    src: str
    guard: Formula
    dst: str


class Nba:
    """Nondeterministic Buechi automaton with propositional guards.

    Text format (one statement per line, '#' comments):

        init: q0
        accepting: q2 q3
        q0 -- !p2 & !p3 --> q0
        q0 -- p1 --> q1
    """

    def __init__(self, initial, accepting, transitions):
        self.initial = list(initial)
        self.accepting = set(accepting)
        self.transitions = list(transitions)
        self.states = []
        for t in self.transitions:
            for s in (t.src, t.dst):
                if s not in self.states:
                    self.states.append(s)
        for s in list(self.initial) + sorted(self.accepting):
            if s not in self.states:
                self.states.append(s)
        self._by_src = {}
        for t in self.transitions:
            self._by_src.setdefault(t.src, []).append(t)

    @classmethod
    def parse(cls, text):
        initial = []
        accepting = []
        transitions = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("init:"):
                initial.extend(line[len("init:"):].split())
                continue
            if line.startswith("accepting:"):
                accepting.extend(line[len("accepting:"):].split())
                continue
            m = re.match(r"^(\S+)\s*--\s*(.+?)\s*-->\s*(\S+)$", line)
            if m is None:
                raise ValueError("bad automaton line: %r" % raw)
            src, guard_text, dst = m.groups()
            transitions.append(NbaTransition(src, parse_ltl(guard_text), dst))
        if not initial:
            raise ValueError("automaton needs an 'init:' line")
        if not accepting:
            raise ValueError("automaton needs an 'accepting:' line")
        return cls(initial, accepting, transitions)

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.parse(fh.read())

    def successors(self, state, labels):
        """Automaton states reachable from ``state`` reading ``labels``."""
        out = []
        for t in self._by_src.get(state, []):
            if eval_propositional(t.guard, labels):
                out.append(t.dst)
        return out

    def accepts_lasso(self, prefix, cycle):
        """Membership of the lasso word in the automaton language."""
        prefix = _as_label_sets(prefix)
        cycle = _as_label_sets(cycle)
        word = prefix + cycle
        n = len(word)
        loop = len(prefix)
        # reachable sets forward; then accepting-cycle detection on the loop
        frontier = {(0, q) for q in self.initial}
        nodes = set(frontier)
        stack = list(frontier)
        adj = {}
        while stack:
            i, q = stack.pop()
            nxt_i = i + 1 if i + 1 < n else loop
            for q2 in self.successors(q, word[i]):
                adj.setdefault((i, q), []).append((nxt_i, q2))
                if (nxt_i, q2) not in nodes:
                    nodes.add((nxt_i, q2))
                    stack.append((nxt_i, q2))
        # accepting node on the loop part that can reach itself
        for node in nodes:
            i, q = node
            if i < loop or q not in self.accepting:
                continue
            seen = set()
            stk = list(adj.get(node, []))
            while stk:
                cur = stk.pop()
                if cur == node:
                    return True
                if cur in seen:
                    continue
                seen.add(cur)
                stk.extend(adj.get(cur, []))
        return False


# ---------------------------------------------------------------------------
# Kripke structures and the product search
# ---------------------------------------------------------------------------

class Kripke:
    """Finite transition system with labelled states.

    Args:
        states: ordered state names.
        labels: dict state -> iterable of atomic propositions.
        transitions: dict state -> successor list; None means the complete
            relation.
        initial: list of initial states.
    """

    def __init__(self, states, labels, initial, transitions=None):
        self.states = list(states)
        self.labels = {s: frozenset(labels.get(s, ())) for s in self.states}
        self.initial = list(initial)
        if transitions is None:
            transitions = {s: list(self.states) for s in self.states}
        self.transitions = {s: list(transitions.get(s, ()))
                            for s in self.states}

    def label(self, s):
        return self.labels[s]


@dataclass
class LassoPath:
    """Accepting lasso projected on Kripke states."""
    prefix: list
    cycle: list

    def word(self, kripke):
        return ([kripke.label(s) for s in self.prefix],
                [kripke.label(s) for s in self.cycle])

    def __str__(self):
        return "%s(%s)^w" % (" ".join(self.prefix), " ".join(self.cycle))


@dataclass
class AcceptingPath:
    """Accepting lasso plus the workspace region of every proposition."""
    prefix: list
    cycle: list
    regions: dict

    @classmethod
    def from_lasso(cls, lasso, regions):
        for p in lasso.prefix + lasso.cycle:
            if p not in regions:
                raise ValueError("proposition %s has no region" % p)
        return cls(list(lasso.prefix), list(lasso.cycle), dict(regions))

    def __str__(self):
        return "%s(%s)^w" % (" ".join(self.prefix), " ".join(self.cycle))


def _normalize_lasso(prefix, cycle):
    """Canonical lasso: fold shared tail of prefix into the cycle rotation."""
    prefix = list(prefix)
    cycle = list(cycle)
    while prefix and prefix[-1] == cycle[-1]:
        cycle = [cycle[-1]] + cycle[:-1]
        prefix.pop()
    return prefix, cycle


def product_search(kripke, nba):
    """Deterministic shortest accepting lasso of the Kripke x NBA product.

    Product states are (kripke state, automaton state) where the automaton
    has already consumed the Kripke state's label.  Among accepting product
    states the one minimizing (|prefix| + |cycle|) wins, ties broken by
    discovery order; the result is projected on Kripke states and
    normalized.  Returns a LassoPath or None.
    """
    order = {s: i for i, s in enumerate(kripke.states)}
    qorder = {q: i for i, q in enumerate(nba.states)}

    def sort_key(node):
        s, q = node
        return (order[s], qorder[q])

    # initial product states: consume the first letter
    inits = []
    for s in sorted(kripke.initial, key=lambda s: order[s]):
        for q0 in nba.initial:
            for q in sorted(set(nba.successors(q0, kripke.label(s)))):
                node = (s, q)
                if node not in inits:
                    inits.append(node)

    def neighbors(node):
        s, q = node
        out = []
        for s2 in sorted(kripke.transitions[s], key=lambda x: order[x]):
            for q2 in sorted(set(nba.successors(q, kripke.label(s2)))):
                out.append((s2, q2))
        return out

    def bfs(sources, target=None):
        """Shortest-path tree from sources; returns (dist, parent)."""
        dist = {}
        parent = {}
        queue = []
        for node in sources:
            if node not in dist:
                dist[node] = 0
                parent[node] = None
                queue.append(node)
        head = 0
        while head < len(queue):
            node = queue[head]
            head += 1
            for nxt in neighbors(node):
                if nxt not in dist:
                    dist[nxt] = dist[node] + 1
                    parent[nxt] = node
                    queue.append(nxt)
                    if target is not None and nxt == target:
                        return dist, parent
        return dist, parent

    dist0, parent0 = bfs(inits)
    candidates = []
    for node in sorted(dist0, key=lambda n: (dist0[n], sort_key(n))):
        s, q = node
        if q not in nba.accepting:
            continue
        # shortest cycle node -> node (length >= 1)
        cdist = {}
        cparent = {}
        queue = list(neighbors(node))
        for nxt in queue:
            cdist.setdefault(nxt, 1)
            cparent.setdefault(nxt, None)
        queue = [n for n in dict.fromkeys(queue)]
        found = node in cdist
        head = 0
        while head < len(queue) and not found:
            cur = queue[head]
            head += 1
            for nxt in neighbors(cur):
                if nxt not in cdist:
                    cdist[nxt] = cdist[cur] + 1
                    cparent[nxt] = cur
                    queue.append(nxt)
                    if nxt == node:
                        found = True
                        break
        if not found:
            continue
        candidates.append((dist0[node] + cdist[node], len(candidates), node,
                           cparent))
    if not candidates:
        return None
    _, _, best, cparent = min(candidates, key=lambda t: (t[0], t[1]))
    # reconstruct prefix
    chain = [best]
    while parent0[chain[-1]] is not None:
        chain.append(parent0[chain[-1]])
    chain.reverse()
    prefix_states = [s for s, _ in chain]
    # reconstruct cycle (ends at best)
    cyc = [best]
    cur = cparent[best]
    while cur is not None:
        cyc.append(cur)
        cur = cparent[cur]
    cyc.reverse()
    cycle_states = [s for s, _ in cyc]
    # prefix chain ends at the anchor, which is also the cycle's last
    # element; normalization folds it into the cycle rotation
    prefix, cycle = _normalize_lasso(prefix_states, cycle_states)
    return LassoPath(prefix, cycle)


# ---------------------------------------------------------------------------
# decomposition into local specifications
# ---------------------------------------------------------------------------

@dataclass
class LocalGoal:
    """One internal objective: reach (and possibly hold) a region."""
    region: object
    mode: str  # "reach" | "stay"
    name: str = ""


@dataclass
class LocalSpec:
    """Per-cell piece of the global task.

    Attributes:
        cell_name: label of the covering cell.
        cell: obstacle-free working region (safety set, held throughout).
        init_region: where the mode is entered.
        target_region: handoff region to the next cell (None for last cell).
        goals: ordered LocalGoal list (handoff reach plus internal goals).
        formula: human-readable local formula string.
        phase: "prefix" or "cycle" position in the global path.
    """
    cell_name: str
    cell: object
    init_region: object
    target_region: object
    goals: list = field(default_factory=list)
    formula: str = ""
    phase: str = "prefix"


def _free(base, obstacles):
    from .geometry import FreeRegion
    return FreeRegion(base, obstacles)


def _narrowed(base, candidates, obstacles, delta):
    """Overlap region, narrowed to a proposition region when the triple
    intersection is usable; returns (FreeRegion, prop name or None)."""
    from . import geometry as geo
    for pname, preg in candidates:
        triple = geo.intersect(base, preg)
        if geo.is_empty(triple):
            continue
        fr = _free(triple, obstacles)
        if not fr.is_empty(delta):
            return fr, pname
    return _free(base, obstacles), None


def decompose(result, robust_path, obstacles, delta=0.05, init_region=None):
    """Split a realized accepting path into per-cell local specifications.

    Each cell of the realized sequence yields a LocalSpec: stay inside the
    obstacle-free cell, enter from the overlap with the previous cell
    (narrowed to the shared proposition region when possible), and reach
    the overlap with the next cell.  The final cell of a single-proposition
    cycle carries a stay goal on that proposition's region.  init_region,
    when given, is where the run starts (the expanded initial proposition
    region); the first cell's controller only needs to cover it.  Returns
    the ordered LocalSpec list and a composed formula string.
    """
    from . import geometry as geo
    if not result.realized:
        raise ValueError("decompose needs a realized path")
    obstacles = list(obstacles)
    R = robust_path.regions

    entries = []  # (cell, pair a, pair b, is_cycle, last in its pair)
    for a, b, cells, is_cycle in result.pair_info:
        for j, cname in enumerate(cells):
            entries.append((cname, a, b, is_cycle, j == len(cells) - 1))
    if not entries:
        raise ValueError("realized path names no cells")
    cyc = [p for k, p in enumerate(robust_path.cycle)
           if k == 0 or robust_path.cycle[k - 1] != p]
    terminal_stay = len(cyc) == 1

    specs = []
    for k, (cname, a, b, is_cycle, last_in_pair) in enumerate(entries):
        cell_region = result.regions[cname]
        safe = _free(cell_region, obstacles)
        conjuncts = ["G(%s)" % cname]

        if k == 0:
            if init_region is not None:
                init = _free(geo.intersect(cell_region, init_region),
                             obstacles)
                init_prop = a
            else:
                init, init_prop = safe, None
        else:
            prev_region = result.regions[entries[k - 1][0]]
            init, init_prop = _narrowed(
                geo.intersect(prev_region, cell_region),
                [(a, R[a]), (b, R[b])], obstacles, delta)
        assert not init.is_empty(delta), \
            "empty local initial region in %s" % cname

        goals = []
        target = None
        nxt = None
        if k + 1 < len(entries):
            nxt = entries[k + 1][0]
        elif is_cycle and not terminal_stay:
            # the omega-loop closes back on its first cell
            nxt = next(e[0] for e in entries if e[3])
        if nxt is not None:
            nxt_region = result.regions[nxt]
            cands = [(b, R[b])] if last_in_pair else [(b, R[b]), (a, R[a])]
            target, tprop = _narrowed(geo.intersect(cell_region, nxt_region),
                                      obstacles=obstacles, delta=delta,
                                      candidates=cands)
            label = "%s & %s" % (cname, nxt)
            if tprop is not None:
                label += " & " + tprop
            goals.append(LocalGoal(target, "reach", label))
            conjuncts.append("F(%s)" % label)
        elif terminal_stay:
            hold = _free(geo.intersect(cell_region, R[b]), obstacles)
            # drop the goal when the safety set already implies it
            pts = safe.grid_points(delta)
            if not (len(pts) and np.all(hold.contains_points(pts))):
                goals.append(LocalGoal(hold, "stay", b))
                conjuncts.append("F(G(%s))" % b)

        specs.append(LocalSpec(cname, safe, init, target, goals,
                               " & ".join(conjuncts),
                               "cycle" if is_cycle else "prefix"))

    # a single held proposition needs no recurrence wrapper: its stay goal
    # already pins the suffix behavior
    if terminal_stay:
        prefix_parts = [s.formula for s in specs]
        cycle_parts = []
    else:
        prefix_parts = [s.formula for s in specs if s.phase == "prefix"]
        cycle_parts = [s.formula for s in specs if s.phase == "cycle"]
    composed = " & ".join("(%s)" % p for p in prefix_parts)
    if cycle_parts:
        nested = "(%s)" % cycle_parts[-1]
        for p in reversed(cycle_parts[:-1]):
            nested = "(%s) & F%s" % (p, nested)
        wrapped = "G(F(%s))" % nested
        composed = "%s & %s" % (composed, wrapped) if composed else wrapped
    return specs, composed
