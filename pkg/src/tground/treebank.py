"""Penn-Treebank bracketed tree reading and clause-based query segmentation.

Queries arrive with a pre-bracketed constituency parse; we never run a parser.
Sub-events are the clause-level constituents (S, SBAR, SINV, FRAG), with each
word assigned to its lowest clause ancestor and one-word clauses dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Clause-level tags that start a sub-event (function suffixes stripped first).
CLAUSE_TAGS = frozenset({"S", "SBAR", "SINV", "FRAG"})

#: Downstream arrays are sized for at most this many sub-events per query.
MAX_SUBEVENTS = 6


class PtbParseError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass
class PennTree:
    """Internal node (label + children) or leaf (token)."""
    label: str | None = None
    token: str | None = None
    children: list["PennTree"] = field(default_factory=list)

    def is_leaf(self):
        return self.token is not None

    def leaves(self) -> list[str]:
        if self.is_leaf():
            return [self.token]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out


def _base_tag(label: str) -> str:
    """Strip function suffixes: 'S-TPC-1' -> 'S', 'SBAR=2' -> 'SBAR'."""
    for sep in "-=":
        idx = label.find(sep)
        if idx > 0:
            label = label[:idx]
    return label


def is_clause_label(label: str | None) -> bool:
    return label is not None and _base_tag(label) in CLAUSE_TAGS


def parse_ptb(text: str) -> PennTree:
    """Parse one bracketed tree; raises PtbParseError with a character offset."""
    pos = 0
    n = len(text)

    def skip_ws(i):
        while i < n and text[i].isspace():
            i += 1
        return i

    def parse_node(i):
        i = skip_ws(i)
        if i >= n:
            raise PtbParseError("unexpected end of input", i)
        if text[i] != "(":
            # bare token leaf
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            if j == i:
                raise PtbParseError(f"unexpected character {text[i]!r}", i)
            return PennTree(token=text[i:j]), j
        # labeled node
        start = i
        i = skip_ws(i + 1)
        j = i
        while j < n and not text[j].isspace() and text[j] not in "()":
            j += 1
        label = text[i:j]
        if not label:
            raise PtbParseError("node without a label", i)
        children = []
        i = j
        while True:
            i = skip_ws(i)
            if i >= n:
                raise PtbParseError("unbalanced brackets: missing ')'", start)
            if text[i] == ")":
                if not children:
                    raise PtbParseError("empty node", start)
                return PennTree(label=label, children=children), i + 1
            child, i = parse_node(i)
            children.append(child)

    pos = skip_ws(pos)
    if pos >= n:
        raise PtbParseError("empty input", 0)
    tree, pos = parse_node(pos)
    pos = skip_ws(pos)
    if pos != n:
        raise PtbParseError(f"trailing text {text[pos:pos + 10]!r}", pos)
    if tree.is_leaf():
        raise PtbParseError("top-level node must be bracketed", 0)
    return tree


def serialize(tree: PennTree) -> str:
    if tree.is_leaf():
        return tree.token
    inner = " ".join(serialize(c) for c in tree.children)
    return f"({tree.label} {inner})"


def count_clauses(tree: PennTree) -> int:
    """Number of clause-tagged nodes in the whole tree."""
    if tree.is_leaf():
        return 0
    own = 1 if is_clause_label(tree.label) else 0
    return own + sum(count_clauses(c) for c in tree.children)


def segment_clauses(tree: PennTree) -> np.ndarray:
    """Binary sub-event masks (K,N) from the clause structure of `tree`.

    Each word goes to its lowest clause ancestor; one-word clauses are
    dropped (their words stay unassigned); if nothing survives, the whole
    query becomes a single sub-event.  At most MAX_SUBEVENTS masks are kept
    (largest word count wins, ties to the earlier first word), ordered by
    first word position.
    """
    words = tree.leaves()
    n = len(words)

    # clause id -> assigned word positions, walking with the clause stack
    assigned: dict[int, list[int]] = {}
    clause_order: list[int] = []
    counter = [0]

    def walk(node, current_clause):
        if node.is_leaf():
            if current_clause is not None:
                assigned[current_clause].append(counter[0])
            counter[0] += 1
            return
        if is_clause_label(node.label):
            current_clause = len(clause_order)
            clause_order.append(current_clause)
            assigned[current_clause] = []
        for c in node.children:
            walk(c, current_clause)

    walk(tree, None)

    survivors = [positions for cid in clause_order
                 if len(positions := assigned[cid]) >= 2]
    if not survivors:
        survivors = [list(range(n))]
    if len(survivors) > MAX_SUBEVENTS:
        survivors.sort(key=lambda pos: (-len(pos), pos[0]))
        survivors = survivors[:MAX_SUBEVENTS]
    survivors.sort(key=lambda pos: pos[0])

    masks = np.zeros((len(survivors), n), dtype=np.float64)
    for k, positions in enumerate(survivors):
        masks[k, positions] = 1.0
    return masks
