"""Shift-reduce state machine for discontinuous mention recognition.

Six actions drive the machine: SHIFT and OUT consume buffer tokens,
COMPLETE-y emits the top stack span as a mention of type y, and the three
reduce actions concatenate the top two spans (REDUCE pops both, LEFT-REDUCE
keeps the lower span, RIGHT-REDUCE keeps the upper one, supporting mentions
that share components). States are immutable values; apply returns a fresh
state, so per-sentence rollouts can run in parallel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .corpus import CorpusError, Fragment, Mention, Sentence, canonicalize

# Actions beyond the step budget are restricted to COMPLETE while the stack
# is nonempty; a learned policy could otherwise loop on LEFT/RIGHT-REDUCE.
DEFAULT_BUDGET_MULTIPLIER = 8


class ActionKind(Enum):
    SHIFT = "SHIFT"
    OUT = "OUT"
    COMPLETE = "COMPLETE"
    REDUCE = "REDUCE"
    LEFT_REDUCE = "LREDUCE"
    RIGHT_REDUCE = "RREDUCE"


@dataclass(frozen=True, order=True)
class Action:
    kind: ActionKind
    entity_type: str | None = None

    def __post_init__(self):
        if (self.kind is ActionKind.COMPLETE) != (self.entity_type is not None):
            raise ValueError("entity_type is required exactly for COMPLETE actions")

    def __str__(self) -> str:
        if self.kind is ActionKind.COMPLETE:
            return f"COMPLETE:{self.entity_type}"
        return self.kind.value

    @staticmethod
    def parse(text: str) -> "Action":
        if text.startswith("COMPLETE:"):
            return Action(ActionKind.COMPLETE, text.split(":", 1)[1])
        try:
            return Action(ActionKind(text))
        except ValueError as exc:
            raise ValueError(f"unknown action {text!r}") from exc


SHIFT = Action(ActionKind.SHIFT)
OUT = Action(ActionKind.OUT)
REDUCE = Action(ActionKind.REDUCE)
LEFT_REDUCE = Action(ActionKind.LEFT_REDUCE)
RIGHT_REDUCE = Action(ActionKind.RIGHT_REDUCE)


def complete(entity_type: str) -> Action:
    return Action(ActionKind.COMPLETE, entity_type)


@dataclass(frozen=True)
class Span:
    """A (possibly discontinuous) partial span sitting on the stack."""

    fragments: tuple[Fragment, ...]
    id: int = 0


@dataclass(frozen=True)
class ParserState:
    buffer_pos: int = 0
    stack: tuple[Span, ...] = ()
    outputs: tuple[Mention, ...] = ()
    history: tuple[Action, ...] = ()
    next_span_id: int = 0

    @property
    def step_count(self) -> int:
        return len(self.history)


def initial_state(sentence_len: int) -> ParserState:
    if sentence_len < 0:
        raise ValueError("sentence length must be nonnegative")
    return ParserState()


def is_terminal(state: ParserState, sentence_len: int) -> bool:
    return state.buffer_pos >= sentence_len and not state.stack


def valid_actions(state: ParserState, sentence_len: int,
                  type_set: tuple[str, ...] | list[str],
                  budget: int | None = None) -> set[Action]:
    """The hard constraints: which actions may be taken from this state."""
    if budget is None:
        budget = DEFAULT_BUDGET_MULTIPLIER * max(sentence_len, 1)
    valid: set[Action] = set()
    over_budget = state.step_count >= budget
    if state.stack:
        for t in type_set:
            valid.add(complete(t))
        if over_budget:
            return valid
        if len(state.stack) >= 2:
            # reduces only apply to disjoint spans: the concatenation of
            # overlapping fragments has no canonical form
            s0, s1 = state.stack[-1], state.stack[-2]
            tokens0 = {t for f in s0.fragments for t in f.tokens()}
            if all(t not in tokens0 for f in s1.fragments for t in f.tokens()):
                valid.update((REDUCE, LEFT_REDUCE, RIGHT_REDUCE))
    if state.buffer_pos < sentence_len:
        valid.update((SHIFT, OUT))
    return valid


class InvalidActionError(ValueError):
    def __init__(self, action: Action, step: int):
        super().__init__(f"invalid action {action} at step {step}")
        self.action = action
        self.step = step


def apply(state: ParserState, action: Action, sentence_len: int,
          type_set: tuple[str, ...] | list[str],
          budget: int | None = None) -> ParserState:
    """Apply one action, returning the successor state."""
    if action not in valid_actions(state, sentence_len, type_set, budget):
        raise InvalidActionError(action, state.step_count)
    history = state.history + (action,)
    kind = action.kind
    if kind is ActionKind.SHIFT:
        span = Span((Fragment(state.buffer_pos, state.buffer_pos + 1),), state.next_span_id)
        return ParserState(state.buffer_pos + 1, state.stack + (span,),
                           state.outputs, history, state.next_span_id + 1)
    if kind is ActionKind.OUT:
        return ParserState(state.buffer_pos + 1, state.stack,
                           state.outputs, history, state.next_span_id)
    if kind is ActionKind.COMPLETE:
        top = state.stack[-1]
        mention = Mention(action.entity_type, top.fragments)
        return ParserState(state.buffer_pos, state.stack[:-1],
                           state.outputs + (mention,), history, state.next_span_id)
    s0, s1 = state.stack[-1], state.stack[-2]
    new_span = Span(canonicalize(s1.fragments + s0.fragments), state.next_span_id)
    below = state.stack[:-2]
    if kind is ActionKind.LEFT_REDUCE:
        below = below + (s1,)
    elif kind is ActionKind.RIGHT_REDUCE:
        below = below + (s0,)
    return ParserState(state.buffer_pos, below + (new_span,),
                       state.outputs, history, state.next_span_id + 1)


def decode(actions: list[Action], sentence_len: int,
           type_set: tuple[str, ...] | list[str] | None = None) -> frozenset[Mention]:
    """Run the action sequence and return its unique mention set.

    Raises on any invalid action (with the step index) or on a non-terminal
    final state. Duplicate COMPLETE outputs collapse: strict-match
    evaluation is set-based.
    """
    if type_set is None:
        type_set = sorted({a.entity_type for a in actions if a.entity_type})
    state = initial_state(sentence_len)
    budget = max(len(actions) + 1, DEFAULT_BUDGET_MULTIPLIER * max(sentence_len, 1))
    for action in actions:
        state = apply(state, action, sentence_len, type_set, budget)
    if not is_terminal(state, sentence_len):
        raise CorpusError("action sequence ends in a non-terminal state")
    return frozenset(state.outputs)


# ---------------------------------------------------------------------------
# Static oracle
# ---------------------------------------------------------------------------

def _is_prefix(frags: tuple[Fragment, ...], gold: tuple[Fragment, ...]) -> bool:
    """Whether frags form a left prefix of gold's fragment sequence.

    All but the last fragment must match exactly; the last may be a
    left-anchored part of the corresponding gold fragment.
    """
    k = len(frags)
    if k > len(gold):
        return False
    for i in range(k - 1):
        if frags[i] != gold[i]:
            return False
    last, g = frags[-1], gold[k - 1]
    return last.start == g.start and last.end <= g.end


def _is_fragment_run(frags: tuple[Fragment, ...], gold: tuple[Fragment, ...]) -> bool:
    """Whether frags appear as consecutive exact fragments inside gold."""
    k = len(frags)
    for start in range(len(gold) - k + 1):
        if tuple(gold[start:start + k]) == frags:
            return True
    return False


def _check_not_nested(mentions: tuple[Mention, ...]) -> None:
    sets = [m.token_set() for m in mentions]
    for i in range(len(sets)):
        for j in range(len(sets)):
            if i != j and sets[i] < sets[j]:
                raise CorpusError(f"nested mentions: {mentions[i]} inside {mentions[j]}")


def oracle(sentence: Sentence) -> tuple[list[Action], frozenset[Mention]]:
    """Derive the gold action sequence for a sentence.

    Greedy left-to-right scan: OUT for tokens in no mention, SHIFT
    otherwise. After each shift, reductions fire while the concatenation of
    the top two spans is a prefix of an unfinished gold mention; the kept
    variant is chosen when the lower (LEFT) or upper (RIGHT) span is still a
    component run of another unfinished mention. COMPLETE fires whenever the
    top span equals an unfinished gold mention and is not a proper prefix of
    another one.

    Crossing compositions can leave underivable mentions: those are dropped
    and the scan restarts on the reduced gold set until the machine
    terminates cleanly. Dropped mentions come back as `uncovered`.
    """
    _check_not_nested(sentence.mentions)
    n = len(sentence.tokens)
    gold = list(sentence.mentions)
    uncovered: set[Mention] = set()
    for _ in range(len(sentence.mentions) + 1):
        actions, unfinished, leftover = _oracle_pass(gold, n)
        if not leftover and not unfinished:
            return actions, frozenset(uncovered)
        if not unfinished:
            raise CorpusError(f"oracle failed to terminate cleanly on {sentence.tokens}")
        uncovered.update(unfinished)
        gold = [m for m in gold if m not in unfinished]
    raise CorpusError(f"oracle did not converge on {sentence.tokens}")


def _oracle_pass(gold: list[Mention], n: int) -> tuple[list[Action], list[Mention], bool]:
    mention_tokens = set()
    for m in gold:
        mention_tokens |= m.token_set()

    unfinished = list(gold)
    actions: list[Action] = []
    stack: list[tuple[Fragment, ...]] = []

    def required_elsewhere(frags: tuple[Fragment, ...], target: Mention) -> bool:
        return any(m is not target and _is_fragment_run(frags, m.fragments)
                   for m in unfinished)

    def completable(frags: tuple[Fragment, ...]) -> Mention | None:
        for m in unfinished:
            if frags == m.fragments:
                if not any(o is not m and _is_prefix(frags, o.fragments)
                           for o in unfinished):
                    return m
        return None

    def reduce_target(frags: tuple[Fragment, ...]) -> Mention | None:
        for m in unfinished:
            if _is_prefix(frags, m.fragments):
                return m
        return None

    def drain() -> None:
        while True:
            if stack:
                m = completable(stack[-1])
                if m is not None:
                    actions.append(complete(m.entity_type))
                    unfinished.remove(m)
                    stack.pop()
                    continue
            if len(stack) >= 2:
                s0, s1 = stack[-1], stack[-2]
                try:
                    combined = canonicalize(s1 + s0)
                except CorpusError:
                    break
                target = reduce_target(combined)
                if target is not None:
                    if required_elsewhere(s1, target):
                        actions.append(LEFT_REDUCE)
                        stack[-1:] = [combined]
                    elif required_elsewhere(s0, target):
                        actions.append(RIGHT_REDUCE)
                        stack[-2:] = [s0, combined]
                    else:
                        actions.append(REDUCE)
                        stack[-2:] = [combined]
                    continue
            break

    for pos in range(n):
        if pos in mention_tokens:
            actions.append(SHIFT)
            stack.append((Fragment(pos, pos + 1),))
            drain()
        else:
            actions.append(OUT)
    drain()
    return actions, unfinished, bool(stack)


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    step: int
    stack: tuple[str, ...]
    buffer: tuple[str, ...]
    valid: tuple[str, ...]
    chosen: str


@dataclass(frozen=True)
class TraceReport:
    steps: tuple[TraceStep, ...] = ()

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps({
            "step": s.step, "stack": list(s.stack), "buffer": list(s.buffer),
            "valid": list(s.valid), "chosen": s.chosen,
        }) for s in self.steps)

    def to_text(self) -> str:
        lines = []
        for s in self.steps:
            lines.append(f"{s.step:3d}  stack=[{', '.join(s.stack)}]  "
                         f"buffer=[{' '.join(s.buffer)}]  action={s.chosen}")
        return "\n".join(lines)


def trace(sentence: Sentence, actions: list[Action]) -> TraceReport:
    """Step-by-step record of a rollout: stack contents, buffer, valid set."""
    n = len(sentence.tokens)
    type_set = sorted({a.entity_type for a in actions if a.entity_type}
                      | {m.entity_type for m in sentence.mentions})
    state = initial_state(n)
    budget = max(len(actions) + 1, DEFAULT_BUDGET_MULTIPLIER * max(n, 1))
    steps = []
    for i, action in enumerate(actions):
        valid = valid_actions(state, n, type_set, budget)
        stack_strs = tuple(
            " ".join(sentence.tokens[t] for f in span.fragments for t in f.tokens())
            for span in state.stack)
        steps.append(TraceStep(
            step=i + 1,
            stack=stack_strs,
            buffer=tuple(sentence.tokens[state.buffer_pos:]),
            valid=tuple(sorted(str(a) for a in valid)),
            chosen=str(action),
        ))
        state = apply(state, action, n, type_set, budget)
    return TraceReport(tuple(steps))


def actions_to_line(actions: list[Action]) -> str:
    return " ".join(str(a) for a in actions)


def actions_from_line(line: str) -> list[Action]:
    return [Action.parse(tok) for tok in line.split()] if line.strip() else []
