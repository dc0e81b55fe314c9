"""Trainable transition scorer.

Token representations concatenate a word embedding with a char-CNN vector,
run through a BiLSTM, and optionally gain a precomputed external contextual
vector per token. Stack spans are encoded with a Stack-LSTM (push advances
one step, pop restores the previous state exactly); reduces go through a
shared affine composition; each of the top three spans can attend over the
remaining buffer with multiplicative attention; the action history feeds a
unidirectional LSTM. The concatenated parser features drive a softmax over
the valid actions only.

Everything is float64 and deterministic given the seed; training is plain
per-sentence SGD with teacher forcing on oracle action sequences.
"""

from __future__ import annotations

import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .corpus import Corpus, CorpusError, Mention, Sentence
from .transitions import (Action, ActionKind, LEFT_REDUCE, OUT, REDUCE,
                          RIGHT_REDUCE, SHIFT, complete, initial_state,
                          is_terminal, apply as apply_action, oracle,
                          valid_actions)

UNK = "<unk>"


@dataclass(frozen=True)
class ScorerConfig:
    word_dim: int = 16
    char_dim: int = 8
    char_cnn_window: int = 3
    char_filters: int = 8
    hidden_dim: int = 16
    stack_dim: int = 16
    action_dim: int = 12
    attention: bool = True
    external_vec_dim: int = 0
    learning_rate: float = 0.1
    epochs: int = 30
    seed: int = 0
    budget_multiplier: int = 8

    def __post_init__(self):
        for name in ("word_dim", "char_dim", "char_cnn_window", "char_filters",
                     "hidden_dim", "stack_dim", "action_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.char_cnn_window % 2 == 0:
            raise ValueError("char_cnn_window must be odd")

    @property
    def rep_dim(self) -> int:
        return 2 * self.hidden_dim + self.external_vec_dim

    @property
    def feature_dim(self) -> int:
        return 3 * self.stack_dim + 3 * self.rep_dim + self.action_dim


@dataclass(frozen=True)
class Vocab:
    words: tuple[str, ...]
    chars: tuple[str, ...]
    types: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_word_idx", {w: i for i, w in enumerate(self.words)})
        object.__setattr__(self, "_char_idx", {c: i for i, c in enumerate(self.chars)})

    @staticmethod
    def build(corpus: Corpus) -> "Vocab":
        words = {UNK}
        chars = {UNK}
        types = set()
        for sent in corpus:
            for tok in sent.tokens:
                words.add(tok)
                chars.update(tok)
            for m in sent.mentions:
                types.add(m.entity_type)
        if not types:
            types = {"ENT"}
        return Vocab(tuple(sorted(words)), tuple(sorted(chars)), tuple(sorted(types)))

    def word_index(self, word: str) -> int:
        return self._word_idx.get(word, self._word_idx[UNK])

    def char_indices(self, word: str) -> list[int]:
        unk = self._char_idx[UNK]
        return [self._char_idx.get(c, unk) for c in word]

    def action_list(self) -> list[Action]:
        return [SHIFT, OUT, REDUCE, LEFT_REDUCE, RIGHT_REDUCE] + \
            [complete(t) for t in self.types]


class ScorerParams:
    """All learnable tensors, keyed by name; leaves of every tape."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        self.t: dict[str, Tensor] = {name: ad.leaf(arr) for name, arr in tensors.items()}

    def names(self) -> list[str]:
        return list(self.t)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.t.items()}

    def gradients(self) -> dict[str, np.ndarray | None]:
        return {name: t.grad for name, t in self.t.items()}

    def zero_grad(self) -> None:
        for t in self.t.values():
            t.grad = None

    def copy(self) -> "ScorerParams":
        return ScorerParams({name: t.data.copy() for name, t in self.t.items()})


def _shapes(config: ScorerConfig, vocab: Vocab) -> dict[str, tuple[int, ...]]:
    in_dim = config.word_dim + config.char_filters
    H, S, A = config.hidden_dim, config.stack_dim, config.action_dim
    n_actions = len(vocab.action_list())
    return {
        "word_emb": (len(vocab.words), config.word_dim),
        "char_emb": (len(vocab.chars), config.char_dim),
        "char_w": (config.char_filters, config.char_cnn_window * config.char_dim),
        "char_b": (config.char_filters,),
        "lstm_fw_W": (4 * H, in_dim + H),
        "lstm_fw_b": (4 * H,),
        "lstm_bw_W": (4 * H, in_dim + H),
        "lstm_bw_b": (4 * H,),
        "proj_W": (S, config.rep_dim),
        "proj_b": (S,),
        "stack_W": (4 * S, 2 * S),
        "stack_b": (4 * S,),
        "comp_W": (S, 2 * S),
        "comp_b": (S,),
        "attn_W0": (S, config.rep_dim),
        "attn_W1": (S, config.rep_dim),
        "attn_W2": (S, config.rep_dim),
        "act_emb": (n_actions, A),
        "act_W": (4 * A, 2 * A),
        "act_b": (4 * A,),
        "out_W": (n_actions, config.feature_dim),
        "out_b": (n_actions,),
        "s_empty": (S,),
        "a_empty": (A,),
    }


def init_params(config: ScorerConfig, vocab: Vocab, seed: int | None = None) -> ScorerParams:
    """Uniform init in [-r, r] with r = sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    tensors = {}
    for name, shape in _shapes(config, vocab).items():
        if len(shape) == 2:
            fan = shape[0] + shape[1]
        else:
            fan = 2 * shape[0]
        r = np.sqrt(6.0 / fan)
        tensors[name] = rng.uniform(-r, r, size=shape)
    return ScorerParams(tensors)


# ---------------------------------------------------------------------------
# Token representations
# ---------------------------------------------------------------------------

def token_reps(sentence: Sentence, external_vecs: np.ndarray | None,
               params: ScorerParams, vocab: Vocab, config: ScorerConfig,
               tape: Tape) -> tuple[list[Tensor], Tensor | None]:
    """Per-token contextual vectors c_i and their stacked (N, rep_dim) matrix.

    Word embedding + char-CNN vector per token, BiLSTM over the sequence,
    then the optional external contextual vector is concatenated. Unknown
    words map to the UNK embedding.
    """
    p = params.t
    n = len(sentence.tokens)
    if config.external_vec_dim:
        if external_vecs is None or external_vecs.shape != (n, config.external_vec_dim):
            raise ValueError(f"external vectors must have shape ({n}, {config.external_vec_dim})")
    if n == 0:
        return [], None

    t_vecs = []
    for tok in sentence.tokens:
        wvec = ad.row(tape, p["word_emb"], vocab.word_index(tok))
        cemb = ad.rows_lookup(tape, p["char_emb"], vocab.char_indices(tok))
        cvec = ad.char_cnn(tape, p["char_w"], p["char_b"], cemb)
        t_vecs.append(ad.concat(tape, [wvec, cvec]))

    H = config.hidden_dim
    zero_h = ad.leaf(np.zeros(H))
    fwd = []
    h, c = zero_h, zero_h
    for t in t_vecs:
        h, c = ad.lstm_cell(tape, p["lstm_fw_W"], p["lstm_fw_b"], t, h, c)
        fwd.append(h)
    bwd = [None] * n
    h, c = zero_h, zero_h
    for i in range(n - 1, -1, -1):
        h, c = ad.lstm_cell(tape, p["lstm_bw_W"], p["lstm_bw_b"], t_vecs[i], h, c)
        bwd[i] = h

    c_vecs = []
    for i in range(n):
        parts = [fwd[i], bwd[i]]
        if config.external_vec_dim:
            parts.append(ad.leaf(external_vecs[i]))
        c_vecs.append(ad.concat(tape, parts))
    return c_vecs, ad.stack_rows(tape, c_vecs)


# ---------------------------------------------------------------------------
# Stack-LSTM
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StackEntry:
    """One pushed span: its input vector and the LSTM state after pushing."""
    vec: Tensor
    h: Tensor
    c: Tensor


def stack_push(tape: Tape, params: ScorerParams, config: ScorerConfig,
               stack: tuple[StackEntry, ...], vec: Tensor) -> tuple[StackEntry, ...]:
    """Advance the Stack-LSTM one step; the previous state is kept intact."""
    p = params.t
    if stack:
        h_prev, c_prev = stack[-1].h, stack[-1].c
    else:
        zero = ad.leaf(np.zeros(config.stack_dim))
        h_prev, c_prev = zero, zero
    h, c = ad.lstm_cell(tape, p["stack_W"], p["stack_b"], vec, h_prev, c_prev)
    return stack + (StackEntry(vec, h, c),)


def stack_pop(stack: tuple[StackEntry, ...]) -> tuple[StackEntry, ...]:
    """Exact restore of the pre-push state (bitwise: prior entries are shared)."""
    if not stack:
        raise ValueError("pop on empty stack")
    return stack[:-1]


def compose(tape: Tape, params: ScorerParams, s0: Tensor, s1: Tensor) -> Tensor:
    """Affine composition of the top two span representations."""
    return ad.affine(tape, params.t["comp_W"], ad.concat(tape, [s0, s1]),
                     params.t["comp_b"])


def attend(tape: Tape, s_vec: Tensor, buffer_matrix: Tensor | None,
           W_a: Tensor) -> Tensor:
    """Weighted sum of buffer rows; the zero vector on an empty buffer."""
    if buffer_matrix is None or buffer_matrix.data.shape[0] == 0:
        return ad.leaf(np.zeros(W_a.data.shape[1]))
    return ad.attend(tape, s_vec, W_a, buffer_matrix)


# ---------------------------------------------------------------------------
# Parser state features
# ---------------------------------------------------------------------------

@dataclass
class _NeuralState:
    """Differentiable companion of a symbolic ParserState rollout."""
    stack: tuple[StackEntry, ...] = ()
    act_h: Tensor | None = None
    act_c: Tensor | None = None


def encode_parser_state(tape: Tape, params: ScorerParams, config: ScorerConfig,
                        neural: _NeuralState, buffer_matrix: Tensor | None) -> Tensor:
    """[s0, s1, s2, s^a_0, s^a_1, s^a_2, a] with empties substituted.

    Missing spans are replaced by s_empty everywhere, including as the
    attention query. Attention terms are zero vectors on an empty buffer or
    when the attention path is disabled (ablation).
    """
    p = params.t
    parts: list[Tensor] = []
    spans: list[Tensor] = []
    for i in range(3):
        spans.append(neural.stack[-1 - i].h if len(neural.stack) > i
                     else p["s_empty"])
    parts.extend(spans)
    for i, s in enumerate(spans):
        if not config.attention:
            parts.append(ad.leaf(np.zeros(config.rep_dim)))
        else:
            parts.append(attend(tape, s, buffer_matrix, p[f"attn_W{i}"]))
    parts.append(neural.act_h if neural.act_h is not None else p["a_empty"])
    return ad.concat(tape, parts)


def action_distribution(feature_logits: np.ndarray, valid_idx: list[int]) -> np.ndarray:
    """Probabilities over the full action inventory, invalid entries exactly 0."""
    return ad.masked_softmax(feature_logits, valid_idx)


def _advance_neural(tape: Tape, params: ScorerParams, config: ScorerConfig,
                    neural: _NeuralState, action: Action, action_idx: int,
                    buffer_pos: int, c_vecs: list[Tensor]) -> _NeuralState:
    """Mirror one symbolic action on the differentiable stack and history."""
    p = params.t
    stack = neural.stack
    kind = action.kind
    if kind is ActionKind.SHIFT:
        vec = ad.affine(tape, p["proj_W"], c_vecs[buffer_pos], p["proj_b"])
        stack = stack_push(tape, params, config, stack, vec)
    elif kind is ActionKind.OUT:
        pass
    elif kind is ActionKind.COMPLETE:
        stack = stack_pop(stack)
    else:
        e0, e1 = stack[-1], stack[-2]
        new_vec = compose(tape, params, e0.h, e1.h)
        stack = stack_pop(stack_pop(stack))
        if kind is ActionKind.LEFT_REDUCE:
            stack = stack + (e1,)
        elif kind is ActionKind.RIGHT_REDUCE:
            stack = stack_push(tape, params, config, stack, e0.vec)
        stack = stack_push(tape, params, config, stack, new_vec)

    A = config.action_dim
    if neural.act_h is None:
        zero = ad.leaf(np.zeros(A))
        h_prev, c_prev = zero, zero
    else:
        h_prev, c_prev = neural.act_h, neural.act_c
    emb = ad.row(tape, p["act_emb"], action_idx)
    act_h, act_c = ad.lstm_cell(tape, p["act_W"], p["act_b"], emb, h_prev, c_prev)
    return _NeuralState(stack, act_h, act_c)


# ---------------------------------------------------------------------------
# Rollouts: teacher-forced loss and greedy prediction
# ---------------------------------------------------------------------------

def _rollout(sentence: Sentence, params: ScorerParams, vocab: Vocab,
             config: ScorerConfig, tape: Tape,
             gold_actions: list[Action] | None = None,
             external_vecs: np.ndarray | None = None):
    """Run the parser; teacher-forced when gold_actions is given, else greedy.

    Returns (loss Tensor, final symbolic state).
    """
    p = params.t
    n = len(sentence.tokens)
    actions = vocab.action_list()
    action_idx = {a: i for i, a in enumerate(actions)}
    budget = config.budget_multiplier * max(n, 1)
    c_vecs, c_matrix = token_reps(sentence, external_vecs, params, vocab, config, tape)

    state = initial_state(n)
    neural = _NeuralState()
    losses: list[Tensor] = []
    step = 0
    hard_cap = budget + 3 * n + 8
    while not is_terminal(state, n):
        valid = valid_actions(state, n, vocab.types, budget)
        valid_idx = sorted(action_idx[a] for a in valid)
        buffer_matrix = (ad.rows_slice(tape, c_matrix, state.buffer_pos, n)
                         if c_matrix is not None and state.buffer_pos < n else None)
        feat = encode_parser_state(tape, params, config, neural, buffer_matrix)
        logits = ad.affine(tape, p["out_W"], feat, p["out_b"])
        if gold_actions is not None:
            if step >= len(gold_actions):
                raise CorpusError("gold action sequence ends before the terminal state")
            chosen = gold_actions[step]
            if chosen not in valid:
                raise CorpusError(f"gold action {chosen} invalid at step {step}")
            gold_pos = valid_idx.index(action_idx[chosen])
            losses.append(ad.masked_nll(tape, logits, valid_idx, gold_pos))
        else:
            masked = np.full(len(actions), -np.inf)
            masked[valid_idx] = logits.data[valid_idx]
            chosen = actions[int(np.argmax(masked))]
        neural = _advance_neural(tape, params, config, neural, chosen,
                                 action_idx[chosen], state.buffer_pos, c_vecs)
        state = apply_action(state, chosen, n, vocab.types, budget)
        step += 1
        if step > hard_cap:
            raise RuntimeError(f"rollout exceeded {hard_cap} steps")
    loss = ad.add_n(tape, losses) if losses else tape._node(np.asarray(0.0), None)
    return loss, state


def sentence_loss(sentence: Sentence, gold_actions: list[Action],
                  params: ScorerParams, vocab: Vocab, config: ScorerConfig,
                  external_vecs: np.ndarray | None = None) -> tuple[Tensor, Tape]:
    """Sum of per-step NLL of gold actions under the valid-masked softmax."""
    tape = Tape()
    loss, _ = _rollout(sentence, params, vocab, config, tape,
                       gold_actions=gold_actions, external_vecs=external_vecs)
    return loss, tape


def predict(sentence: Sentence, params: ScorerParams, vocab: Vocab,
            config: ScorerConfig,
            external_vecs: np.ndarray | None = None) -> frozenset[Mention]:
    """Greedy argmax rollout, decoded into the output mention set."""
    tape = Tape()
    _, state = _rollout(sentence, params, vocab, config, tape,
                        external_vecs=external_vecs)
    return frozenset(state.outputs)


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------

def backward(tape: Tape, loss: Tensor) -> None:
    ad.backward(tape, loss)


def sgd_step(params: ScorerParams, learning_rate: float) -> None:
    """params -= lr * grad; grads cleared. Aborts on non-finite gradients."""
    for name, t in params.t.items():
        if t.grad is None:
            continue
        if not np.all(np.isfinite(t.grad)):
            raise FloatingPointError(f"non-finite gradient in {name}")
        t.data -= learning_rate * t.grad
        t.grad = None


def train(corpus: Corpus, config: ScorerConfig,
          vocab: Vocab | None = None,
          external_map: dict[int, np.ndarray] | None = None,
          dev_hook=None) -> tuple[ScorerParams, Vocab, dict]:
    """Teacher-forced SGD over oracle action sequences.

    Sentences with nested gold mentions are skipped; gold mentions the
    oracle cannot derive are dropped (both counted in the returned info
    dict). `dev_hook(epoch, params)` runs after every epoch when given.
    Deterministic given config.seed.
    """
    if len(corpus) == 0:
        raise CorpusError("cannot train on an empty corpus")
    if vocab is None:
        vocab = Vocab.build(corpus)
    params = init_params(config, vocab)
    prepared = []
    skipped_nested = 0
    uncovered_total = 0
    for i, sent in enumerate(corpus):
        try:
            actions, uncovered = oracle(sent)
        except CorpusError:
            skipped_nested += 1
            continue
        uncovered_total += len(uncovered)
        ext = external_map.get(i) if external_map else None
        prepared.append((sent, actions, ext))

    rng = np.random.default_rng(config.seed)
    losses_per_epoch = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(prepared))
        total = 0.0
        for j in order:
            sent, actions, ext = prepared[j]
            loss, tape = sentence_loss(sent, actions, params, vocab, config,
                                       external_vecs=ext)
            backward(tape, loss)
            sgd_step(params, config.learning_rate)
            total += float(loss.data)
        losses_per_epoch.append(total / max(len(prepared), 1))
        if dev_hook is not None:
            dev_hook(epoch, params)
    info = {"skipped_nested": skipped_nested, "uncovered_dropped": uncovered_total,
            "epoch_losses": losses_per_epoch}
    return params, vocab, info


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def finite_diff_check(params: ScorerParams, sentence: Sentence, vocab: Vocab,
                      config: ScorerConfig, epsilon: float = 1e-5,
                      n_coords: int = 200, seed: int = 0,
                      external_vecs: np.ndarray | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples n_coords coordinates with at least one from every parameter
    group. Zero-length sentences return 0 by convention.
    """
    if len(sentence.tokens) == 0:
        return 0.0
    gold_actions, _ = oracle(sentence)

    def loss_value() -> float:
        loss, _ = sentence_loss(sentence, gold_actions, params, vocab, config,
                                external_vecs=external_vecs)
        return float(loss.data)

    params.zero_grad()
    loss, tape = sentence_loss(sentence, gold_actions, params, vocab, config,
                               external_vecs=external_vecs)
    backward(tape, loss)
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
                for name, t in params.t.items()}
    params.zero_grad()

    rng = np.random.default_rng(seed)
    coords: list[tuple[str, tuple[int, ...]]] = []
    names = params.names()
    for name in names:  # one coordinate from every group
        shape = params.t[name].data.shape
        coords.append((name, tuple(int(rng.integers(s)) for s in shape)))
    while len(coords) < n_coords:
        name = names[int(rng.integers(len(names)))]
        shape = params.t[name].data.shape
        coords.append((name, tuple(int(rng.integers(s)) for s in shape)))

    max_err = 0.0
    for name, idx in coords:
        arr = params.t[name].data
        orig = arr[idx]
        arr[idx] = orig + epsilon
        up = loss_value()
        arr[idx] = orig - epsilon
        down = loss_value()
        arr[idx] = orig
        fd = (up - down) / (2 * epsilon)
        an = analytic[name][idx]
        err = abs(fd - an) / max(abs(fd), abs(an), 1e-4)
        max_err = max(max_err, err)
    return max_err


# ---------------------------------------------------------------------------
# Checkpoints and external vectors
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"DNER"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str, params: ScorerParams, config: ScorerConfig,
                    vocab: Vocab) -> None:
    """Versioned binary container: magic, version, metadata, named tensors."""
    meta = {"config": asdict(config),
            "words": list(vocab.words), "chars": list(vocab.chars),
            "types": list(vocab.types)}
    import json
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        tensors = params.arrays()
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = tensors[name]
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path: str) -> tuple[ScorerParams, ScorerConfig, Vocab]:
    import json
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CorpusError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise CorpusError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            tensors[name] = data.astype(np.float64)
    config = ScorerConfig(**meta["config"])
    vocab = Vocab(tuple(meta["words"]), tuple(meta["chars"]), tuple(meta["types"]))
    return ScorerParams(tensors), config, vocab


def load_external_vectors(text: str) -> list[np.ndarray]:
    """Per-sentence matrices: one line of floats per token, blank line between
    sentences, aligned with the inline corpus file."""
    matrices = []
    block: list[list[float]] = []
    for line in text.split("\n"):
        if line.strip() == "":
            if block:
                matrices.append(np.asarray(block, dtype=np.float64))
                block = []
        else:
            block.append([float(x) for x in line.split()])
    if block:
        matrices.append(np.asarray(block, dtype=np.float64))
    return matrices
