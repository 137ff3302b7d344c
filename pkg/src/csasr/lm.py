"""Interpolated Kneser-Ney n-gram language model over hybrid tokens.

Tokens are Latin words (maximal [a-z']+ runs) and single CJK characters,
so one tokenizer serves both LM scoring and word counting. Probabilities
are stored base-10 to match the ARPA backoff-table format: the table keeps
the full interpolated probability of every observed n-gram plus a backoff
weight per observed context, which reproduces the interpolated model
exactly under standard ARPA lookup semantics.

Counting conventions: the top order uses raw counts; every lower order
uses continuation counts (number of distinct predecessor types), except
that grams starting with `<s>` keep raw counts since nothing can precede
them. `<s>` is context-only (placeholder -99 unigram), `</s>` is a
predicted event, and the leftover unigram discount mass goes to `<unk>`.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .vocab import is_cjk

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

KIND_LATIN_WORD = "latin_word"
KIND_CJK_CHAR = "cjk_char"
KIND_BOUNDARY = "boundary"

# gram -> (log10 probability, log10 backoff weight or None)
NGramTable = dict[tuple[str, ...], tuple[float, float | None]]


class MalformedArpa(ValueError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


@dataclass(frozen=True)
class Token:
    surface: str
    kind: str


_LATIN_RUN = re.compile(r"[a-z']+")


def tokenize_lm(text: str) -> list[Token]:
    """Split normalized text into Latin-word and CJK-char tokens."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == " ":
            i += 1
            continue
        if is_cjk(ch):
            tokens.append(Token(ch, KIND_CJK_CHAR))
            i += 1
            continue
        m = _LATIN_RUN.match(text, i)
        if not m:
            raise ValueError(f"unexpected character {ch!r} in normalized text")
        tokens.append(Token(m.group(0), KIND_LATIN_WORD))
        i = m.end()
    return tokens


def word_count(text: str) -> int:
    return len(tokenize_lm(text))


@dataclass
class NGramModel:
    """Immutable after construction; score concurrently at will."""

    order: int
    tables: dict[int, NGramTable]
    vocabulary: frozenset[str]
    discounts: dict[int, float] | None = None
    # orders whose count-of-counts gave no discount in (0,1); D=0.5 was used
    degenerate_orders: tuple[int, ...] = ()


@dataclass(frozen=True)
class LmState:
    """Rolling context (at most order-1 tokens) plus the score so far."""

    context: tuple[str, ...]
    log10_total: float = 0.0


def _surfaces(sentence: Sequence) -> list[str]:
    return [t.surface if isinstance(t, Token) else str(t) for t in sentence]


def train_kn(corpus: Iterable[Sequence], order: int = 5) -> NGramModel:
    """Interpolated Kneser-Ney with one discount per order.

    Discounts use the Ney/Essen/Kneser estimate D = n1/(n1+2*n2) over the
    count-of-counts of the counts actually used at that order; any order
    where that estimate is undefined or falls outside (0,1) falls back to
    D = 0.5 and is reported in degenerate_orders.
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    sentences = [_surfaces(s) for s in corpus]
    if not sentences:
        raise ValueError("empty corpus")

    raw: dict[int, Counter] = {k: Counter() for k in range(1, order + 1)}
    for sent in sentences:
        padded = ([BOS] if order > 1 else []) + sent + [EOS]
        for k in range(1, order + 1):
            for i in range(len(padded) - k + 1):
                raw[k][tuple(padded[i : i + k])] += 1

    adjusted: dict[int, dict[tuple[str, ...], int]] = {}
    for k in range(1, order + 1):
        if k == order:
            adj = {g: c for g, c in raw[k].items()}
        else:
            continuation = Counter()
            for gram in raw[k + 1]:
                continuation[gram[1:]] += 1
            adj = {}
            for gram, c in raw[k].items():
                adj[gram] = c if gram[0] == BOS else continuation[gram]
        adj.pop((BOS,), None)
        adjusted[k] = adj

    discounts: dict[int, float] = {}
    degenerate = []
    for k in range(1, order + 1):
        n1 = sum(1 for c in adjusted[k].values() if c == 1)
        n2 = sum(1 for c in adjusted[k].values() if c == 2)
        if n1 > 0 and n2 > 0:
            discounts[k] = n1 / (n1 + 2 * n2)
        else:
            # count-of-counts give no discount in (0,1) at this order
            discounts[k] = 0.5
            degenerate.append(k)

    # linear-domain interpolated probabilities, built bottom-up
    prob: dict[tuple[str, ...], float] = {}
    bows: dict[int, dict[tuple[str, ...], float]] = {}

    d1 = discounts[1]
    total1 = sum(adjusted[1].values())
    prob[(UNK,)] = d1 * len(adjusted[1]) / total1
    for gram, a in adjusted[1].items():
        prob[gram] = (a - d1) / total1

    for k in range(2, order + 1):
        dk = discounts[k]
        ctx_total: Counter = Counter()
        ctx_types: Counter = Counter()
        for gram, a in adjusted[k].items():
            ctx_total[gram[:-1]] += a
            ctx_types[gram[:-1]] += 1
        bows[k - 1] = {
            h: dk * ctx_types[h] / ctx_total[h] for h in ctx_total
        }
        for gram, a in adjusted[k].items():
            h = gram[:-1]
            prob[gram] = (a - dk) / ctx_total[h] + bows[k - 1][h] * prob[gram[1:]]

    tables: dict[int, NGramTable] = {k: {} for k in range(1, order + 1)}
    for k in range(1, order + 1):
        kbows = bows.get(k, {})
        for gram in adjusted[k]:
            tables[k][gram] = (math.log10(prob[gram]), _log10_bow(kbows.get(gram)))
    tables[1][(UNK,)] = (math.log10(prob[(UNK,)]), None)
    if order > 1:
        tables[1][(BOS,)] = (-99.0, _log10_bow(bows.get(1, {}).get((BOS,))))

    vocabulary = frozenset(g[0] for g in tables[1])
    return NGramModel(order, tables, vocabulary, discounts, tuple(degenerate))


def _log10_bow(b: float | None) -> float | None:
    return None if b is None else math.log10(b)


def _cond_log10(model: NGramModel, context: tuple[str, ...], w: str) -> float:
    entry = model.tables[len(context) + 1].get(context + (w,))
    if entry is not None:
        return entry[0]
    if not context:
        return model.tables[1][(UNK,)][0]
    bow_entry = model.tables[len(context)].get(context)
    bow = bow_entry[1] if bow_entry is not None and bow_entry[1] is not None else 0.0
    return bow + _cond_log10(model, context[1:], w)


def initial_state(model: NGramModel) -> LmState:
    return LmState((BOS,) if model.order > 1 else ())


def score(model: NGramModel, state: LmState, token) -> tuple[float, LmState]:
    """Log10 probability of the next token plus the advanced state."""
    w = token.surface if isinstance(token, Token) else str(token)
    if w not in model.vocabulary:
        w = UNK
    context = state.context[-(model.order - 1) :] if model.order > 1 else ()
    lp = _cond_log10(model, context, w)
    new_context = (context + (w,))[-(model.order - 1) :] if model.order > 1 else ()
    return lp, LmState(new_context, state.log10_total + lp)


def sentence_log10(model: NGramModel, sentence: Sequence) -> float:
    """Sum of token scores given left context, including the end event."""
    state = initial_state(model)
    for token in list(sentence) + [EOS]:
        _, state = score(model, state, token)
    return state.log10_total


def perplexity(model: NGramModel, corpus: Iterable[Sequence]) -> float:
    """10^(-mean log10 prob); `</s>` counts as an event, `<s>` does not."""
    total = 0.0
    n_events = 0
    for sentence in corpus:
        total += sentence_log10(model, sentence)
        n_events += len(sentence) + 1
    if n_events == 0:
        raise ValueError("empty corpus")
    return 10.0 ** (-total / n_events)


def write_arpa(model: NGramModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\\data\\\n")
        for k in range(1, model.order + 1):
            f.write(f"ngram {k}={len(model.tables[k])}\n")
        for k in range(1, model.order + 1):
            f.write(f"\n\\{k}-grams:\n")
            for gram in sorted(model.tables[k]):
                logp, bow = model.tables[k][gram]
                line = f"{logp:.7f}\t{' '.join(gram)}"
                if bow is not None:
                    line += f"\t{bow:.7f}"
                f.write(line + "\n")
        f.write("\n\\end\\\n")


def read_arpa(path) -> NGramModel:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()

    def fail(i: int, reason: str):
        raise MalformedArpa(i + 1, reason)

    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        if lines[i].strip():
            fail(i, f"expected \\data\\, got {lines[i]!r}")
        i += 1
    if i == len(lines):
        fail(len(lines) - 1, "missing \\data\\ section")
    i += 1

    declared: dict[int, int] = {}
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("\\"):
            break
        m = re.match(r"^ngram (\d+)=(\d+)$", line)
        if not m:
            fail(i, f"bad count line {line!r}")
        declared[int(m.group(1))] = int(m.group(2))
        i += 1
    if not declared or sorted(declared) != list(range(1, max(declared) + 1)):
        fail(i if i < len(lines) else len(lines) - 1, "incomplete ngram count header")
    order = max(declared)

    tables: dict[int, NGramTable] = {k: {} for k in range(1, order + 1)}
    seen_end = False
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line == "\\end\\":
            seen_end = True
            i += 1
            continue
        m = re.match(r"^\\(\d+)-grams:$", line)
        if not m:
            fail(i, f"unexpected line {line!r}")
        k = int(m.group(1))
        if k not in tables:
            fail(i, f"section order {k} not declared")
        i += 1
        while i < len(lines) and lines[i].strip() and not lines[i].startswith("\\"):
            fields = lines[i].split()
            if len(fields) not in (k + 1, k + 2):
                fail(i, f"expected {k + 1} or {k + 2} fields, got {len(fields)}")
            try:
                logp = float(fields[0])
                bow = float(fields[k + 1]) if len(fields) == k + 2 else None
            except ValueError:
                fail(i, "non-numeric probability field")
            tables[k][tuple(fields[1 : k + 1])] = (logp, bow)
            i += 1
    if not seen_end:
        raise MalformedArpa(len(lines), "missing \\end\\ marker")
    for k, n in declared.items():
        if len(tables[k]) != n:
            raise MalformedArpa(
                len(lines), f"declared {n} {k}-grams, found {len(tables[k])}"
            )
    vocabulary = frozenset(g[0] for g in tables[1])
    return NGramModel(order, tables, vocabulary)
