"""Zero- and few-shot rating prompts rendered from :class:`RatingExample`."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..dataset import ItemMeta, RatingExample

SHOT_STRATEGIES = ("user_recent", "global_random")


def format_rating(rating: float) -> str:
    return str(int(rating)) if float(rating).is_integer() else f"{rating:g}"


@dataclass(frozen=True)
class PromptTemplate:
    item_noun: str = "movie"
    scale: str = "1 to 5"
    instruction: str = ("Here is the rating history of a user. Ratings are on a scale of {scale}, "
                        "where 1 is the lowest and 5 is the highest.")
    history_header: str = "User rating history (oldest first):"
    history_line: str = "- {title} ({attributes}): {rating}"
    history_line_plain: str = "- {title}: {rating}"
    empty_history: str = "- (no ratings yet)"
    question: str = 'How would this user rate the {item_noun} "{title}"{attributes} on a scale of {scale}?'
    suppression: tuple[str, ...] = ("Give a single number as rating without explanation.",
                                    "Do not give reasoning.")
    answer_prefix: str = "Rating:"
    shot_header: str = "Example {k}:"
    target_header: str = "Now predict for this user."

    def answer(self, rating: float) -> str:
        return f"{self.answer_prefix} {format_rating(rating)}"

    def _item_line(self, item: ItemMeta, rating: float) -> str:
        if item.attributes:
            return self.history_line.format(title=item.title, attributes=", ".join(item.attributes),
                                            rating=format_rating(rating))
        return self.history_line_plain.format(title=item.title, rating=format_rating(rating))

    def _block(self, example: RatingExample) -> list[str]:
        lines = [self.history_header]
        lines += [self._item_line(h.item, h.rating) for h in example.history] or [self.empty_history]
        attrs = f" ({', '.join(example.candidate.attributes)})" if example.candidate.attributes else ""
        lines.append(self.question.format(item_noun=self.item_noun, title=example.candidate.title,
                                          attributes=attrs, scale=self.scale))
        return lines


def build_prompt(example: RatingExample, shots: Sequence[RatingExample] = (),
                 template: PromptTemplate = PromptTemplate()) -> str:
    """Instruction, then each shot with its solved answer, then the target question."""
    parts = [template.instruction.format(scale=template.scale), ""]
    for k, shot in enumerate(shots, start=1):
        parts.append(template.shot_header.format(k=k))
        parts += template._block(shot)
        parts += [template.answer(shot.label), ""]
    if shots:
        parts.append(template.target_header)
    parts += template._block(example)
    parts.append(" ".join(template.suppression))
    parts.append(template.answer_prefix)
    return "\n".join(parts)


class ShotSelector:
    """Chooses labelled training examples to show before the target.

    ``user_recent`` takes the target user's most recent training examples that
    precede the target, falling back to a fixed seeded global sample for
    users without enough of them. ``global_random`` always uses that sample.
    The global sample is a fixed seeded ordering of ``train``, filtered to
    examples earlier than the target so no shot comes from its future.
    """

    def __init__(self, train: Sequence[RatingExample], k: int = 3,
                 strategy: str = "user_recent", seed: int = 0):
        if strategy not in SHOT_STRATEGIES:
            raise ValueError(f"unknown shot strategy {strategy!r}; expected one of {SHOT_STRATEGIES}")
        if k < 0:
            raise ValueError("k must be non-negative")
        self.k, self.strategy = k, strategy
        self._by_user: dict[str, list[RatingExample]] = defaultdict(list)
        for ex in train:
            self._by_user[ex.user_id].append(ex)
        self._global = [train[i] for i in np.random.default_rng(seed).permutation(len(train))]

    def __call__(self, example: RatingExample) -> list[RatingExample]:
        if self.k == 0:
            return []
        if self.strategy == "user_recent":
            own = [ex for ex in self._by_user.get(example.user_id, ()) if ex.order < example.order]
            if len(own) >= self.k:
                return own[-self.k:]
        picks = []
        for ex in self._global:
            if len(picks) == self.k:
                break
            if ex.order < example.order:
                picks.append(ex)
        return sorted(picks, key=lambda ex: ex.order)
