"""The six prompt templates and their rendering.

Template texts are fixed and pinned by golden-file tests; rendering
substitutes context values in a single pass so user-supplied text can
never be mistaken for a placeholder. The glance template's trailing
"{Yes/No}" is an output-format hint for the model and is kept verbatim.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Sequence

from .core import RoundRecord
from .errors import MissingPlaceholderError


class PromptKind(enum.Enum):
    GLANCE_DECISION = "glance_decision"
    KEY_INFO_INITIAL = "key_info_initial"
    KEY_INFO_UPDATE = "key_info_update"
    ANSWER = "answer"
    REASON = "reason"
    CONFIDENCE = "confidence"


_GLANCE_DECISION = (
    "You are given a single-choice question, options, subtitles, and some frames "
    "of the long video. You should not only look at the textual information but "
    "also consider the input visual information, taking everything into account. "
    "If you can answer the question accurately and comprehensively based on the "
    "existing information, especially the visual information, and further "
    "watching the entire video will not significantly improve the quality of the "
    "answer, then you don't need to watch the entire video and can answer 'No.'. "
    "However, if the existing information is not sufficient to fully answer the "
    "question, and watching the entire video may obtain information crucial for "
    "answering the question, please reply 'Yes'.\n"
    "The frame tokens: {Frame tokens}\n"
    "The question is:{Question}\n"
    "The options is:{Options}\n"
    "The subtitiles is:{Subtitiles}(If have)\n"
    "Output:{Yes/No}"
)

_KEY_INFO_INITIAL = (
    "Given some frames from a long video, subtitles, a single-choice question, "
    "and options, identify the key information needed to answer the question. "
    "Focus on visual cues, context, and temporal relationships within the "
    "frames. Limit your response to 50 words.\n"
    "The frame tokens: {Frame tokens}\n"
    "The question is:{Question}\n"
    "The options is:{Options}\n"
    "The subtitiles is:{Subtitiles}(If have)"
)

_ANSWER = (
    "Given some frames from a long video, subtitles, a single-choice question, "
    "and options, select the best answer to the following question based on the "
    "video and the subtitles. Respond with only the letter (A, B, C, or D) of "
    "the correct option.\n"
    "The frame tokens: {Frame tokens}\n"
    "The question is:{Question}\n"
    "The options is:{Options}\n"
    "The subtitiles is:{Subtitiles}(If have)\n"
    "The Key Info is:{Key Info}\n"
    "The best answer is:"
)

_REASON = (
    "You are given a single-choice question, options, some frames of the long "
    "video, the key information of the question and the choice you have made. "
    "You should not only look at the textual information but also consider the "
    "input visual information, taking everything into account. Base on the "
    "provided information, your task is to explain the reason behind your "
    "choice.\n"
    "The frame tokens: {Frame tokens}\n"
    "The question is: {Question}\n"
    "The options is:{Options}\n"
    "The Key Info is:{Key Info}\n"
    "Your choice is {Choice}"
)

_CONFIDENCE = (
    "You are given a single-choice question, options, some frames of the long "
    "video, your choice for the question and the reason. Your task is to "
    "evaluate whether the selected choice is correct. Criteria for Evaluation: "
    "Insufficient Information (Confidence Level: 1): There isn't enough clear "
    "information to be sure. Partial Information (Confidence Level: 2): The "
    "decision is likely correct, but there's some uncertainty. Sufficient "
    "Information (Confidence Level: 3): The decision is clearly supported by "
    "the given information. You need to provide the Confidence Level (a number "
    "of 1 or 2 or 3) according to the Criteria for Evaluation. Choose the "
    "confidence level that best reflects how clearly the input supports your "
    "choice. Respond with only the JSON format: {'confidence': 'x'}, where 'x' "
    "is Confidence Level, without any additional text, explanation, or "
    "formatting.\n"
    "The frame tokens: {Frame tokens}\n"
    "The question is: {Question}\n"
    "The options is:{Options}\n"
    "Your choice is {Choice}\n"
    "Your reason is {Reason}"
)

_HISTORY_BLOCK = (
    "Round 1 Key Info: {Key Info in Round 1}\n"
    "Round 1 Choice: {Choice in Round 1}\n"
    "Round 1 Reason: {Reason in Round 1}\n"
    "...\n"
    "Round i-1 Key Info: {Key Info in Round i-1}\n"
    "Round i-1 Choice: {Choice in Round i-1}\n"
    "Round i-1 Reason: {Reason in Round i-1}"
)

_KEY_INFO_UPDATE = (
    "Given some frames from a long video, subtitles, a single-choice question, "
    "and options, the old key information and the old choices and reasons, "
    "identify the key information needed to answer the question. Focus on "
    "visual cues, context, and temporal relationships within the frames. Limit "
    "your response to 50 words.\n"
    "The frame tokens: {Frame tokens}\n"
    "The question is: {Question}\n" + _HISTORY_BLOCK
)

TEMPLATES: dict[PromptKind, str] = {
    PromptKind.GLANCE_DECISION: _GLANCE_DECISION,
    PromptKind.KEY_INFO_INITIAL: _KEY_INFO_INITIAL,
    PromptKind.KEY_INFO_UPDATE: _KEY_INFO_UPDATE,
    PromptKind.ANSWER: _ANSWER,
    PromptKind.REASON: _REASON,
    PromptKind.CONFIDENCE: _CONFIDENCE,
}

# fields each template cannot render without
_REQUIRED: dict[PromptKind, tuple[str, ...]] = {
    PromptKind.GLANCE_DECISION: ("frame_note", "question", "options"),
    PromptKind.KEY_INFO_INITIAL: ("frame_note", "question", "options"),
    PromptKind.KEY_INFO_UPDATE: ("frame_note", "question", "history"),
    PromptKind.ANSWER: ("frame_note", "question", "options", "key_info"),
    PromptKind.REASON: ("frame_note", "question", "options", "key_info", "choice"),
    PromptKind.CONFIDENCE: ("frame_note", "question", "options", "choice", "reason"),
}

_PLACEHOLDER_RE = re.compile(
    r"\{(Frame tokens|Question|Options|Subtitiles|Key Info|Choice|Reason)\}"
)

_SUBTITLE_SLOT = "{Subtitiles}(If have)"
_DEFAULT_LETTER_RANGE = "(A, B, C, or D)"


@dataclass(frozen=True, slots=True)
class PromptContext:
    """Values available for substitution. Leave a field None when the
    template at hand does not use it."""

    frame_note: str | None = None
    question: str | None = None
    options: tuple[tuple[str, str], ...] | None = None
    subtitles: str | None = None
    key_info: str | None = None
    choice: str | None = None
    reason: str | None = None
    history: tuple[RoundRecord, ...] = ()


def template_text(kind: PromptKind) -> str:
    return TEMPLATES[kind]


def frame_token_note(indices: Sequence[int]) -> str:
    """Textual stand-in for the frame slots, one token per frame index
    in ascending order. Live providers attach the actual images in the
    same order."""
    return " ".join(f"<frame_{i:06d}>" for i in sorted(indices))


def letter_range_text(letters: Sequence[str]) -> str:
    if len(letters) == 2:
        return f"({letters[0]} or {letters[1]})"
    return "(" + ", ".join(letters[:-1]) + ", or " + letters[-1] + ")"


def _render_history(history: Sequence[RoundRecord]) -> str:
    lines: list[str] = []
    for rec in history:
        lines.append(f"Round {rec.round} Key Info: {rec.key_info}")
        lines.append(f"Round {rec.round} Choice: {rec.answer}")
        lines.append(f"Round {rec.round} Reason: {rec.reason}")
    return "\n".join(lines)


def render_prompt(kind: PromptKind, ctx: PromptContext) -> str:
    """Fill the template for ``kind`` from ``ctx``.

    Substitution is a single pass over the template text, so values
    containing brace tokens pass through untouched. The subtitles line
    disappears entirely when no subtitles are given; otherwise the
    "(If have)" marker is dropped.
    """
    for field in _REQUIRED[kind]:
        value = getattr(ctx, field)
        if value is None or (field == "history" and not value):
            raise MissingPlaceholderError(f"{kind.value} prompt needs {field}")

    text = TEMPLATES[kind]
    if _SUBTITLE_SLOT in text:
        if ctx.subtitles is None:
            text = "\n".join(
                line for line in text.split("\n") if _SUBTITLE_SLOT not in line
            )
        else:
            text = text.replace(_SUBTITLE_SLOT, "{Subtitiles}")
    if kind is PromptKind.ANSWER:
        assert ctx.options is not None
        letters = [letter for letter, _ in ctx.options]
        text = text.replace(_DEFAULT_LETTER_RANGE, letter_range_text(letters))

    values = {
        "Frame tokens": ctx.frame_note,
        "Question": ctx.question,
        "Options": (
            "\n".join(f"{letter}. {body}" for letter, body in ctx.options)
            if ctx.options is not None
            else None
        ),
        "Subtitiles": ctx.subtitles,
        "Key Info": ctx.key_info,
        "Choice": ctx.choice,
        "Reason": ctx.reason,
    }

    def fill(match: re.Match[str]) -> str:
        value = values[match.group(1)]
        if value is None:
            raise MissingPlaceholderError(
                f"{kind.value} prompt needs {match.group(1)!r}"
            )
        return value

    text = _PLACEHOLDER_RE.sub(fill, text)
    if kind is PromptKind.KEY_INFO_UPDATE:
        text = text.replace(_HISTORY_BLOCK, _render_history(ctx.history))
    return text
