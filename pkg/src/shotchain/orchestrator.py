"""The question-answering loop: glance, refine shot by shot, conclude.

One question runs as: glance at a few uniform frames and ask whether
global sampling suffices. If yes, answer once from uniformly sampled
frames (path "global"). Otherwise iterate: summarize what to look for,
retrieve the most relevant shots, split them into subshots, pull new
evidence frames, answer, self-grade confidence. A confident round ends
the loop (path "chain"); running out of rounds falls back to a majority
vote over the per-round answers (path "vote").

Every model exchange, shot-set change, and evidence-set change is
appended to an event list that the harness persists as the trace.
"""

from __future__ import annotations

import itertools
import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .core import (
    FeatureMatrix,
    FrameSet,
    QaItem,
    RoundRecord,
    Shot,
    ShotSet,
    Verdict,
)
from .errors import DimMismatchError, InvalidInputError, ShotChainError
from .frames import VideoSource, load_frame_images, merge_with_diversity, sample_uniform
from .partition import partition_shot, update_shot_set
from .prompts import PromptContext, PromptKind, frame_token_note, render_prompt
from .providers import (
    ChatRequest,
    GlanceDecision,
    Providers,
    parse_answer_letter,
    parse_confidence,
    parse_glance_decision,
)
from .retrieval import (
    aggregate_shot_embedding,
    cosine_similarity,
    rank_shots,
    select_candidates,
    select_initial_subshot,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class AgentConfig:
    """Loop hyperparameters. Defaults follow the evaluated setup:
    glance at 4 frames, 32 for a global answer, 16 initial evidence
    frames from the top subshot of a 6-way first split, then per round
    top-2 shots split 2-ways with 8 frames from each subshot, stopping
    at confidence 3 or after 3 rounds."""

    glance_frames: int = 4
    global_frames: int = 32
    init_top: int = 1
    init_frames: int = 16
    round_top_n: int = 2
    round_subshots: int = 2
    frames_per_subshot: int = 8
    k_round1: int = 6
    k_later: int = 2
    sim_threshold: float = 0.8
    confident_level: int = 3
    max_rounds: int = 3
    retrieval_frames_per_shot: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        counts = (
            self.glance_frames,
            self.global_frames,
            self.init_top,
            self.init_frames,
            self.round_top_n,
            self.round_subshots,
            self.frames_per_subshot,
            self.k_round1,
            self.k_later,
            self.max_rounds,
            self.retrieval_frames_per_shot,
        )
        if any(c < 1 for c in counts):
            raise InvalidInputError("all frame/shot/round counts must be >= 1")
        if not -1.0 <= self.sim_threshold <= 1.0:
            raise InvalidInputError(
                f"sim_threshold must be in [-1, 1], got {self.sim_threshold}"
            )
        if self.confident_level not in (2, 3):
            raise InvalidInputError(
                f"confident_level must be 2 or 3, got {self.confident_level}"
            )


@dataclass(frozen=True, slots=True)
class AgentState:
    """Everything carried between rounds."""

    shot_set: ShotSet
    frame_set: FrameSet
    history: tuple[RoundRecord, ...]
    round: int


@dataclass(frozen=True, slots=True)
class GlanceOutcome:
    decision: GlanceDecision
    answer: str | None
    glance_indices: tuple[int, ...]
    answer_indices: tuple[int, ...] = ()


@dataclass
class QuestionRun:
    """Result of one question: the verdict (or an error) plus the full
    event trace."""

    qa_id: str
    video_id: str
    verdict: Verdict | None
    events: list[dict]
    error: str | None
    elapsed_s: float


@dataclass
class _QuestionCtx:
    """Per-question plumbing threaded through the loop steps."""

    qa: QaItem
    video: VideoSource
    features: FeatureMatrix
    cfg: AgentConfig
    providers: Providers
    events: list[dict] = field(default_factory=list)
    ids: Iterator[int] = field(default_factory=lambda: itertools.count(1))
    glance_indices: tuple[int, ...] = ()


def _whole_video_shot(ctx: _QuestionCtx) -> Shot:
    return Shot(id=0, start=0, end=ctx.video.duration - 1)


def _ask(
    ctx: _QuestionCtx, kind: PromptKind, round_no: int, indices: Sequence[int], prompt: str
) -> str:
    indices = tuple(sorted(set(int(i) for i in indices)))
    images: tuple = ()
    if ctx.providers.chat.wants_images and ctx.video.frame_dir is not None:
        images = tuple(load_frame_images(ctx.video, indices))
    request = ChatRequest(prompt_text=prompt, frame_indices=indices, images=images)
    response = ctx.providers.chat.chat(kind, round_no, request)
    ctx.events.append(
        {
            "type": "prompt",
            "kind": kind.value,
            "round": round_no,
            "frames": list(indices),
            "prompt": prompt,
            "response": response,
        }
    )
    return response


def _ask_parsed(ctx, kind, round_no, indices, prompt, parse):
    """One model call plus a single re-ask when the reply won't parse."""
    response = _ask(ctx, kind, round_no, indices, prompt)
    try:
        return parse(response)
    except ShotChainError as exc:
        ctx.events.append(
            {
                "type": "reask",
                "kind": kind.value,
                "round": round_no,
                "cause": str(exc),
            }
        )
        response = _ask(ctx, kind, round_no, indices, prompt)
        return parse(response)


def _answer_prompt(ctx: _QuestionCtx, indices: Sequence[int], key_info: str) -> str:
    return render_prompt(
        PromptKind.ANSWER,
        PromptContext(
            frame_note=frame_token_note(indices),
            question=ctx.qa.question,
            options=ctx.qa.options,
            subtitles=ctx.qa.subtitles,
            key_info=key_info,
        ),
    )


def glance(ctx: _QuestionCtx) -> GlanceOutcome:
    """Decide between one global answer and the iterative path.

    A "Yes" reply answers immediately from ``global_frames`` uniform
    frames; "No" hands control to the round loop. The glance frames are
    remembered as the round-1 key-info input either way.
    """
    whole = _whole_video_shot(ctx)
    g_idx = tuple(sample_uniform(whole, ctx.cfg.glance_frames))
    ctx.glance_indices = g_idx
    prompt = render_prompt(
        PromptKind.GLANCE_DECISION,
        PromptContext(
            frame_note=frame_token_note(g_idx),
            question=ctx.qa.question,
            options=ctx.qa.options,
            subtitles=ctx.qa.subtitles,
        ),
    )
    decision = parse_glance_decision(
        _ask(ctx, PromptKind.GLANCE_DECISION, 0, g_idx, prompt)
    )
    if decision is GlanceDecision.LOCAL:
        return GlanceOutcome(decision=decision, answer=None, glance_indices=g_idx)
    a_idx = tuple(sample_uniform(whole, ctx.cfg.global_frames))
    letter = _ask_parsed(
        ctx,
        PromptKind.ANSWER,
        0,
        a_idx,
        _answer_prompt(ctx, a_idx, key_info=""),
        lambda text: parse_answer_letter(text, ctx.qa.letters),
    )
    return GlanceOutcome(
        decision=decision, answer=letter, glance_indices=g_idx, answer_indices=a_idx
    )


def summarize_key_info(ctx: _QuestionCtx, state: AgentState, round_no: int) -> str:
    """Model text describing what must be found to answer the question.

    Round 1 looks at the glance frames; later rounds look at the
    current evidence frames plus every earlier round's summary, choice,
    and reason.
    """
    if round_no == 1:
        indices: Sequence[int] = ctx.glance_indices
        prompt = render_prompt(
            PromptKind.KEY_INFO_INITIAL,
            PromptContext(
                frame_note=frame_token_note(indices),
                question=ctx.qa.question,
                options=ctx.qa.options,
                subtitles=ctx.qa.subtitles,
            ),
        )
        kind = PromptKind.KEY_INFO_INITIAL
    else:
        indices = state.frame_set.indices
        prompt = render_prompt(
            PromptKind.KEY_INFO_UPDATE,
            PromptContext(
                frame_note=frame_token_note(indices),
                question=ctx.qa.question,
                history=state.history,
            ),
        )
        kind = PromptKind.KEY_INFO_UPDATE
    return _ask(ctx, kind, round_no, indices, prompt)


def _query_embedding(ctx: _QuestionCtx, key_info: str) -> np.ndarray:
    query = np.asarray(ctx.providers.embedder.embed_text(key_info), dtype=np.float64)
    if query.ndim != 1 or query.size != ctx.features.dim:
        raise DimMismatchError(
            f"text embedding has {query.size} dims, features have {ctx.features.dim}"
        )
    return query


def _top_subshots(
    ctx: _QuestionCtx, query: np.ndarray, subshots: Sequence[Shot], top: int
) -> list[Shot]:
    scored = sorted(
        (
            (
                -cosine_similarity(
                    query,
                    aggregate_shot_embedding(
                        ctx.features, s, ctx.cfg.retrieval_frames_per_shot
                    ),
                ),
                s.start,
                s,
            )
            for s in subshots
        ),
        key=lambda t: (t[0], t[1]),
    )
    return [s for _, _, s in scored[:top]]


def run_round(ctx: _QuestionCtx, state: AgentState) -> tuple[RoundRecord, AgentState]:
    """One select/partition/reflect cycle; returns the record and the
    state the next round starts from."""
    round_no = state.round + 1
    key_info = summarize_key_info(ctx, state, round_no)
    query = _query_embedding(ctx, key_info)

    frame_set = state.frame_set
    replacements: dict[int, list[Shot]] = {}
    if round_no == 1:
        root = state.shot_set.shots[0]
        candidates = [root.id]
        subshots = partition_shot(ctx.features, root, ctx.cfg.k_round1, ctx.cfg.seed, ctx.ids)
        replacements[root.id] = subshots
        if ctx.cfg.init_top == 1:
            chosen = [
                select_initial_subshot(
                    query, subshots, ctx.features, ctx.cfg.retrieval_frames_per_shot
                )
            ]
        else:
            chosen = _top_subshots(ctx, query, subshots, ctx.cfg.init_top)
        for sub in chosen:
            frame_set = merge_with_diversity(
                frame_set, sample_uniform(sub, ctx.cfg.init_frames), sub
            )
    else:
        ranked = rank_shots(
            query, state.shot_set, ctx.features, ctx.cfg.retrieval_frames_per_shot
        )
        candidates = select_candidates(
            ranked, ctx.cfg.sim_threshold, ctx.cfg.round_top_n
        )
        for shot_id in candidates:
            shot = state.shot_set.find(shot_id)
            subshots = partition_shot(
                ctx.features, shot, ctx.cfg.k_later, ctx.cfg.seed, ctx.ids
            )
            replacements[shot_id] = subshots
            for sub in subshots:
                frame_set = merge_with_diversity(
                    frame_set, sample_uniform(sub, ctx.cfg.frames_per_subshot), sub
                )
    shot_set = update_shot_set(state.shot_set, replacements)
    new_frames = tuple(sorted(set(frame_set) - set(state.frame_set)))
    ctx.events.append(
        {
            "type": "shots",
            "round": round_no,
            "shots": [[s.id, s.start, s.end, s.depth] for s in shot_set.shots],
        }
    )
    ctx.events.append(
        {"type": "frames", "round": round_no, "evidence": list(frame_set.indices)}
    )

    evidence = frame_set.indices
    answer = _ask_parsed(
        ctx,
        PromptKind.ANSWER,
        round_no,
        evidence,
        _answer_prompt(ctx, evidence, key_info),
        lambda text: parse_answer_letter(text, ctx.qa.letters),
    )
    reason = _ask(
        ctx,
        PromptKind.REASON,
        round_no,
        evidence,
        render_prompt(
            PromptKind.REASON,
            PromptContext(
                frame_note=frame_token_note(evidence),
                question=ctx.qa.question,
                options=ctx.qa.options,
                key_info=key_info,
                choice=answer,
            ),
        ),
    )
    confidence = _ask_parsed(
        ctx,
        PromptKind.CONFIDENCE,
        round_no,
        evidence,
        render_prompt(
            PromptKind.CONFIDENCE,
            PromptContext(
                frame_note=frame_token_note(evidence),
                question=ctx.qa.question,
                options=ctx.qa.options,
                choice=answer,
                reason=reason,
            ),
        ),
        parse_confidence,
    )
    record = RoundRecord(
        round=round_no,
        key_info=key_info,
        candidates=tuple(candidates),
        new_frames=new_frames,
        answer=answer,
        reason=reason,
        confidence=confidence,
    )
    next_state = AgentState(
        shot_set=shot_set,
        frame_set=frame_set,
        history=state.history + (record,),
        round=round_no,
    )
    return record, next_state


def finalize(records: Sequence[RoundRecord], cfg: AgentConfig) -> tuple[str, str]:
    """Answer and path from the completed rounds: the first confident
    round wins outright; otherwise majority vote, ties broken by the
    highest confidence among the tied answers, then by the latest
    round."""
    if not records:
        raise InvalidInputError("cannot finalize zero rounds")
    for rec in records:
        if rec.confidence >= cfg.confident_level:
            return rec.answer, "chain"
    counts = Counter(rec.answer for rec in records)
    top = max(counts.values())
    tied = {answer for answer, n in counts.items() if n == top}
    best = max(
        (rec for rec in records if rec.answer in tied),
        key=lambda rec: (rec.confidence, rec.round),
    )
    return best.answer, "vote"


def run_question(
    video: VideoSource, qa: QaItem, cfg: AgentConfig, providers: Providers
) -> QuestionRun:
    """Answer one question end to end, never letting an engine error
    escape: failures come back as a run with ``verdict=None`` and the
    error message, with the trace up to the failure point intact."""
    started = time.perf_counter()
    events: list[dict] = []
    try:
        features = video.features()
        ctx = _QuestionCtx(
            qa=qa,
            video=video,
            features=features,
            cfg=cfg,
            providers=providers,
            events=events,
        )
        outcome = glance(ctx)
        if outcome.decision is GlanceDecision.GLOBAL:
            assert outcome.answer is not None
            verdict = Verdict(
                answer=outcome.answer,
                path="global",
                rounds=(),
                frames_used=len(
                    set(outcome.glance_indices) | set(outcome.answer_indices)
                ),
            )
        else:
            state = AgentState(
                shot_set=ShotSet.whole_video(video.duration, shot_id=0),
                frame_set=FrameSet(),
                history=(),
                round=0,
            )
            records: list[RoundRecord] = []
            while state.round < cfg.max_rounds:
                record, state = run_round(ctx, state)
                records.append(record)
                if record.confidence >= cfg.confident_level:
                    break
            answer, path = finalize(records, cfg)
            verdict = Verdict(
                answer=answer,
                path=path,
                rounds=tuple(records),
                frames_used=len(set(ctx.glance_indices) | set(state.frame_set)),
            )
        return QuestionRun(
            qa_id=qa.id,
            video_id=video.id,
            verdict=verdict,
            events=events,
            error=None,
            elapsed_s=time.perf_counter() - started,
        )
    except (ShotChainError, OSError) as exc:
        message = f"{type(exc).__name__}: {exc}"
        log.warning("question %s failed: %s", qa.id, message)
        events.append({"type": "error", "message": message})
        return QuestionRun(
            qa_id=qa.id,
            video_id=video.id,
            verdict=None,
            events=events,
            error=message,
            elapsed_s=time.perf_counter() - started,
        )
