"""Hypothesis strategies shared across test modules."""

import math

from hypothesis import strategies as st

from specagent.core import (
    Action,
    ActionKind,
    DraftRecord,
    DraftSource,
    Observation,
    ObservationKind,
    Provenance,
    ReasoningTrace,
    Step,
    TimingBreakdown,
    Trajectory,
    Verdict,
)

text = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1).filter(lambda s: s.strip())


@st.composite
def actions(draw, kinds=tuple(ActionKind)):
    kind = draw(st.sampled_from(list(kinds)))
    if kind is ActionKind.SEARCH:
        return Action.search(draw(text))
    if kind is ActionKind.VISIT:
        return Action.visit(draw(text), draw(text))
    if kind is ActionKind.FINISH:
        return Action.finish(draw(text))
    keys = draw(st.lists(st.from_regex(r"[A-Za-z0-9_.\-]{1,5}", fullmatch=True), unique=True, max_size=3))
    return Action.tool(draw(text), {k: draw(st.text(max_size=5)) for k in keys})


logprob = st.floats(min_value=-30.0, max_value=0.0)
ms = st.integers(0, 100_000)


@st.composite
def verdicts(draw, accepted):
    p_acc = draw(st.floats(1e-9, 1.0))
    p_rej = draw(st.floats(1e-9, 1.0))
    score = math.log(p_acc) - math.log(p_rej)
    # pick a threshold on the requested side of the score
    gap = draw(st.floats(0.0, 5.0))
    tau = score - gap if accepted else score + gap + 1e-6
    if (score >= tau) != accepted:
        tau = score if accepted else math.nextafter(score, math.inf)
    return Verdict(p_acc, p_rej, score, accepted, tau)


@st.composite
def steps(draw, final=False):
    action = draw(actions((ActionKind.FINISH,) if final else (ActionKind.SEARCH, ActionKind.VISIT, ActionKind.OTHER_TOOL)))
    provenance = draw(st.sampled_from(list(Provenance)))
    if provenance is Provenance.BASE:
        verdict = None
    else:
        verdict = draw(verdicts(accepted=provenance is not Provenance.FALLBACK))
    reasoning = draw(st.none() | st.builds(lambda t, lps: ReasoningTrace(t, len(lps), tuple(lps)), text, st.lists(logprob, max_size=4)))
    tool = draw(ms)
    timing = TimingBreakdown(draw(ms), draw(ms), draw(ms), tool, draw(ms), tool + draw(ms))
    drafts = tuple(
        DraftRecord(src, draw(st.none() | actions()), draw(st.integers(0, 5000)), tuple(draw(st.lists(logprob, max_size=3))), draw(ms), draw(st.none() | text))
        for src in draw(st.lists(st.sampled_from(list(DraftSource)), max_size=2))
    )
    return Step(
        action=action,
        observation=Observation(draw(st.sampled_from(list(ObservationKind))), draw(st.text(max_size=40)), draw(ms)),
        provenance=provenance,
        timing=timing,
        reasoning=reasoning,
        verdict=verdict,
        action_logprobs=tuple(draw(st.lists(logprob, max_size=4))),
        drafts=drafts,
        discarded_action=draw(st.none() | actions()) if provenance is Provenance.FALLBACK else None,
    )


@st.composite
def trajectories(draw):
    body = draw(st.lists(steps(), max_size=5))
    finished = draw(st.booleans())
    if finished:
        body.append(draw(steps(final=True)))
    answer = body[-1].action.answer if finished else None
    return Trajectory(draw(text), draw(text), tuple(body), answer, draw(st.text(alphabet="0123456789abcdef", max_size=16)))
