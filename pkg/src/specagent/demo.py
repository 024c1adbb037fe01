"""The bundled ten-step research scenario, built in code so tests can vary it.

Every step has a small-model draft, a large-model action-only draft, a critic
distribution and a full-reasoning base-model response. The base model's action
at each step is the action the run should execute there, so a speculative run
and the baseline run reach the same answer whenever the rejected drafts are
replaced by fallback.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import yaml

from .backends.builders import ScenarioBuilder, critic_distribution, scripted_response
from .backends.scenario import ScenarioScript
from .core import Action, ActionKind

QUESTION = "According to the 2021 census, what was the legal population of the capital of France?"
ANSWER = "2,133,111"

SLM_MS = 3000
LLM_DRAFT_MS = 2000
CRITIC_MS = 500
BASE_MS = 10000
TOOL_MS = 2000

WIKI = "https://en.wikipedia.org/wiki/Paris"
INSEE = "https://www.insee.fr/fr/statistiques/6683035"
INSEE_NOTE = "https://www.insee.fr/fr/information/2008354"
MAIRIE = "https://www.paris.fr/pages/les-chiffres-cles-de-paris"


@dataclass(frozen=True)
class PlannedStep:
    base: Action  # what the base model does here (and what the run executes)
    slm: Action  # small-model draft
    llm: Action  # large-model action-only draft
    slm_reasoning: str


def _long_reasoning(words: int) -> str:
    sentence = (
        "The census figures differ between the municipal count and the wider urban area so I should keep "
        "track of which series each source reports before trusting any single number "
    )
    pieces = sentence.split()
    return " ".join(pieces[i % len(pieces)] for i in range(words))


PLAN: tuple[PlannedStep, ...] = (
    PlannedStep(
        Action.search("capital of France"),
        Action.search("capital of France"),
        Action.search("France capital city"),
        "The question first needs the capital of France.",
    ),
    PlannedStep(
        Action.visit(WIKI, "Identify the capital and any census population figure"),
        Action.visit(WIKI, "find population"),
        Action.visit(WIKI, "Identify the capital and any census population figure"),
        "The Wikipedia page should confirm the capital.",
    ),
    PlannedStep(
        Action.search("Paris population 2021 census INSEE"),
        Action.search("Paris population 2021 census INSEE"),
        Action.search("Paris population 2021"),
        "Paris is the capital. The official census body is INSEE, so search for its 2021 figure.",
    ),
    PlannedStep(
        Action.visit(INSEE, "Find the 2021 legal population of the commune of Paris"),
        Action.visit(INSEE, "population"),
        Action.visit(INSEE, "Find the 2021 legal population of the commune of Paris"),
        "The INSEE statistics page is the primary source.",
    ),
    PlannedStep(
        Action.search("INSEE populations legales 2021 Paris commune"),
        Action.search("capital of France"),
        Action.search("INSEE legal population Paris"),
        "I will look up the capital again to be sure.",
    ),
    PlannedStep(
        Action.visit(INSEE_NOTE, "Explain what legal population means and its reference date"),
        Action.visit(INSEE_NOTE, "definition"),
        Action.visit(INSEE_NOTE, "Explain what legal population means and its reference date"),
        "The methodology note explains the reference year.",
    ),
    PlannedStep(
        Action.search("Paris chiffres cles population municipale 2021"),
        Action.search("Paris chiffres cles population municipale 2021"),
        Action.search("Paris key figures"),
        "Cross-check the figure with the city's own key figures page.",
    ),
    PlannedStep(
        Action.visit(MAIRIE, "Find the municipal population figure and its census year"),
        Action.visit(MAIRIE, "Find the municipal population figure and its census year"),
        Action.visit(MAIRIE, "population"),
        _long_reasoning(600),
    ),
    PlannedStep(
        Action.search("populations legales 2021 entree en vigueur 1 janvier 2024 Paris"),
        Action.search("Paris population 2021 census INSEE"),
        Action.search("Paris legal population effective date"),
        "Search the census query from before once more.",
    ),
    PlannedStep(
        Action.finish(ANSWER),
        Action.finish(ANSWER),
        Action.finish(ANSWER),
        "INSEE and the city agree on the 2021 legal population.",
    ),
)

# Lower per-token logprobs for Search than Visit when drafted without reasoning.
_ACTION_ONLY_LP = {ActionKind.SEARCH: -1.2, ActionKind.VISIT: -0.35, ActionKind.FINISH: -0.2}
_WITH_REASONING_LP = {ActionKind.SEARCH: -0.3, ActionKind.VISIT: -0.25, ActionKind.FINISH: -0.1}


def ten_step_scenario(
    reject_steps: Sequence[int] = (4, 8),
    *,
    p_accept: float = 0.9,
    p_reject: float = 0.1,
    latencies: Optional[dict] = None,
) -> ScenarioScript:
    """Scripted scenario; the critic says No (``p_reject`` Yes mass) at ``reject_steps``."""
    lat = {"slm": SLM_MS, "llm": LLM_DRAFT_MS, "critic": CRITIC_MS, "base": BASE_MS}
    lat.update(latencies or {})
    b = ScenarioBuilder(QUESTION, "ten_step")
    for i, plan in enumerate(PLAN):
        b.slm(
            i,
            scripted_response(
                plan.slm, plan.slm_reasoning, latency_ms=lat["slm"], action_logprob=_WITH_REASONING_LP[plan.slm.kind]
            ),
        )
        b.llm_action_only(
            i, scripted_response(plan.llm, latency_ms=lat["llm"], action_logprob=_ACTION_ONLY_LP[plan.llm.kind])
        )
        b.llm_reasoning(
            i,
            scripted_response(
                plan.base,
                f"Full analysis for step {i + 1}.",
                latency_ms=lat["base"],
                action_logprob=_WITH_REASONING_LP[plan.base.kind],
            ),
        )
        yes, no = (p_reject, p_accept) if i in reject_steps else (p_accept, p_reject)
        b.critic(i, critic_distribution(yes, no, latency_ms=lat["critic"]))
    return b.build()


def ten_step_fixtures_yaml(tool_ms: int = TOOL_MS) -> str:
    """Tool fixtures covering every action any pathway in the plan can emit."""
    pages = {
        WIKI: "Paris is the capital and largest city of France. Its population was estimated at 2,102,650 in January 2023.",
        INSEE: "Populations legales 2021. Commune de Paris (75056): population municipale 2 133 111.",
        INSEE_NOTE: "Legal populations for census year 2021 take effect on 1 January 2024.",
        MAIRIE: "Paris compte 2 133 111 habitants (population municipale, recensement 2021).",
    }
    searches: dict = {}
    for plan in PLAN:
        for a in (plan.base, plan.slm, plan.llm):
            if a.kind is ActionKind.SEARCH and a.query not in searches:
                searches[a.query] = [
                    {"url": url, "title": url.split("/")[2], "snippet": text[:80]} for url, text in pages.items()
                ][:3]
    doc = {
        "version": 1,
        "search": [{"query": q, "latency_ms": tool_ms, "items": items} for q, items in searches.items()],
        "visit": [{"url": u, "latency_ms": tool_ms, "content": c} for u, c in pages.items()],
    }
    return yaml.safe_dump(doc, sort_keys=False, allow_unicode=True, width=1000)
