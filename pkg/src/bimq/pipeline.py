"""Single-turn query pipeline: one NL query in, one NL answer out.

The flow chains staged generations: an intent stage routes the query either
to general question answering (2 generations total) or through parameter
identification, value recognition, a database execution, and a summarization
stage (4 generations plus 1 execute). Every run produces a full trace; stage
failures never raise; they yield a graceful answer with ``ok=False`` and the
failing stage named.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .errors import BimqError
from .llm import Backend, GenerationRequest
from .prompts import (
    DEFAULT_BUDGET,
    FULL,
    Catalog,
    FewShotExample,
    Intent,
    PromptComposition,
    RenderedPrompt,
    build_general_prompt,
    build_intent_prompt,
    build_parameter_prompt,
    build_summary_prompt,
    build_value_prompt,
    enforce_budget,
    parse_intent_output,
    parse_parameter_output,
    parse_value_output,
)
from .store import QUANTITY, Store, StructuredQuery, normalize

FAILURE_TEXT = "Sorry, I could not interpret that request."

#: Stage names in pipeline order.
STAGE_ORDER = ("intent", "parameter", "value", "db_execute", "summary", "general")

_SUMMARY_WIDTH = 96


@dataclass
class PipelineStage:
    """One step of the trace; ``prompt`` is absent for the database stage."""

    name: str
    prompt: RenderedPrompt | None = None
    raw_output: str | None = None
    parsed: Any = None
    db_calls: list[tuple[str, dict]] = field(default_factory=list)
    duration: float = 0.0
    error: str | None = None

    def summary_line(self) -> str:
        if self.error is not None:
            return f"failed: {self.error}"
        p = self.parsed
        if self.name == "intent":
            return f"[{p.intent.value}] for '{p.category}'"
        if self.name == "parameter":
            return f"filter_para: {p.filter_parameter}; proj_para: {p.projection_parameter}"
        if self.name == "value":
            return f"extr_value: '{p.extracted_value}'; pred_value: '{p.predicted_value}'"
        if self.name == "db_execute":
            note = " (fell back to the extracted value)" if p["fallback_used"] else ""
            return f"{p['result'].count} records matched{note}"
        text = (self.raw_output or "").strip().replace("\n", " ")
        return text if len(text) <= _SUMMARY_WIDTH else text[: _SUMMARY_WIDTH - 3] + "..."


@dataclass
class Answer:
    text: str
    retrieved_ids: list[str]
    trace: list[PipelineStage]
    ok: bool
    failure_stage: str | None = None

    @property
    def generations(self) -> int:
        return sum(1 for stage in self.trace if stage.prompt is not None)

    def structured_query(self) -> StructuredQuery | None:
        for stage in self.trace:
            if stage.name == "db_execute" and stage.parsed:
                return stage.parsed["query"]
        return None


@dataclass
class PipelineConfig:
    """Knobs shared by every stage of a run."""

    composition: PromptComposition = FULL
    fewshot: dict[str, list[FewShotExample]] | None = None
    budget: int = DEFAULT_BUDGET
    sample_seed: int = 0
    catalog: Catalog | None = None
    temperature: float = 0.0
    model_name: str = ""

    def fewshot_for(self, task: str) -> list[FewShotExample]:
        if self.fewshot is not None:
            return self.fewshot.get(task, [])
        return (self.catalog or Catalog.default()).fewshot(task)


class _StageFailure(Exception):
    def __init__(self, stage: PipelineStage):
        self.stage = stage


def run_query(store: Store, backend: Backend, config: PipelineConfig, query: str,
              on_stage: Callable[[PipelineStage], None] | None = None) -> Answer:
    """Run one query through the staged pipeline. Never raises for stage
    failures; the returned answer carries ``ok`` and the failing stage."""
    trace: list[PipelineStage] = []

    def push(stage: PipelineStage) -> PipelineStage:
        trace.append(stage)
        if on_stage is not None:
            on_stage(stage)
        return stage

    def fail(stage: PipelineStage) -> Answer:
        push(stage)
        return Answer(
            text=f"{FAILURE_TEXT} (failed at the {stage.name} stage)",
            retrieved_ids=[],
            trace=trace,
            ok=False,
            failure_stage=stage.name,
        )

    def generate(name: str, prompt: RenderedPrompt, parser,
                 db_calls: list[tuple[str, dict]] | None = None) -> PipelineStage:
        stage = PipelineStage(name=name, db_calls=db_calls or [])
        start = time.monotonic()
        try:
            stage.prompt = enforce_budget(prompt, config.budget)
            request = GenerationRequest(
                prompt=stage.prompt,
                temperature=config.temperature,
                model_name=config.model_name,
            )
            stage.raw_output = backend.generate(request).text
            stage.parsed = parser(stage.raw_output) if parser else stage.raw_output
        except BimqError as exc:
            stage.error = f"{type(exc).__name__}: {exc}"
            stage.duration = time.monotonic() - start
            raise _StageFailure(stage) from exc
        stage.duration = time.monotonic() - start
        return stage

    try:
        intent_stage = generate(
            "intent",
            build_intent_prompt(
                store, config.composition, config.fewshot_for("intent"),
                query, catalog=config.catalog),
            parse_intent_output,
        )
        intent_output = intent_stage.parsed

        if intent_output.intent is Intent.ASK_IN_GPT:
            push(intent_stage)
            general_stage = generate(
                "general",
                build_general_prompt(query, config.composition, catalog=config.catalog),
                None,
            )
            push(general_stage)
            return Answer(
                text=general_stage.raw_output,
                retrieved_ids=[],
                trace=trace,
                ok=True,
            )

        category = store.resolve_category(intent_output.category)
        if category is None:
            intent_stage.error = f"UnknownCategory: {intent_output.category!r}"
            return fail(intent_stage)
        push(intent_stage)

        parameter_stage = generate(
            "parameter",
            build_parameter_prompt(
                store, category, config.composition, config.fewshot_for("parameter"),
                query, catalog=config.catalog, sample_seed=config.sample_seed),
            parse_parameter_output,
            db_calls=[("sample_parameter_values", {"category": category, "k": 10})],
        )
        parameter_output = parameter_stage.parsed

        filter_parameter = store.resolve_parameter(category, parameter_output.filter_parameter)
        if filter_parameter is None:
            parameter_stage.error = f"UnknownParameter: {parameter_output.filter_parameter!r}"
            return fail(parameter_stage)
        if normalize(parameter_output.projection_parameter) == QUANTITY:
            projection = QUANTITY
        else:
            projection = store.resolve_parameter(category, parameter_output.projection_parameter)
            if projection is None:
                parameter_stage.error = \
                    f"UnknownParameter: {parameter_output.projection_parameter!r}"
                return fail(parameter_stage)
        push(parameter_stage)

        value_stage = generate(
            "value",
            build_value_prompt(
                store, category, filter_parameter, config.composition,
                config.fewshot_for("value"), query, catalog=config.catalog),
            parse_value_output,
            db_calls=[("distinct_values",
                       {"category": category, "parameter": filter_parameter})],
        )
        value_output = value_stage.parsed
        push(value_stage)

        # the projection token, not the classified intent, decides count vs search
        intent = "count" if (
            intent_output.intent is Intent.COUNT_IN_BIM or projection == QUANTITY
        ) else "search"
        if intent == "count":
            projection = QUANTITY

        db_stage = PipelineStage(name="db_execute")
        start = time.monotonic()
        structured = StructuredQuery(
            intent=intent,
            category=category,
            filter_parameter=filter_parameter,
            filter_value=value_output.predicted_value,
            projection_parameter=projection,
        )
        db_stage.db_calls.append(("execute", structured.to_json()))
        result = store.execute(structured)
        fallback_used = False
        if result.count == 0 and \
                normalize(value_output.extracted_value) != normalize(value_output.predicted_value):
            retry = replace(structured, filter_value=value_output.extracted_value)
            db_stage.db_calls.append(("execute", retry.to_json()))
            alternative = store.execute(retry)
            if alternative.count > 0:
                structured, result, fallback_used = retry, alternative, True
        db_stage.parsed = {"query": structured, "result": result, "fallback_used": fallback_used}
        db_stage.duration = time.monotonic() - start
        push(db_stage)

        summary_stage = generate(
            "summary",
            build_summary_prompt(
                query, structured, result, config.composition, catalog=config.catalog),
            None,
        )
        push(summary_stage)
        return Answer(
            text=summary_stage.raw_output,
            retrieved_ids=list(result.matched_ids),
            trace=trace,
            ok=True,
        )
    except _StageFailure as failure:
        return fail(failure.stage)
