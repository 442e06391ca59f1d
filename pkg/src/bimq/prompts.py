"""Five-component prompt construction and answer-line parsing.

Prompts are assembled from an ordered template of five components (System,
Relevant Database Information, Task Instruction, Few-shot Examples, User);
later components carry more weight for the generator, so the most
query-specific content sits closest to the end. A composition mask enables or
disables components for ablation runs; the User component can never be
disabled. Boilerplate wording lives in an editable text catalog so prompts
can be refined without touching code.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from importlib import resources
from pathlib import Path

from .errors import (
    BudgetInfeasible,
    MissingField,
    ParseError,
    UnknownIntent,
    UnparseableOutput,
)
from .store import QueryResult, Store, StructuredQuery, normalize

#: Default character budget (roughly 6k tokens).
DEFAULT_BUDGET = 24_000

#: Rows shown in full inside a summary prompt; the rest collapse into a count.
SUMMARY_ROW_CAP = 20


class PromptComponentKind(IntEnum):
    """Template components in their fixed prompt order."""

    System = 1
    RelevantDbInfo = 2
    TaskInstruction = 3
    FewShotExamples = 4
    User = 5


_HEADERS = {
    PromptComponentKind.System: "System:",
    PromptComponentKind.RelevantDbInfo: "Relevant database information:",
    PromptComponentKind.TaskInstruction: "Task instruction:",
    PromptComponentKind.FewShotExamples: "Few-shot examples:",
    PromptComponentKind.User: "User:",
}

_SHORT_NAMES = {
    PromptComponentKind.System: "SYS",
    PromptComponentKind.RelevantDbInfo: "DB",
    PromptComponentKind.TaskInstruction: "TASK",
    PromptComponentKind.FewShotExamples: "FEW",
    PromptComponentKind.User: "USER",
}


class Intent(str, Enum):
    ASK_IN_GPT = "ask in GPT"
    SEARCH_IN_BIM = "search in BIM"
    COUNT_IN_BIM = "count in BIM"


@dataclass(frozen=True)
class PromptComposition:
    """Subset of enabled components; User is always on."""

    enabled: frozenset[PromptComponentKind]

    def __post_init__(self) -> None:
        object.__setattr__(self, "enabled", frozenset(self.enabled) | {PromptComponentKind.User})

    def __contains__(self, kind: PromptComponentKind) -> bool:
        return kind in self.enabled

    @property
    def label(self) -> str:
        parts = [_SHORT_NAMES[kind] for kind in sorted(self.enabled)
                 if kind is not PromptComponentKind.User]
        return " + ".join(parts) if parts else "USER"

    @classmethod
    def parse(cls, text: str) -> "PromptComposition":
        """Parse a comma list of SYS, DB, TASK, FEW (USER accepted, implied)."""
        lookup = {v: k for k, v in _SHORT_NAMES.items()}
        enabled = set()
        for token in text.split(","):
            token = token.strip().upper()
            if not token:
                continue
            if token not in lookup:
                raise ValueError(f"unknown prompt component {token!r}")
            enabled.add(lookup[token])
        return cls(frozenset(enabled))


FULL = PromptComposition(frozenset(PromptComponentKind))
NO_SYSTEM = PromptComposition(frozenset(FULL.enabled - {PromptComponentKind.System}))
TASK_FEW = PromptComposition(frozenset({
    PromptComponentKind.TaskInstruction, PromptComponentKind.FewShotExamples}))
FEW_ONLY = PromptComposition(frozenset({PromptComponentKind.FewShotExamples}))

#: The four ablation rows, in reporting order.
ABLATION_ROWS = (FULL, NO_SYSTEM, TASK_FEW, FEW_ONLY)


@dataclass(frozen=True)
class FewShotExample:
    """One worked example; ``answer_line`` omits the leading ``A:``.

    ``category``/``parameter`` tag the context the example came from so
    builders can drop examples that belong to a different category or
    parameter; untagged examples are kept everywhere.
    """

    query: str
    answer_line: str
    category: str | None = None
    parameter: str | None = None


@dataclass(frozen=True)
class PromptSection:
    """One rendered component: a header, fixed body lines, and droppable items."""

    kind: PromptComponentKind
    body: tuple[str, ...] = ()
    items: tuple[str, ...] = ()

    def render(self) -> str:
        if self.kind is PromptComponentKind.System:
            return f"{_HEADERS[self.kind]} " + "\n ".join(self.body)
        lines = [_HEADERS[self.kind]]
        for chunk in self.body + self.items:
            lines.extend(" " + line for line in chunk.splitlines())
        return "\n".join(lines)


@dataclass(frozen=True)
class RenderedPrompt:
    """Ordered sections plus ablation/budget metadata."""

    kind: str
    sections: tuple[PromptSection, ...]
    truncated: bool = False

    def __post_init__(self) -> None:
        kinds = [section.kind for section in self.sections]
        if kinds != sorted(kinds) or len(set(kinds)) != len(kinds):
            raise ValueError("prompt sections must be strictly ordered by component kind")

    @property
    def flat_text(self) -> str:
        return "\n\n".join(section.render() for section in self.sections)

    @property
    def char_count(self) -> int:
        return len(self.flat_text)

    def section(self, kind: PromptComponentKind) -> PromptSection | None:
        for section in self.sections:
            if section.kind is kind:
                return section
        return None

    def text_of(self, kind: PromptComponentKind) -> str:
        section = self.section(kind)
        return section.render() if section is not None else ""

    @property
    def user_query(self) -> str | None:
        user = self.section(PromptComponentKind.User)
        if user is None:
            return None
        for line in user.body:
            if line.startswith("Q: "):
                return line[3:]
        return None


# --- catalog ----------------------------------------------------------------

_KEY_RE = re.compile(r"^\[([a-z_]+\.[a-z_]+)\]\s*$")
_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


class Catalog:
    """Editable boilerplate text keyed by ``<prompt kind>.<component>``."""

    def __init__(self, blocks: dict[str, str]):
        self._blocks = blocks

    @classmethod
    def load(cls, path: str | Path) -> "Catalog":
        return cls(_parse_catalog(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> "Catalog":
        global _DEFAULT_CATALOG
        if _DEFAULT_CATALOG is None:
            text = resources.files("bimq").joinpath("catalog.txt").read_text(encoding="utf-8")
            _DEFAULT_CATALOG = cls(_parse_catalog(text))
        return _DEFAULT_CATALOG

    def text(self, kind: str, component: str, **subs: str) -> str:
        block = self._blocks.get(f"{kind}.{component}")
        if block is None:
            block = self._blocks.get(f"default.{component}")
        if block is None:
            raise ParseError(f"catalog has no text for ({kind}, {component})")
        return _PLACEHOLDER_RE.sub(lambda m: subs.get(m.group(1), m.group(0)), block)

    def fewshot(self, kind: str) -> list[FewShotExample]:
        """Hypothetical examples shipped for the zero-data scenario."""
        block = self._blocks.get(f"{kind}.fewshot")
        if block is None:
            return []
        examples, query = [], None
        for line in block.splitlines():
            if line.startswith("Q: "):
                query = line[3:]
            elif line.startswith("A: ") and query is not None:
                examples.append(FewShotExample(query=query, answer_line=line[3:]))
                query = None
        return examples


_DEFAULT_CATALOG: Catalog | None = None


def _parse_catalog(text: str) -> dict[str, str]:
    blocks: dict[str, str] = {}
    key: str | None = None
    lines: list[str] = []
    for line in text.splitlines():
        match = _KEY_RE.match(line)
        if match:
            if key is not None:
                blocks[key] = "\n".join(lines).strip("\n")
            key, lines = match.group(1), []
        elif key is not None:
            lines.append(line)
        elif line.strip() and not line.startswith("#"):
            raise ParseError(f"catalog content before first [key] block: {line!r}")
    if key is not None:
        blocks[key] = "\n".join(lines).strip("\n")
    return blocks


# --- builders ---------------------------------------------------------------

def _quoted_list(values) -> str:
    return "[" + ", ".join(repr(str(v)) for v in values) + "]"


def _fewshot_items(fewshot: list[FewShotExample], category: str | None = None,
                   parameter: str | None = None) -> tuple[str, ...]:
    items = []
    for example in fewshot:
        if category is not None and example.category is not None \
                and normalize(example.category) != normalize(category):
            continue
        if parameter is not None and example.parameter is not None \
                and normalize(example.parameter) != normalize(parameter):
            continue
        items.append(f"Q: {example.query}\nA: {example.answer_line}")
    return tuple(items)


def _assemble(kind: str, composition: PromptComposition, catalog: Catalog,
              query: str, db_body: tuple[str, ...] = (), db_items: tuple[str, ...] = (),
              task: str | None = None, fewshot_items: tuple[str, ...] = (),
              with_db: bool = True) -> RenderedPrompt:
    sections: list[PromptSection] = []
    if PromptComponentKind.System in composition:
        sections.append(PromptSection(
            PromptComponentKind.System,
            body=tuple(catalog.text(kind, "system").splitlines())))
    if with_db and PromptComponentKind.RelevantDbInfo in composition:
        sections.append(PromptSection(
            PromptComponentKind.RelevantDbInfo, body=db_body, items=db_items))
    if task is not None and PromptComponentKind.TaskInstruction in composition:
        sections.append(PromptSection(
            PromptComponentKind.TaskInstruction, body=tuple(task.splitlines())))
    if fewshot_items and PromptComponentKind.FewShotExamples in composition:
        sections.append(PromptSection(
            PromptComponentKind.FewShotExamples, items=fewshot_items))
    sections.append(PromptSection(PromptComponentKind.User, body=(f"Q: {query}",)))
    return RenderedPrompt(kind=kind, sections=tuple(sections))


def build_intent_prompt(store: Store, composition: PromptComposition,
                        fewshot: list[FewShotExample], query: str,
                        catalog: Catalog | None = None) -> RenderedPrompt:
    """Prompt that classifies the query intent and the queried category."""
    catalog = catalog or Catalog.default()
    categories = store.list_categories()
    db_items = []
    for name in categories:
        schema = store.schema(name)
        db_items.append(
            f"- {name!r}: types {_quoted_list(schema.object_types)};"
            f" parameters {_quoted_list(schema.parameters)}"
        )
    task = catalog.text("intent", "task", categories=_quoted_list(categories))
    return _assemble(
        "intent", composition, catalog, query,
        db_body=tuple(catalog.text("intent", "db").splitlines()),
        db_items=tuple(db_items),
        task=task,
        fewshot_items=_fewshot_items(fewshot),
    )


def build_parameter_prompt(store: Store, category: str, composition: PromptComposition,
                           fewshot: list[FewShotExample], query: str,
                           catalog: Catalog | None = None,
                           sample_k: int = 10, sample_seed: int = 0) -> RenderedPrompt:
    """Prompt that picks the filter and projection parameters of a category."""
    catalog = catalog or Catalog.default()
    schema = store.schema(category)
    db_items = tuple(
        f"- {parameter}: "
        f"{_quoted_list(store.sample_parameter_values(category, parameter, k=sample_k, seed=sample_seed))}"
        for parameter in schema.parameters
    )
    task = catalog.text(
        "parameter", "task",
        category=category, parameters=_quoted_list(schema.parameters))
    return _assemble(
        "parameter", composition, catalog, query,
        db_body=tuple(catalog.text("parameter", "db", category=category).splitlines()),
        db_items=db_items,
        task=task,
        fewshot_items=_fewshot_items(fewshot, category=category),
    )


def build_value_prompt(store: Store, category: str, filter_parameter: str,
                       composition: PromptComposition, fewshot: list[FewShotExample],
                       query: str, catalog: Catalog | None = None,
                       sample_seed: int = 0) -> RenderedPrompt:
    """Prompt that extracts the query's value and predicts the matching record.

    The full list of distinct values goes into the Task Instruction, so it is
    never truncated by budget enforcement.
    """
    catalog = catalog or Catalog.default()
    values = store.distinct_values(category, filter_parameter)
    records = store.records(category)[:3]
    db_items = tuple("- " + _record_line(dict(rec.values)) for rec in records)
    task = catalog.text(
        "value", "task",
        category=category, parameter=filter_parameter, values=_quoted_list(values))
    return _assemble(
        "value", composition, catalog, query,
        db_body=tuple(catalog.text("value", "db", category=category).splitlines()),
        db_items=db_items,
        task=task,
        fewshot_items=_fewshot_items(fewshot, category=category, parameter=filter_parameter),
    )


def build_summary_prompt(query: str, structured_query: StructuredQuery,
                         result: QueryResult, composition: PromptComposition,
                         catalog: Catalog | None = None,
                         row_cap: int = SUMMARY_ROW_CAP) -> RenderedPrompt:
    """Prompt that turns an execution result into a natural-language answer."""
    catalog = catalog or Catalog.default()
    proj = structured_query.projection_parameter
    if structured_query.intent == "count":
        asked = "counted the matching objects"
    elif proj:
        asked = f"requested their {proj!r} value"
    else:
        asked = "requested the full records"
    db_body = tuple(catalog.text("summary", "db").splitlines()) + (
        f"The structured query matched {structured_query.category!r} objects whose"
        f" {structured_query.filter_parameter!r} is '{structured_query.filter_value}'"
        f" and {asked}.",
        f"{result.count} total records retrieved.",
    )
    db_items = tuple(
        "- " + _record_line(dict(rec.values)) for rec in result.records[:row_cap])
    return _assemble(
        "summary", composition, catalog, query,
        db_body=db_body,
        db_items=db_items,
        task=catalog.text("summary", "task"),
    )


def build_general_prompt(query: str, composition: PromptComposition,
                         catalog: Catalog | None = None) -> RenderedPrompt:
    """Prompt for general domain questions; carries no database content."""
    catalog = catalog or Catalog.default()
    return _assemble(
        "general", composition, catalog, query,
        task=catalog.text("general", "task"),
        with_db=False,
    )


def _record_line(values: dict) -> str:
    return "; ".join(f"{key}: {value}" for key, value in values.items())


# --- answer-line rendering and parsing --------------------------------------

def render_intent_answer(intent: Intent, category: str | None) -> str:
    return f"[{intent.value}] for '{category or 'NA'}'"


def render_parameter_answer(filter_parameter: str, projection_parameter: str) -> str:
    return f"filter_para: {filter_parameter}; proj_para: {projection_parameter}"


def render_value_answer(extracted_value: str, predicted_value: str) -> str:
    return f"extr_value: '{extracted_value}'; pred_value: '{predicted_value}'"


@dataclass(frozen=True)
class IntentOutput:
    intent: Intent
    category: str

    @property
    def is_na(self) -> bool:
        return normalize(self.category) == "na"


@dataclass(frozen=True)
class ParameterOutput:
    filter_parameter: str
    projection_parameter: str


@dataclass(frozen=True)
class ValueOutput:
    extracted_value: str
    predicted_value: str


_INTENT_LINE_RE = re.compile(
    r"^\s*(?:a\s*:)?\s*\[(?P<intent>[^\]\n]+)\]\s*(?:of|for)\s*'(?P<category>[^'\n]*)'",
    re.IGNORECASE,
)
_INTENTS_BY_TOKEN = {normalize(i.value): i for i in Intent}


def parse_intent_output(text: str) -> IntentOutput:
    """Parse ``[intent] for 'category'`` (``of`` accepted, case-insensitive).

    The first line that matches wins; anything after it is ignored.
    """
    for line in text.splitlines():
        match = _INTENT_LINE_RE.match(line)
        if not match:
            continue
        token = normalize(match.group("intent"))
        intent = _INTENTS_BY_TOKEN.get(token)
        if intent is None:
            raise UnknownIntent(f"unknown intent token {match.group('intent')!r}")
        category = match.group("category").strip() or "NA"
        return IntentOutput(intent=intent, category=category)
    raise UnparseableOutput(f"no intent line found in {text!r}")


_PARAM_FIELD_RE = re.compile(
    r"(?P<key>filter_para|proj_para)\s*:\s*(?P<value>[^;\n]+)", re.IGNORECASE)


def parse_parameter_output(text: str) -> ParameterOutput:
    """Parse ``filter_para: <name>; proj_para: <name>`` (order-insensitive)."""
    found: dict[str, str] = {}
    for match in _PARAM_FIELD_RE.finditer(text):
        key = match.group("key").lower()
        value = match.group("value").strip().strip("'\"").strip()
        found.setdefault(key, value)
    if not found:
        raise UnparseableOutput(f"no parameter fields found in {text!r}")
    filter_parameter = found.get("filter_para", "")
    projection_parameter = found.get("proj_para", "")
    if not filter_parameter or not projection_parameter:
        missing = "proj_para" if filter_parameter else "filter_para"
        raise MissingField(f"{missing} missing in {text!r}")
    return ParameterOutput(filter_parameter, projection_parameter)


_VALUE_FIELD_RE = re.compile(
    r"(?P<key>extr_value|pred_value)\s*:\s*'(?P<value>[^'\n]*)'", re.IGNORECASE)


def parse_value_output(text: str) -> ValueOutput:
    """Parse ``extr_value: '<text>'; pred_value: '<text>'`` (order-insensitive).

    Values must be single-quoted; unquoted values do not parse.
    """
    found: dict[str, str] = {}
    for match in _VALUE_FIELD_RE.finditer(text):
        found.setdefault(match.group("key").lower(), match.group("value"))
    if not found:
        raise UnparseableOutput(f"no value fields found in {text!r}")
    extracted = found.get("extr_value", "")
    predicted = found.get("pred_value", "")
    if not extracted or not predicted:
        missing = "pred_value" if extracted else "extr_value"
        raise MissingField(f"{missing} missing or empty in {text!r}")
    return ValueOutput(extracted_value=extracted, predicted_value=predicted)


# --- budget -----------------------------------------------------------------

def enforce_budget(prompt: RenderedPrompt, max_chars: int) -> RenderedPrompt:
    """Shrink a prompt to ``max_chars`` by dropping droppable content.

    Relevant-database items go first (last item first), then whole few-shot
    examples (newest first); System, Task Instruction, and User are never
    touched. Raises :class:`BudgetInfeasible` when those alone exceed the
    budget. Idempotent: an in-budget prompt is returned unchanged.
    """
    if max_chars <= 0:
        raise ValueError("max_chars must be positive")
    if prompt.char_count <= max_chars:
        return prompt

    sections = {section.kind: section for section in prompt.sections}
    order = [section.kind for section in prompt.sections]

    def current() -> RenderedPrompt:
        return RenderedPrompt(
            kind=prompt.kind,
            sections=tuple(sections[k] for k in order),
            truncated=True,
        )

    for kind in (PromptComponentKind.RelevantDbInfo, PromptComponentKind.FewShotExamples):
        section = sections.get(kind)
        if section is None:
            continue
        items = list(section.items)
        while items and current().char_count > max_chars:
            items.pop()
            sections[kind] = replace(section, items=tuple(items))
        if current().char_count > max_chars:
            del sections[kind]
            order.remove(kind)
    result = current()
    if result.char_count > max_chars:
        raise BudgetInfeasible(
            f"untruncatable sections need {result.char_count} chars; budget is {max_chars}")
    return result
