"""Evaluation harness: annotated datasets, few-shot sampling, chained scoring.

A dataset row carries the query plus gold annotations: a text-classification
(TC) label combining intent and category, the category itself, projection and
filter parameters, and the extracted/predicted values. Tasks are scored in a
gated chain by default: parameter identification runs only on rows whose
intent task was fully correct, and value recognition only on rows whose
parameter task was fully correct, mirroring how the pipeline consumes one
stage's output in the next.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import BimqError, EmptyGroupSet, MissingColumn, ParseError
from .llm import Backend, GenerationRequest
from .prompts import (
    ABLATION_ROWS,
    DEFAULT_BUDGET,
    FULL,
    Catalog,
    FewShotExample,
    Intent,
    PromptComposition,
    build_intent_prompt,
    build_parameter_prompt,
    build_value_prompt,
    enforce_budget,
    parse_intent_output,
    parse_parameter_output,
    parse_value_output,
    render_intent_answer,
    render_parameter_answer,
    render_value_answer,
)
from .store import Store, normalize

log = logging.getLogger(__name__)

NA = "NA"
INVALID_LABEL = "__invalid__"

COLUMNS = ("query", "tc_label", "category", "proj_para",
           "filter_para", "extr_value", "pred_value")


@dataclass(frozen=True)
class LabeledQuery:
    query: str
    tc_label: str
    category: str
    proj_para: str
    filter_para: str
    extr_value: str
    pred_value: str

    @property
    def has_parameters(self) -> bool:
        return normalize(self.category) != "na" and normalize(self.filter_para) != "na"

    @property
    def has_values(self) -> bool:
        return self.has_parameters and normalize(self.pred_value) != "na"


def load_dataset(path: str | Path) -> list[LabeledQuery]:
    """Read an annotated query file (CSV, or JSON lines for ``.jsonl``)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read dataset: {exc}") from exc
    if path.suffix in (".jsonl", ".ndjson"):
        return _load_jsonl(text)
    return _load_csv(text)


def _load_csv(text: str) -> list[LabeledQuery]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise ParseError("dataset file has no header row")
    missing = [c for c in COLUMNS if c not in reader.fieldnames]
    if missing:
        raise MissingColumn(f"dataset is missing column(s): {', '.join(missing)}")
    rows = []
    for number, raw in enumerate(reader, start=2):
        rows.append(_make_row(raw, where=f"line {number}"))
    return rows


def _load_jsonl(text: str) -> list[LabeledQuery]:
    rows = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except ValueError as exc:
            raise ParseError(f"line {number}: {exc}") from exc
        missing = [c for c in COLUMNS if c not in raw]
        if missing:
            raise MissingColumn(f"line {number} is missing: {', '.join(missing)}")
        rows.append(_make_row(raw, where=f"line {number}"))
    return rows


def _make_row(raw: dict, where: str) -> LabeledQuery:
    values = {c: str(raw.get(c) or "").strip() for c in COLUMNS}
    if not values["tc_label"]:
        raise ParseError(f"{where}: tc_label must be non-empty")
    return LabeledQuery(**values)


class LabelMap:
    """Total, injective mapping tc_label ↔ (intent, category)."""

    def __init__(self, entries: dict[str, tuple[Intent, str]], ood_label: str | None = None):
        self.entries = dict(entries)
        self._reverse: dict[tuple[Intent, str], str] = {}
        for label, (intent, category) in self.entries.items():
            key = (intent, normalize(category))
            if key in self._reverse:
                raise ParseError(
                    f"label map is not injective: {label!r} and {self._reverse[key]!r} "
                    f"both map to {key}")
            self._reverse[key] = label
        if ood_label is None:
            ood_label = next(
                (label for label, (intent, _) in self.entries.items()
                 if intent is Intent.ASK_IN_GPT), None)
        self.ood_label = ood_label

    @classmethod
    def load(cls, path: str | Path) -> "LabelMap":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ParseError(f"cannot read label map: {exc}") from exc
        labels = doc.get("labels")
        if not isinstance(labels, dict):
            raise ParseError("label map must contain a 'labels' object")
        entries = {}
        for label, spec in labels.items():
            try:
                entries[label] = (Intent(spec["intent"]), spec["category"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad label map entry {label!r}: {exc}") from exc
        return cls(entries, ood_label=doc.get("ood_label"))

    def labels(self) -> list[str]:
        return list(self.entries)

    def intent_of(self, tc_label: str) -> Intent:
        return self.entries[tc_label][0]

    def category_of(self, tc_label: str) -> str:
        return self.entries[tc_label][1]

    def reverse(self, intent: Intent, category: str) -> str | None:
        return self._reverse.get((intent, normalize(category)))

    def check_total(self, dataset: list[LabeledQuery]) -> None:
        unknown = sorted({row.tc_label for row in dataset} - set(self.entries))
        if unknown:
            raise ParseError(f"label map lacks dataset labels: {', '.join(unknown)}")


@dataclass
class EvalConfig:
    scenario: str = "zero"
    fewshot_fraction: float = 0.02
    seed: int = 0
    composition: PromptComposition = FULL
    gated: bool = True
    exclude_exemplars_from_test: bool = False
    budget: int = DEFAULT_BUDGET
    catalog: Catalog | None = None
    temperature: float = 0.0
    model_name: str = ""


def group_sample_size(fraction: float, group_size: int) -> int:
    """Per-group exemplar count: at least one row represents every group."""
    return max(1, math.ceil(fraction * group_size))


def sample_fewshot(dataset: list[LabeledQuery], task: str,
                   context: tuple[str, ...] = (), fraction: float = 0.02,
                   seed: int = 0, label_map: LabelMap | None = None) -> list[FewShotExample]:
    """Sample per-group exemplars and synthesize their answer lines.

    Groups depend on the task: TC labels for ``intent``, filter parameters of
    the context category for ``parameter``, and distinct predicted values of
    the context (category, parameter) for ``value``.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    if task == "intent":
        if label_map is None:
            raise ValueError("intent sampling needs a label map for answer synthesis")
        pool = list(dataset)
        keyed = [(row.tc_label, row) for row in pool]
    elif task == "parameter":
        (category,) = context
        pool = [row for row in dataset
                if normalize(row.category) == normalize(category) and row.has_parameters]
        keyed = [(normalize(row.filter_para), row) for row in pool]
    elif task == "value":
        category, parameter = context
        pool = [row for row in dataset
                if normalize(row.category) == normalize(category)
                and normalize(row.filter_para) == normalize(parameter)
                and row.has_values]
        keyed = [(normalize(row.pred_value), row) for row in pool]
    else:
        raise ValueError(f"unknown sampling task {task!r}")
    if not pool:
        raise EmptyGroupSet(f"no dataset rows match {task} context {context!r}")

    groups: dict[str, list[LabeledQuery]] = {}
    for key, row in keyed:
        groups.setdefault(key, []).append(row)

    rng = random.Random(seed)
    examples: list[FewShotExample] = []
    for key in sorted(groups):
        members = groups[key]
        for row in rng.sample(members, group_sample_size(fraction, len(members))):
            examples.append(_synthesize_example(task, row, label_map))
    return examples


def _synthesize_example(task: str, row: LabeledQuery,
                        label_map: LabelMap | None) -> FewShotExample:
    if task == "intent":
        intent = label_map.intent_of(row.tc_label)
        category = None if normalize(row.category) == "na" else row.category
        return FewShotExample(row.query, render_intent_answer(intent, category))
    if task == "parameter":
        return FewShotExample(
            row.query, render_parameter_answer(row.filter_para, row.proj_para),
            category=row.category)
    return FewShotExample(
        row.query, render_value_answer(row.extr_value, row.pred_value),
        category=row.category, parameter=row.filter_para)


@dataclass
class Tally:
    correct: int = 0
    total: int = 0

    def add(self, ok: bool) -> None:
        self.total += 1
        self.correct += int(ok)

    @property
    def accuracy(self) -> float | None:
        return self.correct / self.total if self.total else None

    def to_json(self) -> dict:
        return {"correct": self.correct, "total": self.total}

    @classmethod
    def from_json(cls, doc: dict) -> "Tally":
        return cls(correct=doc["correct"], total=doc["total"])


TASK_KEYS = ("tc_label", "category", "filter_para", "proj_para",
             "pred_value", "extr_value", "union")


@dataclass
class Metrics:
    """Accuracy tallies, the TC-label confusion matrix, per-category splits,
    and the per-row correctness records everything is recomputable from."""

    tallies: dict[str, Tally] = field(
        default_factory=lambda: {key: Tally() for key in TASK_KEYS})
    labels: list[str] = field(default_factory=list)
    confusion: dict[str, dict[str, int]] = field(default_factory=dict)
    per_category: dict[str, dict[str, Tally]] = field(default_factory=dict)
    row_results: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    @property
    def acc_tc_label(self): return self.tallies["tc_label"].accuracy
    @property
    def acc_category(self): return self.tallies["category"].accuracy
    @property
    def acc_filter_para(self): return self.tallies["filter_para"].accuracy
    @property
    def acc_proj_para(self): return self.tallies["proj_para"].accuracy
    @property
    def acc_pred_value(self): return self.tallies["pred_value"].accuracy
    @property
    def acc_extr_value(self): return self.tallies["extr_value"].accuracy
    @property
    def acc_union(self): return self.tallies["union"].accuracy

    def denominators(self) -> dict[str, int]:
        return {key: tally.total for key, tally in self.tallies.items()}

    def record_confusion(self, true_label: str, predicted_label: str | None) -> None:
        predicted = predicted_label if predicted_label is not None else INVALID_LABEL
        self.confusion.setdefault(true_label, {})
        self.confusion[true_label][predicted] = \
            self.confusion[true_label].get(predicted, 0) + 1

    def category_tally(self, category: str, kind: str) -> Tally:
        slot = self.per_category.setdefault(
            category, {"filter": Tally(), "value": Tally()})
        return slot[kind]

    def to_json(self) -> dict:
        return {
            "tallies": {key: tally.to_json() for key, tally in self.tallies.items()},
            "accuracies": {key: self.tallies[key].accuracy for key in TASK_KEYS},
            "labels": list(self.labels),
            "confusion": {t: dict(preds) for t, preds in self.confusion.items()},
            "per_category": {
                category: {kind: tally.to_json() for kind, tally in slots.items()}
                for category, slots in self.per_category.items()
            },
            "row_results": list(self.row_results),
            "failures": list(self.failures),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Metrics":
        return cls(
            tallies={key: Tally.from_json(t) for key, t in doc["tallies"].items()},
            labels=list(doc["labels"]),
            confusion={t: dict(preds) for t, preds in doc["confusion"].items()},
            per_category={
                category: {kind: Tally.from_json(t) for kind, t in slots.items()}
                for category, slots in doc["per_category"].items()
            },
            row_results=list(doc["row_results"]),
            failures=list(doc["failures"]),
        )


class _Runner:
    """One evaluation pass over a dataset; holds the sampled exemplar sets."""

    def __init__(self, store: Store, backend: Backend, dataset: list[LabeledQuery],
                 label_map: LabelMap, config: EvalConfig):
        self.store = store
        self.backend = backend
        self.label_map = label_map
        self.config = config
        self.catalog = config.catalog or Catalog.default()
        self.metrics = Metrics(labels=label_map.labels())
        self.dataset = list(dataset)
        self.intent_examples: list[FewShotExample] = []
        self.parameter_examples: dict[str, list[FewShotExample]] = {}
        self.value_examples: dict[tuple[str, str], list[FewShotExample]] = {}
        self.test_rows = self._prepare()

    def _prepare(self) -> list[LabeledQuery]:
        if self.config.scenario == "zero":
            # a couple of hypothetical demonstrations keep the output format
            # visible without leaking dataset rows
            self.intent_examples = self.catalog.fewshot("intent")
            for category in {row.category for row in self.dataset if row.has_parameters}:
                self.parameter_examples[normalize(category)] = self.catalog.fewshot("parameter")
            return self.dataset
        exemplar_queries: set[str] = set()
        self.intent_examples = sample_fewshot(
            self.dataset, "intent", (), self.config.fewshot_fraction,
            self.config.seed, self.label_map)
        exemplar_queries.update(e.query for e in self.intent_examples)
        contexts = {(row.category, row.filter_para)
                    for row in self.dataset if row.has_parameters}
        for category in {category for category, _ in contexts}:
            examples = sample_fewshot(
                self.dataset, "parameter", (category,),
                self.config.fewshot_fraction, self.config.seed)
            self.parameter_examples[normalize(category)] = examples
            exemplar_queries.update(e.query for e in examples)
        for category, parameter in contexts:
            try:
                examples = sample_fewshot(
                    self.dataset, "value", (category, parameter),
                    self.config.fewshot_fraction, self.config.seed)
            except EmptyGroupSet:
                examples = []
            self.value_examples[(normalize(category), normalize(parameter))] = examples
            exemplar_queries.update(e.query for e in examples)
        if self.config.exclude_exemplars_from_test:
            return [row for row in self.dataset if row.query not in exemplar_queries]
        return self.dataset

    # --- generation helpers -------------------------------------------------

    def _generate(self, prompt) -> str:
        request = GenerationRequest(
            prompt=enforce_budget(prompt, self.config.budget),
            temperature=self.config.temperature,
            model_name=self.config.model_name,
        )
        return self.backend.generate(request).text

    def _fail(self, row: LabeledQuery, task: str, error: Exception) -> None:
        self.metrics.failures.append(
            {"query": row.query, "task": task, "error": f"{type(error).__name__}: {error}"})
        log.warning("eval %s task failed for %r: %s", task, row.query, error)

    # --- per-row evaluation ---------------------------------------------------

    def run(self) -> Metrics:
        for row in self.test_rows:
            self._run_row(row)
        return self.metrics

    def _run_row(self, row: LabeledQuery) -> None:
        record = {"query": row.query, "tc_label": row.tc_label}
        tc_ok = self._intent_task(row, record)

        parameter_ok = False
        if row.has_parameters and (tc_ok or not self.config.gated):
            parameter_ok = self._parameter_task(row, record)
        if row.has_values and (parameter_ok or not self.config.gated):
            self._value_task(row, record)
        self.metrics.row_results.append(record)

    def _intent_task(self, row: LabeledQuery, record: dict) -> bool:
        predicted_label: str | None = None
        category_ok = False
        try:
            prompt = build_intent_prompt(
                self.store, self.config.composition, self.intent_examples,
                row.query, catalog=self.catalog)
            output = parse_intent_output(self._generate(prompt))
            predicted_label = self.label_map.reverse(output.intent, output.category)
            category_ok = normalize(output.category) == normalize(row.category)
        except BimqError as exc:
            self._fail(row, "intent", exc)
        tc_ok = predicted_label == row.tc_label
        self.metrics.tallies["tc_label"].add(tc_ok)
        self.metrics.tallies["category"].add(category_ok)
        self.metrics.record_confusion(row.tc_label, predicted_label)
        record.update(tc_pred=predicted_label, tc_ok=tc_ok, category_ok=category_ok)
        return tc_ok

    def _parameter_task(self, row: LabeledQuery, record: dict) -> bool:
        filter_ok = proj_ok = False
        category = self.store.resolve_category(row.category)
        try:
            if category is None:
                raise ParseError(f"store has no category {row.category!r}")
            prompt = build_parameter_prompt(
                self.store, category, self.config.composition,
                self.parameter_examples.get(normalize(row.category), []),
                row.query, catalog=self.catalog, sample_seed=self.config.seed)
            output = parse_parameter_output(self._generate(prompt))
            filter_ok = normalize(output.filter_parameter) == normalize(row.filter_para)
            proj_ok = normalize(output.projection_parameter) == normalize(row.proj_para)
        except BimqError as exc:
            self._fail(row, "parameter", exc)
        self.metrics.tallies["filter_para"].add(filter_ok)
        self.metrics.tallies["proj_para"].add(proj_ok)
        self.metrics.category_tally(row.category, "filter").add(filter_ok)
        record.update(filter_ok=filter_ok, proj_ok=proj_ok)
        return filter_ok and proj_ok

    def _value_task(self, row: LabeledQuery, record: dict) -> None:
        pred_ok = extr_ok = False
        category = self.store.resolve_category(row.category)
        try:
            if category is None:
                raise ParseError(f"store has no category {row.category!r}")
            parameter = self.store.resolve_parameter(category, row.filter_para)
            if parameter is None:
                raise ParseError(f"{row.category!r} has no parameter {row.filter_para!r}")
            prompt = build_value_prompt(
                self.store, category, parameter, self.config.composition,
                self.value_examples.get(
                    (normalize(row.category), normalize(row.filter_para)), []),
                row.query, catalog=self.catalog)
            output = parse_value_output(self._generate(prompt))
            pred_ok = normalize(output.predicted_value) == normalize(row.pred_value)
            extr_ok = normalize(output.extracted_value) == normalize(row.extr_value)
        except BimqError as exc:
            self._fail(row, "value", exc)
        self.metrics.tallies["pred_value"].add(pred_ok)
        self.metrics.tallies["extr_value"].add(extr_ok)
        self.metrics.tallies["union"].add(pred_ok or extr_ok)
        self.metrics.category_tally(row.category, "value").add(pred_ok)
        record.update(pred_ok=pred_ok, extr_ok=extr_ok, union_ok=pred_ok or extr_ok)


def run_eval(store: Store, backend: Backend, dataset: list[LabeledQuery],
             label_map: LabelMap, config: EvalConfig) -> Metrics:
    """Score every annotated row through the chained tasks."""
    label_map.check_total(dataset)
    return _Runner(store, backend, dataset, label_map, config).run()


def ablation_matrix(store: Store, backend: Backend, dataset: list[LabeledQuery],
                    label_map: LabelMap,
                    base_config: EvalConfig) -> list[tuple[PromptComposition, Metrics]]:
    """Evaluate the four prompt compositions, full template first."""
    rows = []
    for composition in ABLATION_ROWS:
        config = replace(base_config, composition=composition)
        rows.append((composition, run_eval(store, backend, dataset, label_map, config)))
    return rows


class OracleBackend:
    """Answers every prompt from the row's own gold labels.

    A reference backend for validating the harness: with an uncorrupted
    oracle, every accuracy must be 1.0. ``corrupt`` maps (query, task) pairs
    to replacement raw outputs for controlled-error tests.
    """

    name = "oracle"

    def __init__(self, dataset: list[LabeledQuery], label_map: LabelMap,
                 corrupt: dict[tuple[str, str], str] | None = None):
        self._rows = {row.query: row for row in dataset}
        self._label_map = label_map
        self._corrupt = corrupt or {}

    def generate(self, request: GenerationRequest):
        from .llm import GenerationResult

        task = request.prompt.kind
        query = request.prompt.user_query
        override = self._corrupt.get((query, task))
        if override is not None:
            return GenerationResult(text=override, latency=0.0, backend=self.name)
        row = self._rows.get(query)
        if row is None:
            return GenerationResult(text="", latency=0.0, backend=self.name)
        if task == "intent":
            intent = self._label_map.intent_of(row.tc_label)
            category = None if normalize(row.category) == "na" else row.category
            text = render_intent_answer(intent, category)
        elif task == "parameter":
            text = render_parameter_answer(row.filter_para, row.proj_para)
        elif task == "value":
            text = render_value_answer(row.extr_value, row.pred_value)
        else:
            text = f"Summary for: {query}"
        return GenerationResult(text=text, latency=0.0, backend=self.name)


# --- reporting ---------------------------------------------------------------

_TABLE_ROWS = (
    ("TC label", "tc_label"),
    ("Object category", "category"),
    ("Filter parameter", "filter_para"),
    ("Projection parameter", "proj_para"),
    ("Predicted values", "pred_value"),
    ("Extracted values", "extr_value"),
    ("Pred. / Extr. values", "union"),
)


def _pct(value: float | None) -> str:
    return "n/a" if value is None else f"{value * 100:.1f}%"


def report(result: Metrics | list[tuple[PromptComposition, Metrics]],
           format: str = "table") -> str:
    """Render metrics or an ablation matrix as a document.

    Formats: ``json`` (lossless), ``table`` (plain text), and, for single
    metrics, ``confusion-csv``.
    """
    if isinstance(result, Metrics):
        return _report_metrics(result, format)
    return _report_matrix(result, format)


def _report_metrics(metrics: Metrics, format: str) -> str:
    if format == "json":
        return json.dumps(metrics.to_json(), indent=2, ensure_ascii=False)
    if format == "confusion-csv":
        return confusion_csv(metrics)
    if format == "table":
        width = max(len(name) for name, _ in _TABLE_ROWS) + 2
        lines = [f"{'Task accuracy':<{width}}{'Value':>8}  {'n':>9}"]
        for name, key in _TABLE_ROWS:
            tally = metrics.tallies[key]
            lines.append(
                f"{name:<{width}}{_pct(tally.accuracy):>8}  "
                f"{tally.correct:>4}/{tally.total}")
        return "\n".join(lines)
    raise ValueError(f"unknown report format {format!r}")


def _report_matrix(matrix: list[tuple[PromptComposition, Metrics]], format: str) -> str:
    if format == "json":
        return json.dumps(
            [{"composition": comp.label, "metrics": metrics.to_json()}
             for comp, metrics in matrix],
            indent=2, ensure_ascii=False)
    if format == "table":
        keys = [key for _, key in _TABLE_ROWS]
        header = f"{'Prompt composition':<24}" + "".join(f"{key:>14}" for key in keys)
        lines = [header]
        for comp, metrics in matrix:
            cells = "".join(f"{_pct(metrics.tallies[key].accuracy):>14}" for key in keys)
            lines.append(f"{comp.label:<24}{cells}")
        return "\n".join(lines)
    raise ValueError(f"unknown report format {format!r}")


def confusion_csv(metrics: Metrics) -> str:
    """Confusion matrix as CSV: one row per true label, one column per
    predicted label (plus a column for unmappable predictions when present)."""
    columns = list(metrics.labels)
    if any(INVALID_LABEL in preds for preds in metrics.confusion.values()):
        columns.append(INVALID_LABEL)
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["true_label", *columns])
    for true_label in metrics.labels:
        preds = metrics.confusion.get(true_label, {})
        writer.writerow([true_label, *[preds.get(column, 0) for column in columns]])
    return buffer.getvalue()
