"""Schema'd building-object store: load, introspect, and query component records.

The store is a read-only collection of categories (tables). Each category has
an ordered parameter list, an identifier parameter, and a list of records whose
values are scalars (text, number, boolean) or null. All filter matching happens
on normalized text, so the executor is exact while staying case- and
whitespace-insensitive.
"""

from __future__ import annotations

import io
import json
import logging
import random
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, BinaryIO, Iterable, Mapping

from .errors import (
    InvalidQuery,
    ParseError,
    SchemaViolation,
    UnknownCategory,
    UnknownParameter,
)

log = logging.getLogger(__name__)

Scalar = str | int | float | bool | None

#: Reserved projection token marking a count query.
QUANTITY = "quantity"

_INT_RE = re.compile(r"^[+-]?[0-9]+$")
_FLOAT_RE = re.compile(r"^[+-]?([0-9]+\.?[0-9]*|\.[0-9]+)([eE][+-]?[0-9]+)?$")
_WS_RE = re.compile(r"\s+")


def normalize(value: Scalar) -> str:
    """Canonical text form of a scalar: lowercase, trimmed, whitespace
    collapsed, numbers without leading zeros or a trailing ``.0``.

    Idempotent; ``None`` normalizes to the empty string (but null values never
    participate in matching; the executor skips them).
    """
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _canonical_float(value)
    text = _WS_RE.sub(" ", str(value)).strip().lower()
    if _INT_RE.match(text):
        return str(int(text))
    if _FLOAT_RE.match(text):
        return _canonical_float(float(text))
    return text


def _canonical_float(f: float) -> str:
    if f != f or f in (float("inf"), float("-inf")):  # nan / inf fall back to text
        return repr(f)
    if f == int(f):
        return str(int(f))
    return repr(f)


def sort_key(text: str) -> tuple:
    """Numeric-aware ordering: numbers before text, numbers by magnitude."""
    if _INT_RE.match(text) or _FLOAT_RE.match(text):
        return (0, float(text), text)
    return (1, 0.0, text)


@dataclass(frozen=True)
class CategorySchema:
    """One category (table) of building objects."""

    name: str
    object_types: tuple[str, ...]
    parameters: tuple[str, ...]
    id_parameter: str

    def __post_init__(self) -> None:
        if len(set(self.parameters)) != len(self.parameters):
            raise SchemaViolation(f"duplicate parameter names in category {self.name!r}")
        if self.id_parameter not in self.parameters:
            raise SchemaViolation(
                f"id_parameter {self.id_parameter!r} is not a parameter of {self.name!r}"
            )

    def has_parameter(self, name: str) -> bool:
        return name in self.parameters

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "object_types": list(self.object_types),
            "id_parameter": self.id_parameter,
            "parameters": list(self.parameters),
        }


@dataclass(frozen=True)
class ComponentRecord:
    """One building object: a category name plus parameter → scalar values."""

    category: str
    values: Mapping[str, Scalar]

    def get(self, parameter: str) -> Scalar:
        return self.values.get(parameter)


@dataclass(frozen=True)
class StructuredQuery:
    """Executable form of an interpreted user query.

    ``intent`` is ``"search"`` or ``"count"``; ``projection_parameter`` is a
    parameter name, the reserved ``"quantity"`` token (count queries only), or
    ``None`` for the full record.
    """

    intent: str
    category: str
    filter_parameter: str
    filter_value: Scalar
    projection_parameter: str | None = None

    def to_json(self) -> dict:
        return {
            "intent": self.intent,
            "category": self.category,
            "filter_parameter": self.filter_parameter,
            "filter_value": self.filter_value,
            "projection_parameter": self.projection_parameter,
        }


@dataclass(frozen=True)
class QueryResult:
    """Execution result; ``rows`` aligns 1:1 with ``matched_ids``.

    Row payloads follow the projection: the projected scalar for a named
    projection, ``None`` for count queries, the full value map otherwise.
    ``records`` always carries the full matched records so downstream
    summarization can describe the objects without a second lookup.
    """

    matched_ids: tuple[str, ...]
    rows: tuple[tuple[str, Any], ...]
    count: int
    records: tuple[ComponentRecord, ...] = ()

    def to_json(self) -> dict:
        return {
            "matched_ids": list(self.matched_ids),
            "rows": [[rid, value] for rid, value in self.rows],
            "count": self.count,
            "records": [dict(r.values) for r in self.records],
        }


class Store:
    """Immutable in-memory store; safe for unsynchronized concurrent reads."""

    def __init__(self, schemas: Iterable[CategorySchema],
                 records: Mapping[str, list[ComponentRecord]]):
        self._schemas: dict[str, CategorySchema] = {}
        for schema in schemas:
            if schema.name in self._schemas:
                raise SchemaViolation(f"duplicate category name {schema.name!r}")
            self._schemas[schema.name] = schema
        self._records = {name: tuple(records.get(name, ())) for name in self._schemas}
        self._validate()
        self._distinct = self._precompute_distinct()
        # case-insensitive category lookup
        self._by_norm_name = {normalize(n): n for n in self._schemas}

    # --- construction -----------------------------------------------------

    def _validate(self) -> None:
        for name, schema in self._schemas.items():
            seen_ids: set[str] = set()
            for record in self._records[name]:
                for key in record.values:
                    if not schema.has_parameter(key):
                        raise SchemaViolation(
                            f"record key {key!r} is not a parameter of category {name!r}"
                        )
                rid = record.get(schema.id_parameter)
                if rid is None:
                    raise SchemaViolation(
                        f"record in {name!r} is missing its {schema.id_parameter!r} value"
                    )
                rid_text = normalize(rid)
                if rid_text in seen_ids:
                    raise SchemaViolation(f"duplicate {schema.id_parameter!r} {rid!r} in {name!r}")
                seen_ids.add(rid_text)

    def _precompute_distinct(self) -> dict[tuple[str, str], tuple[str, ...]]:
        table: dict[tuple[str, str], tuple[str, ...]] = {}
        for name, schema in self._schemas.items():
            for parameter in schema.parameters:
                values = {
                    normalize(rec.get(parameter))
                    for rec in self._records[name]
                    if rec.get(parameter) is not None
                }
                table[(name, parameter)] = tuple(sorted(values, key=sort_key))
        return table

    # --- introspection ----------------------------------------------------

    def list_categories(self) -> list[str]:
        """All category names, sorted and duplicate-free."""
        return sorted(self._schemas)

    def schema(self, category: str) -> CategorySchema:
        try:
            return self._schemas[category]
        except KeyError:
            raise UnknownCategory(category) from None

    def resolve_category(self, name: str) -> str | None:
        """Case-insensitive category lookup; returns the canonical name."""
        return self._by_norm_name.get(normalize(name))

    def resolve_parameter(self, category: str, name: str) -> str | None:
        schema = self.schema(category)
        wanted = normalize(name)
        for parameter in schema.parameters:
            if normalize(parameter) == wanted:
                return parameter
        return None

    def records(self, category: str) -> tuple[ComponentRecord, ...]:
        self.schema(category)
        return self._records[category]

    def distinct_values(self, category: str, parameter: str) -> list[str]:
        """Sorted, deduplicated normalized values; nulls excluded."""
        schema = self.schema(category)
        if not schema.has_parameter(parameter):
            raise UnknownParameter(f"{parameter!r} in category {category!r}")
        return list(self._distinct[(category, parameter)])

    def sample_parameter_values(self, category: str, parameter: str,
                                k: int = 10, seed: int = 0) -> list[str]:
        """Up to ``k`` distinct values, deterministic for a fixed seed."""
        pool = self.distinct_values(category, parameter)
        if len(pool) <= k:
            return pool
        rng = random.Random(seed)
        return sorted(rng.sample(pool, k), key=sort_key)

    # --- execution ----------------------------------------------------------

    def execute(self, query: StructuredQuery) -> QueryResult:
        """Run a validated structured query against the store.

        Records match when their normalized filter value equals the normalized
        ``filter_value``; nulls never match. Raises :class:`InvalidQuery` on
        any invariant breach.
        """
        schema = self._validate_query(query)
        wanted = normalize(query.filter_value)
        matched: list[ComponentRecord] = [
            rec for rec in self._records[query.category]
            if rec.get(query.filter_parameter) is not None
            and normalize(rec.get(query.filter_parameter)) == wanted
        ]
        ids = tuple(normalize(rec.get(schema.id_parameter)) for rec in matched)
        if query.intent == "count":
            rows = tuple((rid, None) for rid in ids)
        elif query.projection_parameter is not None:
            rows = tuple(
                (rid, rec.get(query.projection_parameter))
                for rid, rec in zip(ids, matched)
            )
        else:
            rows = tuple((rid, dict(rec.values)) for rid, rec in zip(ids, matched))
        return QueryResult(matched_ids=ids, rows=rows, count=len(ids), records=tuple(matched))

    def _validate_query(self, query: StructuredQuery) -> CategorySchema:
        if query.intent not in ("search", "count"):
            raise InvalidQuery(f"unknown intent {query.intent!r}")
        if query.category not in self._schemas:
            raise InvalidQuery(f"unknown category {query.category!r}")
        schema = self._schemas[query.category]
        if not schema.has_parameter(query.filter_parameter):
            raise InvalidQuery(
                f"filter parameter {query.filter_parameter!r} not in category {query.category!r}"
            )
        proj = query.projection_parameter
        if proj is not None and proj != QUANTITY and not schema.has_parameter(proj):
            raise InvalidQuery(f"projection parameter {proj!r} not in category {query.category!r}")
        if (query.intent == "count") != (proj == QUANTITY):
            raise InvalidQuery("count intent requires (and implies) the 'quantity' projection")
        return schema


def load_store(source: str | Path | bytes | BinaryIO | Mapping) -> Store:
    """Load a store document (path, bytes, binary stream, or parsed mapping).

    The document is a JSON object ``{"categories": [...]}``; unknown top-level
    keys are ignored with a warning.
    """
    doc = _read_document(source)
    if not isinstance(doc, Mapping):
        raise ParseError("store document must be a JSON object")
    for key in doc:
        if key != "categories":
            log.warning("ignoring unknown top-level key %r in store document", key)
    categories = doc.get("categories", [])
    if not isinstance(categories, list):
        raise ParseError("'categories' must be a list")

    schemas: list[CategorySchema] = []
    records: dict[str, list[ComponentRecord]] = {}
    for entry in categories:
        if not isinstance(entry, Mapping):
            raise ParseError("category entries must be JSON objects")
        try:
            name = entry["name"]
            parameters = entry["parameters"]
            id_parameter = entry["id_parameter"]
        except KeyError as exc:
            raise ParseError(f"category entry missing key {exc}") from None
        if not isinstance(name, str) or not isinstance(parameters, list):
            raise ParseError(f"malformed category entry {name!r}")
        schema = CategorySchema(
            name=name,
            object_types=tuple(entry.get("object_types", ())),
            parameters=tuple(parameters),
            id_parameter=id_parameter,
        )
        schemas.append(schema)
        rows = entry.get("records", [])
        if not isinstance(rows, list):
            raise ParseError(f"'records' of category {name!r} must be a list")
        recs = []
        for row in rows:
            if not isinstance(row, Mapping):
                raise ParseError(f"record of category {name!r} must be a JSON object")
            recs.append(ComponentRecord(category=name, values=dict(row)))
        records[name] = recs
    return Store(schemas, records)


def _read_document(source: str | Path | bytes | BinaryIO | Mapping) -> Any:
    if isinstance(source, Mapping):
        return source
    try:
        if isinstance(source, (str, Path)):
            raw = Path(source).read_bytes()
        elif isinstance(source, bytes):
            raw = source
        elif isinstance(source, io.IOBase) or hasattr(source, "read"):
            raw = source.read()
        else:
            raise ParseError(f"unsupported store source type {type(source).__name__}")
        return json.loads(raw)
    except (OSError, ValueError) as exc:
        raise ParseError(f"cannot read store document: {exc}") from exc
