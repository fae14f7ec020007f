"""File-backed federated store of component properties and relations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from confcheck.core_model import (
    NAMED_RELATION_KINDS,
    Condition,
    RelationKind,
    SoftwareComponent,
    ValueKind,
    compare_values,
    parse_version,
    split_spec_token,
)
from confcheck.errors import InputSyntaxError, KindError, SchemaError


@dataclass(frozen=True)
class PropertySpec:
    kind: ValueKind
    max_segments: int | None = None

    def accepts(self, value: str) -> bool:
        if self.kind is ValueKind.STRING:
            return True
        if self.kind is ValueKind.VERSION:
            parsed = parse_version(value)
            if parsed is None:
                return False
            return self.max_segments is None or len(parsed) <= self.max_segments
        return split_spec_token(value) is not None


_DEFAULT_SPECS: dict[str, PropertySpec] = {
    "product": PropertySpec(ValueKind.STRING),
    "vendor": PropertySpec(ValueKind.STRING),
    "release": PropertySpec(ValueKind.VERSION),
    "sup_spec": PropertySpec(ValueKind.SPEC_TOKEN),
    "req_spec": PropertySpec(ValueKind.SPEC_TOKEN),
    "unc_path": PropertySpec(ValueKind.STRING),
    "ctx_root": PropertySpec(ValueKind.STRING),
    "ip_jmx": PropertySpec(ValueKind.STRING),
    "port_jmx": PropertySpec(ValueKind.VERSION, max_segments=1),
}


class PropertyRegistry:
    """Maps property names to value kinds; unregistered properties are strings."""

    def __init__(self, specs: Mapping[str, PropertySpec] | None = None):
        self._specs = dict(_DEFAULT_SPECS)
        if specs:
            self._specs.update(specs)

    def spec_for(self, name: str) -> PropertySpec:
        return self._specs.get(name, PropertySpec(ValueKind.STRING))

    @classmethod
    def from_json(cls, data: bytes | str) -> "PropertyRegistry":
        """Load registry extensions: {"name": "kind"} or {"name": {"kind":..., "max_segments":...}}."""
        try:
            raw = json.loads(data)
        except json.JSONDecodeError as exc:
            raise InputSyntaxError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from exc
        if not isinstance(raw, dict):
            raise SchemaError("property registry must be a JSON object")
        specs: dict[str, PropertySpec] = {}
        for name, entry in raw.items():
            if isinstance(entry, str):
                entry = {"kind": entry}
            if not isinstance(entry, dict) or "kind" not in entry:
                raise SchemaError(f"registry entry for {name!r} must name a kind")
            try:
                kind = ValueKind(entry["kind"])
            except ValueError:
                raise SchemaError(f"unknown value kind {entry['kind']!r}") from None
            max_segments = entry.get("max_segments")
            if max_segments is not None and (
                not isinstance(max_segments, int) or max_segments < 1
            ):
                raise SchemaError(f"registry entry for {name!r}: bad max_segments")
            specs[name] = PropertySpec(kind, max_segments)
        return cls(specs)


@dataclass
class DataSource:
    identifiers: frozenset[str] = frozenset()
    properties: dict[str, dict[str, frozenset[str]]] = field(default_factory=dict)
    relations: dict[RelationKind, frozenset[tuple[str, str]]] = field(default_factory=dict)
    registry: PropertyRegistry = field(default_factory=PropertyRegistry)

    def relation_pairs(self, kind: RelationKind) -> frozenset[tuple[str, str]]:
        return self.relations.get(kind, frozenset())


def _coerce_value(value: object, where: str) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    raise SchemaError(f"{where}: values must be strings, got {value!r}")


def _parse_source(data: bytes | str, registry: PropertyRegistry) -> DataSource:
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as exc:
        raise InputSyntaxError(f"malformed JSON: {exc.msg}", exc.lineno, exc.colno) from exc
    if not isinstance(raw, dict):
        raise SchemaError("data source must be a JSON object")
    unknown = set(raw) - {"identifiers", "properties", "relations"}
    if unknown:
        raise SchemaError(f"unknown data source keys: {sorted(unknown)}")

    identifiers_raw = raw.get("identifiers", [])
    if not isinstance(identifiers_raw, list) or not all(
        isinstance(i, str) for i in identifiers_raw
    ):
        raise SchemaError("identifiers must be a list of strings")
    identifiers = frozenset(identifiers_raw)

    properties: dict[str, dict[str, frozenset[str]]] = {}
    props_raw = raw.get("properties", {})
    if not isinstance(props_raw, dict):
        raise SchemaError("properties must be an object")
    for prop, table in sorted(props_raw.items()):
        if not isinstance(table, dict):
            raise SchemaError(f"property table {prop!r} must be an object")
        spec = registry.spec_for(prop)
        column: dict[str, frozenset[str]] = {}
        for identifier, values in sorted(table.items()):
            if identifier not in identifiers:
                raise SchemaError(
                    f"property {prop!r} mentions undeclared identifier {identifier!r}"
                )
            if not isinstance(values, list):
                raise SchemaError(f"values of {prop!r}/{identifier!r} must be a list")
            coerced = frozenset(
                _coerce_value(v, f"property {prop!r} of {identifier!r}") for v in values
            )
            for value in coerced:
                if not spec.accepts(value):
                    raise KindError(prop, identifier, value, spec.kind.value)
            if coerced:
                column[identifier] = coerced
        if column:
            properties[prop] = column

    relations: dict[RelationKind, frozenset[tuple[str, str]]] = {}
    rels_raw = raw.get("relations", {})
    if not isinstance(rels_raw, dict):
        raise SchemaError("relations must be an object")
    for kind_name, pairs in sorted(rels_raw.items()):
        try:
            kind = RelationKind(kind_name)
        except ValueError:
            raise SchemaError(f"unknown relation kind {kind_name!r}") from None
        if kind not in NAMED_RELATION_KINDS:
            raise SchemaError(f"unknown relation kind {kind_name!r}")
        if not isinstance(pairs, list):
            raise SchemaError(f"relation table {kind_name!r} must be a list of pairs")
        converted = set()
        for pair in pairs:
            if not isinstance(pair, list) or len(pair) != 2 or not all(
                isinstance(p, str) for p in pair
            ):
                raise SchemaError(f"relation {kind_name!r}: each entry must be a pair of ids")
            for identifier in pair:
                if identifier not in identifiers:
                    raise SchemaError(
                        f"relation {kind_name!r} mentions undeclared identifier {identifier!r}"
                    )
            converted.add((pair[0], pair[1]))
        relations[kind] = frozenset(converted)

    return DataSource(identifiers, properties, relations, registry)


def load_data_source(
    sources: Iterable[bytes | str], registry: PropertyRegistry | None = None
) -> DataSource:
    """Load and federate one or more data-source documents.

    Federation is pure union: identifiers, per-(property, identifier) value
    sets, and relation pairs are merged without precedence between sources.
    """
    registry = registry or PropertyRegistry()
    identifiers: set[str] = set()
    properties: dict[str, dict[str, set[str]]] = {}
    relations: dict[RelationKind, set[tuple[str, str]]] = {}
    for data in sources:
        part = _parse_source(data, registry)
        identifiers |= part.identifiers
        for prop, column in part.properties.items():
            merged = properties.setdefault(prop, {})
            for identifier, values in column.items():
                merged.setdefault(identifier, set()).update(values)
        for kind, pairs in part.relations.items():
            relations.setdefault(kind, set()).update(pairs)
    return DataSource(
        frozenset(identifiers),
        {
            prop: {i: frozenset(vals) for i, vals in column.items()}
            for prop, column in properties.items()
        },
        {kind: frozenset(pairs) for kind, pairs in relations.items()},
        registry,
    )


def property_values(ds: DataSource, identifier: str, prop: str) -> frozenset[str]:
    """Values of a property for one identifier; empty when undefined."""
    return ds.properties.get(prop, {}).get(identifier, frozenset())


def eval_condition(ds: DataSource, identifier: str, condition: Condition) -> bool:
    """True iff some stored value satisfies the condition under its value kind."""
    spec = ds.registry.spec_for(condition.property)
    return any(
        compare_values(spec.kind, value, condition.op, condition.value)
        for value in property_values(ds, identifier, condition.property)
    )


def satisfies(ds: DataSource, identifier: str, conditions: Iterable[Condition]) -> bool:
    return all(eval_condition(ds, identifier, c) for c in conditions)


def eval_software_component(ds: DataSource, sc: SoftwareComponent) -> frozenset[str]:
    """Identifiers matching every condition; no conditions matches the whole domain."""
    result = ds.identifiers
    for condition in sc.conditions:
        result = result & frozenset(
            i for i in ds.identifiers if eval_condition(ds, i, condition)
        )
    return result
