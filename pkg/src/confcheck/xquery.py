"""Parser and evaluator for the XPath subset used by config objects and collectors.

Supported grammar::

    query     := ('/' | '//') step (('/' | '//') step)*
    step      := ('*'? NCName | '*' | 'text()') predicate*
    predicate := '[' (digits | '@' NCName '=' quoted) ']'

``/`` selects children, ``//`` descendants at any depth.  Element-name tests
match by local name, ignoring namespaces; the ``*name`` spelling is an
explicit way of writing the same namespace-agnostic test.  ``text()`` is only
allowed as the final step and yields, per selected element, the concatenation
of its direct text nodes, trimmed of surrounding whitespace.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from enum import Enum
from xml.sax.saxutils import escape

from confcheck.errors import InputSyntaxError, QuerySyntaxError

# --------------------------------------------------------------------------
# Query AST


class Axis(Enum):
    CHILD = "child"
    DESCENDANT = "descendant"


@dataclass(frozen=True)
class NameTest:
    name: str


@dataclass(frozen=True)
class AnyElement:
    pass


@dataclass(frozen=True)
class TextTest:
    pass


@dataclass(frozen=True)
class PositionPredicate:
    index: int


@dataclass(frozen=True)
class AttributePredicate:
    name: str
    value: str


@dataclass(frozen=True)
class Step:
    axis: Axis
    test: NameTest | AnyElement | TextTest
    predicates: tuple[PositionPredicate | AttributePredicate, ...] = ()


@dataclass(frozen=True)
class Query:
    steps: tuple[Step, ...]
    absolute: bool = True

    @property
    def returns_text(self) -> bool:
        return isinstance(self.steps[-1].test, TextTest)


_NCNAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*")
_DIGITS_RE = re.compile(r"[0-9]+")


def parse_query(src: str) -> Query:
    """Parse query source into an AST; QuerySyntaxError on anything outside the subset."""
    if not isinstance(src, str):
        raise QuerySyntaxError(0, f"query must be a string, got {type(src).__name__}")
    pos = 0
    n = len(src)
    steps: list[Step] = []
    if not src.startswith("/"):
        raise QuerySyntaxError(0, "query must start with '/' or '//'")
    while pos < n:
        if steps and isinstance(steps[-1].test, TextTest):
            raise QuerySyntaxError(pos, "text() is only allowed as the final step")
        if src.startswith("//", pos):
            axis = Axis.DESCENDANT
            pos += 2
        elif src.startswith("/", pos):
            axis = Axis.CHILD
            pos += 1
        else:
            raise QuerySyntaxError(pos, f"expected '/' or '//' before {src[pos:pos + 10]!r}")
        step, pos = _parse_step(src, pos, axis)
        steps.append(step)
    if not steps:
        raise QuerySyntaxError(pos, "expected at least one step")
    return Query(steps=tuple(steps))


def _parse_step(src: str, pos: int, axis: Axis) -> tuple[Step, int]:
    n = len(src)
    if pos >= n:
        raise QuerySyntaxError(pos, "expected a step")
    test: NameTest | AnyElement | TextTest
    if src[pos] == "*":
        pos += 1
        m = _NCNAME_RE.match(src, pos)
        if m:
            test = NameTest(m.group())
            pos = m.end()
        else:
            test = AnyElement()
    else:
        m = _NCNAME_RE.match(src, pos)
        if m is None:
            raise QuerySyntaxError(pos, f"expected a step, found {src[pos:pos + 10]!r}")
        name = m.group()
        pos = m.end()
        if name == "text" and src.startswith("()", pos):
            test = TextTest()
            pos += 2
        else:
            test = NameTest(name)
    predicates: list[PositionPredicate | AttributePredicate] = []
    while pos < n and src[pos] == "[":
        pred, pos = _parse_predicate(src, pos + 1)
        predicates.append(pred)
    if pos < n and src[pos] not in "/":
        raise QuerySyntaxError(pos, f"unexpected {src[pos]!r}")
    return Step(axis, test, tuple(predicates)), pos


def _parse_predicate(src: str, pos: int) -> tuple[PositionPredicate | AttributePredicate, int]:
    m = _DIGITS_RE.match(src, pos)
    if m:
        index = int(m.group())
        if index < 1:
            raise QuerySyntaxError(pos, "positional index must be >= 1")
        pos = m.end()
        pred: PositionPredicate | AttributePredicate = PositionPredicate(index)
    elif src.startswith("@", pos):
        m = _NCNAME_RE.match(src, pos + 1)
        if m is None:
            raise QuerySyntaxError(pos + 1, "expected an attribute name")
        name = m.group()
        pos = m.end()
        if not src.startswith("=", pos):
            raise QuerySyntaxError(pos, "expected '=' in attribute predicate")
        pos += 1
        if pos >= len(src) or src[pos] not in "'\"":
            raise QuerySyntaxError(pos, "expected a quoted attribute value")
        quote = src[pos]
        end = src.find(quote, pos + 1)
        if end < 0:
            raise QuerySyntaxError(pos, "unterminated attribute value")
        pred = AttributePredicate(name, src[pos + 1 : end])
        pos = end + 1
    else:
        raise QuerySyntaxError(pos, "expected a positional index or '@name=value'")
    if not src.startswith("]", pos):
        raise QuerySyntaxError(pos, "expected ']'")
    return pred, pos + 1


# --------------------------------------------------------------------------
# Document model


@dataclass
class XmlElement:
    name: str
    namespace: str | None = None
    attributes: dict[str, str] = field(default_factory=dict)
    content: tuple["XmlElement | str", ...] = ()
    doc_index: int = -1

    @property
    def children(self) -> list["XmlElement"]:
        return [c for c in self.content if isinstance(c, XmlElement)]

    def direct_text(self) -> str | None:
        """Concatenated direct text nodes, trimmed; None when there are none."""
        parts = [c for c in self.content if isinstance(c, str)]
        if not parts:
            return None
        return "".join(parts).strip()


@dataclass
class XmlDoc:
    root: XmlElement

    doc_index = -1  # the document node precedes every element


def _split_tag(tag: str) -> tuple[str | None, str]:
    if tag.startswith("{"):
        uri, _, local = tag[1:].partition("}")
        return uri, local
    return None, tag


def _convert(elem: ET.Element, counter: list[int]) -> XmlElement:
    namespace, local = _split_tag(elem.tag)
    index = counter[0]
    counter[0] += 1
    attributes = {_split_tag(k)[1]: v for k, v in elem.attrib.items()}
    content: list[XmlElement | str] = []
    if elem.text:
        content.append(elem.text)
    for child in elem:
        content.append(_convert(child, counter))
        if child.tail:
            content.append(child.tail)
    return XmlElement(local, namespace, attributes, tuple(content), index)


def parse_document(data: bytes | str) -> XmlDoc:
    """Parse XML bytes into the internal document model."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, column = exc.position if exc.position else (None, None)
        raise InputSyntaxError(f"malformed XML: {exc.msg}", line, column) from exc
    except (ValueError, TypeError) as exc:
        raise InputSyntaxError(f"malformed XML: {exc}") from exc
    return XmlDoc(_convert(root, [0]))


def canonical_xml(elem: XmlElement) -> str:
    """Serialize an element canonically: sorted attributes, no namespaces, no self-closing."""
    attrs = "".join(
        ' {}="{}"'.format(k, escape(v, {'"': "&quot;"})) for k, v in sorted(elem.attributes.items())
    )
    inner = "".join(
        escape(c) if isinstance(c, str) else canonical_xml(c) for c in elem.content
    )
    return f"<{elem.name}{attrs}>{inner}</{elem.name}>"


# --------------------------------------------------------------------------
# Evaluation

_Node = XmlDoc | XmlElement


def _children(node: _Node) -> list[XmlElement]:
    if isinstance(node, XmlDoc):
        return [node.root]
    return node.children


def _self_and_descendants(node: _Node) -> list[_Node]:
    out: list[_Node] = [node]
    stack = list(reversed(_children(node)))
    while stack:
        elem = stack.pop()
        out.append(elem)
        stack.extend(reversed(elem.children))
    return out


def _dedup_doc_order(nodes: list[_Node]) -> list[_Node]:
    seen: set[int] = set()
    unique = []
    for node in nodes:
        if id(node) not in seen:
            seen.add(id(node))
            unique.append(node)
    unique.sort(key=lambda n: n.doc_index)
    return unique


def _expand(contexts: list[_Node], axis: Axis) -> list[_Node]:
    if axis is Axis.CHILD:
        return contexts
    out: list[_Node] = []
    for node in contexts:
        out.extend(_self_and_descendants(node))
    return _dedup_doc_order(out)


def _matches(elem: XmlElement, test: NameTest | AnyElement) -> bool:
    if isinstance(test, AnyElement):
        return True
    return elem.name == test.name


def select(doc: XmlDoc, query: Query) -> list[XmlElement]:
    """Elements selected by a query whose final step is an element test."""
    if query.returns_text:
        raise ValueError("query selects text, not elements")
    return _select_elements(doc, query.steps)


def _select_elements(doc: XmlDoc, steps: tuple[Step, ...]) -> list[XmlElement]:
    contexts: list[_Node] = [doc]
    for step in steps:
        bases = _expand(contexts, step.axis)
        found: list[_Node] = []
        for base in bases:
            candidates = [c for c in _children(base) if _matches(c, step.test)]
            for pred in step.predicates:
                if isinstance(pred, PositionPredicate):
                    if pred.index <= len(candidates):
                        candidates = [candidates[pred.index - 1]]
                    else:
                        candidates = []
                else:
                    candidates = [
                        c for c in candidates if c.attributes.get(pred.name) == pred.value
                    ]
            found.extend(candidates)
        contexts = _dedup_doc_order(found)
    return contexts  # type: ignore[return-value]  # steps select elements only


def eval_query(doc: XmlDoc, query: Query) -> list[str]:
    """Evaluate a query over a document, in document order.

    Queries ending in text() yield the trimmed direct text per selected
    element; element queries yield canonical serializations.  An empty
    selection yields an empty list.
    """
    if not query.returns_text:
        return [canonical_xml(e) for e in _select_elements(doc, query.steps)]
    *element_steps, text_step = query.steps
    contexts = _select_elements(doc, tuple(element_steps)) if element_steps else [doc]
    holders = _expand(list(contexts), text_step.axis)
    texts = []
    for holder in holders:
        if isinstance(holder, XmlDoc):
            continue
        text = holder.direct_text()
        if text is not None:
            texts.append(text)
    for pred in text_step.predicates:
        if isinstance(pred, PositionPredicate):
            texts = [texts[pred.index - 1]] if pred.index <= len(texts) else []
        else:
            texts = []  # text nodes carry no attributes
    return texts
