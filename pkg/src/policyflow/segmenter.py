"""Turn a privacy-policy HTML page into self-contained text segments.

Four passes run over the parsed DOM:

1. ``<head>``, ``<footer>``, ``<style>`` and ``<script>`` subtrees are dropped.
2. Paragraphs, headings and lists that are not nested inside another list or
   a table are turned into lines. Headings are prefixed with ``*``, list
   items with ``-``; paragraphs lose the text of their links, and list items
   that contain links are skipped altogether.
3. Every data row of a table becomes one segment made of the header row and
   the data row, both joined with ``|`` and prefixed with ``_table_``.
4. A run of bullet lines is merged into the heading or paragraph directly in
   front of it.
"""
from __future__ import annotations

import html as html_lib
import re
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from bs4 import BeautifulSoup, Comment, NavigableString, Tag
from bs4.element import CData, Declaration, Doctype, ProcessingInstruction

from .errors import EmptyDocument, IndexOutOfRange, MalformedHtml

HEADING = "heading"
PARAGRAPH = "paragraph"
BULLET_GROUP = "bullet_group"
TABLE_ROW = "table_row"
SEGMENT_KINDS = (HEADING, PARAGRAPH, BULLET_GROUP, TABLE_ROW)

TABLE_MARKER = "_table_"

_STRIPPED_TAGS = ("head", "footer", "style", "script")
_HEADING_TAGS = ("h1", "h2", "h3", "h4", "h5")
_LIST_TAGS = ("ol", "ul")
_WALKED_TAGS = frozenset(("p", "li") + _HEADING_TAGS + _LIST_TAGS)
# tags whose boundaries separate words when flattening to text
_BLOCK_TAGS = frozenset(
    ("address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt",
     "figcaption", "figure", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr",
     "li", "main", "nav", "ol", "p", "pre", "section", "table", "tbody", "td",
     "tfoot", "th", "thead", "tr", "ul")
)
_SKIPPED_STRINGS = (Comment, CData, Declaration, Doctype, ProcessingInstruction)
_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class PolicyDocument:
    id: str
    org_name: str
    html: str
    source_uri: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.html, str) or not self.html.strip():
            raise ValueError(f"policy {self.id!r} has empty html")


@dataclass(frozen=True)
class Segment:
    index: int
    kind: str
    text: str
    raw_lines: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {"index": self.index, "kind": self.kind, "text": self.text}


def collapse_ws(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _element_text(element: Tag, *, skip_anchors: bool = False, skip_lists: bool = False) -> str:
    parts: List[str] = []

    def walk(node):
        for child in node.children:
            if isinstance(child, NavigableString):
                if not isinstance(child, _SKIPPED_STRINGS):
                    parts.append(str(child))
                continue
            if not isinstance(child, Tag):
                continue
            if skip_anchors and child.name == "a":
                continue
            if skip_lists and child.name in _LIST_TAGS:
                continue
            block = child.name in _BLOCK_TAGS
            if block:
                parts.append(" ")
            walk(child)
            if block:
                parts.append(" ")

    walk(element)
    return collapse_ws("".join(parts))


def _child_tags(element: Tag) -> List[Tag]:
    return [c for c in element.children if isinstance(c, Tag)]


def _nested_lists(item: Tag) -> List[Tag]:
    """Lists owned directly by ``item`` rather than by a deeper list item."""
    return [
        lst for lst in item.find_all(_LIST_TAGS)
        if lst.find_parent(("li",) + _LIST_TAGS) is item
    ]


def _flatten_item(item: Tag) -> List[str]:
    own = _element_text(item, skip_lists=True)
    nested = _nested_lists(item)
    lines: List[str] = []
    for lst in nested:
        for line in flatten_nested_list(lst):
            lines.append(f"{own}: {line}" if own else line)
    if not lines and own:
        lines.append(own)
    return lines


def flatten_nested_list(list_element: Tag) -> List[str]:
    """Depth-first leaf texts of a (possibly nested) list, one per line.

    A nested item's parent text is prepended with ``": "`` so that each line
    still reads on its own, e.g. ``contact: phone``.
    """
    lines: List[str] = []
    for child in _child_tags(list_element):
        if child.name == "li":
            lines.extend(_flatten_item(child))
        elif child.name in _LIST_TAGS:
            lines.extend(flatten_nested_list(child))
    return lines


def _inside(element: Tag, names) -> bool:
    return element.find_parent(names) is not None


def _table_rows(table: Tag) -> List[Tag]:
    return [tr for tr in table.find_all("tr") if tr.find_parent("table") is table]


def _own_cells(row: Tag) -> List[Tag]:
    return [cell for cell in row.find_all(["td", "th"]) if cell.find_parent("tr") is row]


def table_row_texts(table: Tag) -> List[str]:
    """One ``_table_header\\nrow`` text per data row of ``table``."""
    rows = []
    for tr in _table_rows(table):
        cells = _own_cells(tr)
        texts = [_element_text(c) for c in cells]
        if any(texts):
            rows.append((any(c.name == "th" for c in cells), texts))
    if not rows:
        return []
    header_at = next((i for i, (has_th, _) in enumerate(rows) if has_th), 0)
    header = "|".join(rows[header_at][1])
    return [f"{TABLE_MARKER}{header}\n{'|'.join(texts)}" for _, texts in rows[header_at + 1:]]


def _process(element: Tag, items: List[Tuple[str, str]]) -> None:
    if _inside(element, "table"):
        return
    name = element.name
    if name == "p":
        text = _element_text(element, skip_anchors=True)
        if text:
            items.append((PARAGRAPH, text))
    elif name in _HEADING_TAGS:
        text = _element_text(element)
        if text:
            items.append((HEADING, "*" + text))
    elif name == "li":
        if element.find("a") is not None:
            return
        for line in _flatten_item(element):
            items.append(("bullet", "- " + line))
    elif name in _LIST_TAGS:
        for child in _child_tags(element):
            _process(child, items)


def _parse(html: str) -> BeautifulSoup:
    try:
        return BeautifulSoup(html, "html.parser")
    except Exception as exc:  # html.parser only fails on unusable input
        raise MalformedHtml(str(exc)) from exc


def _collect_items(soup: BeautifulSoup) -> List[Tuple[str, str]]:
    for tag in soup.find_all(_STRIPPED_TAGS):
        tag.decompose()
    items: List[Tuple[str, str]] = []
    for element in soup.find_all(True):
        if element.name == "table":
            items.extend((TABLE_ROW, text) for text in table_row_texts(element))
        elif element.name in _WALKED_TAGS and not _inside(element, list(_LIST_TAGS)):
            _process(element, items)
    return items


def _merge_bullets(items: List[Tuple[str, str]]) -> List[Tuple[str, List[str]]]:
    merged: List[Tuple[str, List[str]]] = []
    prev_kind = None
    for kind, text in items:
        if kind == "bullet":
            if prev_kind == "bullet":
                merged[-1][1].append(text)
            elif merged and merged[-1][0] in (HEADING, PARAGRAPH):
                _, lines = merged.pop()
                merged.append((BULLET_GROUP, lines + [text]))
            else:
                merged.append((BULLET_GROUP, [text]))
        else:
            merged.append((kind, text.split("\n")))
        prev_kind = kind
    return merged


def segment_html(doc: PolicyDocument) -> List[Segment]:
    """Segment ``doc.html``; raises :class:`EmptyDocument` if nothing survives."""
    if not isinstance(doc.html, str):
        raise MalformedHtml("html must be text")
    soup = _parse(doc.html)
    merged = _merge_bullets(_collect_items(soup))
    segments = [
        Segment(index=i, kind=kind, text="\n".join(lines), raw_lines=tuple(lines))
        for i, (kind, lines) in enumerate(merged)
    ]
    if not segments:
        raise EmptyDocument(f"no text segments in policy {doc.id!r}")
    return segments


def neighbors(segments, i: int) -> Tuple[Optional[Segment], Optional[Segment]]:
    if not 0 <= i < len(segments):
        raise IndexOutOfRange(f"segment index {i} outside 0..{len(segments) - 1}")
    prev = segments[i - 1] if i > 0 else None
    nxt = segments[i + 1] if i + 1 < len(segments) else None
    return prev, nxt


def render_segments_html(segments) -> str:
    """Render segments back into minimal HTML that segments to the same lines."""
    esc = html_lib.escape
    out = ["<html><body>"]
    for seg in segments:
        lines = seg.text.split("\n")
        if seg.kind == TABLE_ROW:
            header = lines[0][len(TABLE_MARKER):].split("|")
            row = lines[1].split("|")
            out.append("<table><tr>" + "".join(f"<th>{esc(c)}</th>" for c in header) + "</tr>")
            out.append("<tr>" + "".join(f"<td>{esc(c)}</td>" for c in row) + "</tr></table>")
            continue
        bullets = [ln for ln in lines if ln.startswith("- ")]
        for line in lines[: len(lines) - len(bullets)]:
            if line.startswith("*"):
                out.append(f"<h2>{esc(line[1:])}</h2>")
            else:
                out.append(f"<p>{esc(line)}</p>")
        if bullets:
            out.append("<ul>" + "".join(f"<li>{esc(b[2:])}</li>" for b in bullets) + "</ul>")
    out.append("</body></html>")
    return "\n".join(out)
