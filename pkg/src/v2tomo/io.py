"""Plain-text instance and image files.

Instance file::

    DTOMO 1
    nodes 4
    rays 4
    ray 0 : 0 1 = 1
    ...
    seed 0

Ray ids must be distinct non-negative integers; the canonical form lists
rays in id order, renumbered from 0, and always carries the seed line.
Blank lines and ``#`` comments are ignored.

Image file: ``DIMG d1 [d2 [d3]]`` followed by rows of ``0``/``1``; a 3D
image is ``d1`` layers of ``d2`` rows, separated by single blank lines.
"""
from __future__ import annotations

import re

import numpy as np

from .model import BinaryImage, ModelError, RaySystem, TomographyInstance
from .problem import InconsistentDataError, find_ray_violation, make_instance


class ParseError(ValueError):
    """Malformed file.  ``category`` is a short machine-readable tag."""

    def __init__(self, message: str, line: int | None = None, category: str = "syntax"):
        self.line = line
        self.category = category
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


_RAY = re.compile(r"^ray\s+(\d+)\s*:\s*([\d\s]*?)\s*=\s*(-?\d+)$")


def _content_lines(text: str):
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield number, line


def _keyword_int(entry, keyword: str) -> int:
    number, line = entry
    parts = line.split()
    if len(parts) != 2 or parts[0] != keyword or not re.fullmatch(r"-?\d+", parts[1]):
        raise ParseError(f"expected '{keyword} <int>', got {line!r}", number)
    return int(parts[1])


def parse_instance(text: str) -> TomographyInstance:
    lines = list(_content_lines(text))
    if not lines or lines[0][1].split() != ["DTOMO", "1"]:
        raise ParseError("missing 'DTOMO 1' header", lines[0][0] if lines else 1, "header")
    if len(lines) < 3:
        raise ParseError("truncated header", lines[-1][0], "header")
    nodes = _keyword_int(lines[1], "nodes")
    count = _keyword_int(lines[2], "rays")
    if nodes < 1 or count < 1:
        raise ParseError("nodes and rays must be positive", lines[1][0], "header")

    body = lines[3:]
    seed = 0
    if body and body[-1][1].startswith("seed"):
        seed = _keyword_int(body[-1], "seed")
        body = body[:-1]
    if len(body) != count:
        where = body[-1][0] if body else lines[2][0]
        raise ParseError(f"header announces {count} rays, found {len(body)}", where, "count")

    entries: dict[int, tuple[int, tuple[int, ...], int]] = {}
    for number, line in body:
        m = _RAY.match(line)
        if not m:
            raise ParseError(f"expected 'ray <id> : <nodes> = <P>', got {line!r}", number)
        rid = int(m.group(1))
        members = tuple(int(a) for a in m.group(2).split())
        if rid in entries:
            raise ParseError(f"duplicate ray id {rid}", number, "duplicate")
        if not members:
            raise ParseError(f"ray {rid} is empty", number, "range")
        bad = [a for a in members if a >= nodes]
        if bad:
            raise ParseError(f"node index {bad[0]} out of range for {nodes} nodes", number, "range")
        if len(set(members)) != len(members):
            raise ParseError(f"ray {rid} repeats a node", number, "range")
        proj = int(m.group(3))
        if not 0 <= proj <= len(members):
            raise ParseError(f"infeasible projection P={proj} on a ray of {len(members)} nodes",
                             number, "infeasible")
        entries[rid] = (number, members, proj)

    ids = sorted(entries)
    rays = [entries[i][1] for i in ids]
    violation = find_ray_violation(nodes, rays)
    if violation is not None:
        raise ParseError(violation.message, entries[ids[violation.pair[1]]][0], "intersection")
    try:
        return make_instance(RaySystem(nodes, tuple(rays)), [entries[i][2] for i in ids], seed)
    except InconsistentDataError as err:
        raise ParseError(str(err), None, "infeasible") from err
    except ModelError as err:
        raise ParseError(str(err), None, "invalid") from err


def serialize_instance(instance: TomographyInstance) -> str:
    out = ["DTOMO 1", f"nodes {instance.node_count}", f"rays {instance.ray_count}"]
    for r, ray in enumerate(instance.rays.rays):
        out.append(f"ray {r} : {' '.join(map(str, ray))} = {instance.projections[r]}")
    out.append(f"seed {0 if instance.seed is None else instance.seed}")
    return "\n".join(out) + "\n"


def parse_image(text: str) -> BinaryImage:
    lines = text.splitlines()
    header = lines[0].split() if lines else []
    if len(header) < 2 or header[0] != "DIMG" or len(header) > 4:
        raise ParseError("expected 'DIMG d1 [d2 [d3]]' header", 1, "header")
    try:
        dims = tuple(int(d) for d in header[1:])
    except ValueError:
        raise ParseError("image dimensions must be integers", 1, "header") from None
    if any(d < 1 for d in dims):
        raise ParseError("image dimensions must be positive", 1, "header")

    row_len = dims[-1]
    layers = dims[0] if len(dims) == 3 else 1
    rows_per_layer = dims[-2] if len(dims) >= 2 else 1
    rows = []
    number = 1
    for layer in range(layers):
        if layer:
            number += 1
            if number > len(lines) or lines[number - 1].strip():
                raise ParseError("expected a blank line between layers", number, "shape")
        for _ in range(rows_per_layer):
            number += 1
            if number > len(lines):
                raise ParseError("image ends early", number, "shape")
            row = lines[number - 1].strip()
            if len(row) != row_len:
                raise ParseError(f"row of length {len(row)}, expected {row_len}", number, "shape")
            if set(row) - {"0", "1"}:
                raise ParseError("rows may contain only 0 and 1", number, "syntax")
            rows.append(row)
    if any(line.strip() for line in lines[number:]):
        raise ParseError("unexpected content after the image", number + 1, "shape")
    values = np.frombuffer("".join(rows).encode(), dtype=np.uint8) - ord("0")
    return BinaryImage(dims, values.astype(np.int8))


def serialize_image(image: BinaryImage) -> str:
    dims = image.dims
    out = ["DIMG " + " ".join(map(str, dims))]
    chars = "".join("1" if v else "0" for v in image.values.tolist())
    row_len = dims[-1]
    rows = [chars[i:i + row_len] for i in range(0, len(chars), row_len)]
    if len(dims) == 3:
        per_layer = dims[1]
        for layer in range(dims[0]):
            if layer:
                out.append("")
            out.extend(rows[layer * per_layer:(layer + 1) * per_layer])
    else:
        out.extend(rows)
    return "\n".join(out) + "\n"


def read_instance(path) -> TomographyInstance:
    with open(path, encoding="utf-8") as fh:
        return parse_instance(fh.read())


def read_image(path) -> BinaryImage:
    with open(path, encoding="utf-8") as fh:
        return parse_image(fh.read())


def write_text(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
