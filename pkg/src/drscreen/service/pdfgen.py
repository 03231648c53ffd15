"""Minimal deterministic PDF writer for screening reports.

Emits a single-page, text-only PDF 1.4 document with the built-in Helvetica
font.  No timestamps, IDs, or compression are embedded, so identical inputs
produce byte-identical files; that property is load-bearing for report
caching and for the service tests.
"""

from __future__ import annotations

__all__ = ["render_text_pdf"]

_PAGE_W = 612
_PAGE_H = 792
_MARGIN = 72
_LEADING = 14
_FONT_SIZE = 11


def _escape(text: str) -> str:
    return text.replace("\\", r"\\").replace("(", r"\(").replace(")", r"\)")


def render_text_pdf(lines: list[str], title_lines: int = 1) -> bytes:
    """Lay the given lines down one page, top to bottom.

    The first `title_lines` lines render slightly larger.  Overflowing lines
    are clipped at the page bottom (reports stay single-page by contract).
    """
    max_lines = (_PAGE_H - 2 * _MARGIN) // _LEADING
    lines = lines[: int(max_lines)]

    ops = [f"BT /F1 {_FONT_SIZE + 3} Tf {_MARGIN} {_PAGE_H - _MARGIN} Td {_LEADING} TL"]
    for i, line in enumerate(lines):
        if i == title_lines:
            ops.append(f"/F1 {_FONT_SIZE} Tf")
        ops.append(f"({_escape(line)}) Tj T*")
    ops.append("ET")
    content = "\n".join(ops).encode("latin-1", errors="replace")

    objects = [
        b"<< /Type /Catalog /Pages 2 0 R >>",
        b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>",
        (
            b"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] "
            b"/Resources << /Font << /F1 4 0 R >> >> /Contents 5 0 R >>"
        ),
        b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>",
        b"<< /Length " + str(len(content)).encode() + b" >>\nstream\n" + content + b"\nendstream",
    ]

    out = bytearray(b"%PDF-1.4\n")
    offsets = [0]
    for num, body in enumerate(objects, start=1):
        offsets.append(len(out))
        out += f"{num} 0 obj\n".encode() + body + b"\nendobj\n"
    xref_pos = len(out)
    out += f"xref\n0 {len(objects) + 1}\n".encode()
    out += b"0000000000 65535 f \n"
    for off in offsets[1:]:
        out += f"{off:010d} 00000 n \n".encode()
    out += (
        f"trailer\n<< /Size {len(objects) + 1} /Root 1 0 R >>\n"
        f"startxref\n{xref_pos}\n%%EOF\n"
    ).encode()
    return bytes(out)
