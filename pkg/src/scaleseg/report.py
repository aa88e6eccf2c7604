"""Shared output formatting: key=value record lines and aligned tables."""


def format_value(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def format_records(records):
    """One 'key=value key=value ...' line per record dict."""
    return [" ".join(f"{k}={format_value(v)}" for k, v in rec.items())
            for rec in records]


def format_table(headers, rows):
    """Aligned plain-text table; every cell is str()-able."""
    cells = [[format_value(c) for c in row] for row in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return lines
