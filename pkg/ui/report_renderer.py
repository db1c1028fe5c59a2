# ui/report_renderer.py
# -*- coding: utf-8 -*-

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from markdown import markdown


@dataclass(frozen=True)
class ReportTheme:
    text: str = "#111827"
    muted: str = "#6B7280"
    border: str = "#E5E7EB"
    panel: str = "#FFFFFF"
    codebg: str = "#F3F4F6"
    passed: str = "#047857"
    failed: str = "#B91C1C"


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _flatten(report: Mapping[str, object], prefix: str = "", depth: int = 2) -> List[Tuple[str, str]]:
    """Scalar leaves of a nested report as (dotted key, text); lists are counted, not expanded."""
    rows: List[Tuple[str, str]] = []
    for key in sorted(report):
        value = report[key]
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            if depth > 0:
                rows.extend(_flatten(value, name + ".", depth - 1))
        elif isinstance(value, (list, tuple)):
            if value and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value) \
                    and len(value) <= 6:
                rows.append((name, ", ".join(_fmt(v) for v in value)))
            else:
                rows.append((name, f"{len(value)} item(s)"))
        elif value is not None:
            rows.append((name, _fmt(value)))
    return rows


class ReportRenderer:
    """
    Run summary: Markdown built from the JSON report, then HTML.
    Nothing time-dependent goes in, so reruns render byte-identical pages.
    """

    def __init__(self, theme: Optional[ReportTheme] = None):
        self.theme = theme or ReportTheme()

    def summary_markdown(self, subcommand: str, provenance: Mapping[str, object],
                         report: Mapping[str, object], files: Sequence[str] = ()) -> str:
        lines = [f"# movlab {subcommand}", ""]
        passed = report.get("passed")
        if passed is not None:
            kind = "success" if passed else "danger"
            lines += [f'!!! {kind} "{"All checks passed" if passed else "Checks failed"}"', ""]
            failures = report.get("failures") or []
            if failures:
                lines += [f"    Failed: {', '.join(str(f) for f in failures)}", ""]
        lines += ["## Provenance", "", "| key | value |", "|---|---|"]
        lines += [f"| {k} | `{provenance[k]}` |" for k in sorted(provenance)]
        lines += ["", "## Results", "", "| quantity | value |", "|---|---|"]
        lines += [f"| {k} | {v} |" for k, v in _flatten(report) if k not in ("passed", "failures")]
        if files:
            lines += ["", "## Files", ""]
            lines += [f"- `{os.path.basename(f)}`" for f in files]
        return "\n".join(lines) + "\n"

    def extensions(self) -> Tuple[List[str], Dict]:
        return ["extra", "sane_lists", "tables", "admonition"], {}

    def css(self) -> str:
        t = self.theme
        return f"""
        body {{
          font-family: -apple-system, BlinkMacSystemFont, "Segoe UI", Roboto, Arial, sans-serif;
          margin: 14px;
          color: {t.text};
          background: {t.panel};
          font-size: 14px;
          line-height: 1.55;
        }}
        table {{ border-collapse: collapse; width: 100%; margin: 0.8em 0; font-size: 0.95em; }}
        th, td {{ border: 1px solid {t.border}; padding: 6px 10px; vertical-align: top; }}
        code {{ background: {t.codebg}; padding: 2px 5px; border-radius: 6px; }}
        .admonition {{ border: 1px solid {t.border}; border-radius: 10px; padding: 10px 12px; }}
        .admonition.success .admonition-title {{ color: {t.passed}; font-weight: 800; }}
        .admonition.danger .admonition-title {{ color: {t.failed}; font-weight: 800; }}
        """

    def to_html(self, md_text: str) -> str:
        exts, cfg = self.extensions()
        body = markdown(md_text or "", extensions=exts, extension_configs=cfg, output_format="html5")
        return f"""<html>
  <head>
    <meta charset="utf-8"/>
    <style>{self.css()}</style>
  </head>
  <body>{body}</body>
</html>
"""
