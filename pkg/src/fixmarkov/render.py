"""Plain-text renderings of reports and test listings."""

from __future__ import annotations

import numpy as np


def fmt_p(p: float) -> str:
    if p < 1e-15:
        return "< 1e-15"
    return f"{p:.3g}"


def _p_clause(p: float, name: str) -> str:
    text = fmt_p(p)
    return f"{name} {text}" if text.startswith("<") else f"{name} = {text}"


def fmt_bf(bf: float) -> str:
    return f"{bf:.2g}" if bf < 0.01 else f"{bf:.3g}"


def transition_block(pi, p, digits: int = 2) -> str:
    """Initial distribution and transition matrix as aligned rows."""
    pi, p = np.asarray(pi, float), np.asarray(p, float)
    cell = lambda v: f"{v:.{digits}f}"
    lines = ["pi = ( " + "  ".join(cell(v) for v in pi) + " )"]
    for i, row in enumerate(p):
        lead = "p  = ( " if i == 0 else "       "
        tail = " )" if i == len(p) - 1 else ""
        lines.append(lead + "  ".join(cell(v) for v in row) + tail)
    return "\n".join(lines)


def report_summary(report) -> str:
    k = report.selected_k
    score = report.per_k[k]
    head = (f"image {report.image_id} ({report.scheme.value}): k = {k}, "
            f"BF = {fmt_bf(report.strongest_bf)} (log2 {report.strongest_log2_bf:.2f}, "
            f"MC se {score.mc_std_error:.2g}, closed form {fmt_bf(score.closed_form_bf)})")
    return head + "\n" + transition_block(score.pi_mean, score.p_mean)


def interval_listing(rows: dict) -> str:
    """Rows of ``label: [lo, hi]  p-value = p`` for paired comparisons."""
    out = []
    for label, res in rows.items():
        lo, hi = res["ci"]
        out.append(f"{label}: [{lo:.2f}, {hi:.2f}]  {_p_clause(res['p_value'], 'p-value')}")
    return "\n".join(out)


def p_listing(rows: dict) -> str:
    return "\n".join(f"{label}: {_p_clause(res['p_value'], 'p')}" for label, res in rows.items())


def ranking_table(ranked, scheme: str, n: int = 4) -> str:
    """Best and worst ``n`` images for one scheme."""
    best = ranked[:n]
    worst = list(reversed(ranked[-n:]))
    lines = [f"{scheme}: best (smallest BF)          worst (largest BF)"]
    for i in range(max(len(best), len(worst))):
        left = f"image {best[i][0]:>4}  BF {fmt_bf(best[i][1]):>8}" if i < len(best) else ""
        right = f"image {worst[i][0]:>4}  BF {fmt_bf(worst[i][1]):>8}" if i < len(worst) else ""
        lines.append(f"  {left:<30}  {right}")
    return "\n".join(lines)
