"""Minimal dependency-free SVG line plots for experiment summaries."""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def line_plot(series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
              width: int = 480, height: int = 320) -> str:
    """``series`` maps a label to ``(xs, ys)``; returns an SVG document."""
    pad_l, pad_r, pad_t, pad_b = 56, 120, 28, 40
    xs_all = [x for xs, _ in series.values() for x in xs]
    ys_all = [y for _, ys in series.values() for y in ys]
    if not xs_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(min(ys_all), 0.0), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(x):
        return pad_l + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return pad_t + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + ph}" x2="{pad_l + pw}" y2="{pad_t + ph}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + ph}" stroke="black"/>',
    ]
    for frac in (0.0, 0.5, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{sx(xv):.1f}" y="{pad_t + ph + 14}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<text x="{pad_l - 4}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{pad_l + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="14" y="{pad_t + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 14 {pad_t + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>')
        for x, y in zip(xs, ys):
            out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        ly = pad_t + 14 * i + 8
        out.append(f'<line x1="{width - pad_r + 10}" y1="{ly}" x2="{width - pad_r + 28}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{width - pad_r + 32}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def report_plot(report) -> str:
    """Pick a sensible default plot for an ExperimentReport."""
    rows = report.rows
    if report.experiment == "recall":
        series = {}
        dups = sorted({r["duplication"] for r in rows})
        budgets = sorted({r["budget"] for r in rows})
        for method in sorted({r["method"] for r in rows}):
            for dup in dups:
                ys = []
                for b in budgets:
                    vals = [r["AR"] for r in rows
                            if r["method"] == method and r["duplication"] == dup and r["budget"] == b]
                    ys.append(sum(vals) / len(vals))
                series[f"{method} x{dup}"] = (budgets, ys)
        return line_plot(series, "Recall vs query budget", "budget", "AR@budget")
    if report.experiment == "gradient":
        sweep = [r for r in rows if r["kind"] == "sweep"]
        ps = [r["p"] for r in sweep]
        return line_plot(
            {"formula": (ps, [r["alpha_eq1"] for r in sweep]),
             "measured": (ps, [r["alpha_empirical"] for r in sweep])},
            "Duplicate gradient ratio", "p", "alpha",
        )
    series = {}
    for sched in sorted({r["schedule"] for r in rows}):
        stages = sorted({r["stage"] for r in rows if r["schedule"] == sched})
        ys = []
        for s in stages:
            vals = [r["AR"] for r in rows if r["schedule"] == sched and r["stage"] == s]
            ys.append(sum(vals) / len(vals))
        series[sched] = (stages, ys)
    return line_plot(series, "Recall per cascade stage", "stage", "AR")
