"""Plain-text SVG plots and the BD-rate table from sweep CSVs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

from ..metrics import CSVFormatError, RDCurve, bd_rate, points_from_csv

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
WIDTH, HEIGHT = 480, 360
MARGIN = (60, 20, 30, 50)  # left, right, top, bottom
METRIC_LABELS = {"psnr_db": "PSNR (dB)", "pdist": "P-dist", "ssim": "SSIM", "bpp": "bpp"}


def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def _span(values):
    lo, hi = min(values), max(values)
    if hi == lo:
        pad = abs(lo) * 0.05 or 1.0
    else:
        pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class _Plot:
    def __init__(self, title, xlabel, ylabel, xs, ys):
        self.x0, self.x1 = _span(xs)
        self.y0, self.y1 = _span(ys)
        self.parts = []
        left, right, top, bottom = MARGIN
        self.box = (left, top, WIDTH - right, HEIGHT - bottom)
        self.legend = []
        self._frame(title, xlabel, ylabel)

    def sx(self, x):
        l, _, r, _ = self.box
        return l + (x - self.x0) / (self.x1 - self.x0) * (r - l)

    def sy(self, y):
        _, t, _, b = self.box
        return b - (y - self.y0) / (self.y1 - self.y0) * (b - t)

    def _frame(self, title, xlabel, ylabel):
        l, t, r, b = self.box
        p = self.parts
        p.append(f'<rect x="{l}" y="{t}" width="{r - l}" height="{b - t}" fill="none" stroke="#000"/>')
        p.append(f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>')
        p.append(f'<text x="{(l + r) / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle" font-size="11">'
                 f'{escape(xlabel)}</text>')
        p.append(f'<text x="14" y="{(t + b) / 2:.1f}" text-anchor="middle" font-size="11" '
                 f'transform="rotate(-90 14 {(t + b) / 2:.1f})">{escape(ylabel)}</text>')
        for v in _ticks(self.x0, self.x1):
            x = self.sx(v)
            p.append(f'<line x1="{x:.1f}" y1="{b}" x2="{x:.1f}" y2="{b + 4}" stroke="#000"/>')
            p.append(f'<text x="{x:.1f}" y="{b + 16}" text-anchor="middle" font-size="9">{v:.3g}</text>')
        for v in _ticks(self.y0, self.y1):
            y = self.sy(v)
            p.append(f'<line x1="{l - 4}" y1="{y:.1f}" x2="{l}" y2="{y:.1f}" stroke="#000"/>')
            p.append(f'<text x="{l - 6}" y="{y + 3:.1f}" text-anchor="end" font-size="9">{v:.3g}</text>')

    def series(self, xs, ys, name, color, dashed=False, labels=None):
        pts = " ".join(f"{self.sx(x):.1f},{self.sy(y):.1f}" for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="4 3"' if dashed else ""
        if len(xs) > 1:
            self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}"{dash}/>')
        for i, (x, y) in enumerate(zip(xs, ys)):
            self.parts.append(f'<circle cx="{self.sx(x):.1f}" cy="{self.sy(y):.1f}" r="2.5" fill="{color}"/>')
            if labels:
                self.parts.append(f'<text x="{self.sx(x) + 4:.1f}" y="{self.sy(y) - 4:.1f}" font-size="8" '
                                  f'fill="{color}">{escape(labels[i])}</text>')
        self.legend.append((name, color, dashed))

    def render(self):
        _, t, r, _ = self.box
        for i, (name, color, dashed) in enumerate(self.legend):
            y = t + 12 + 13 * i
            dash = ' stroke-dasharray="4 3"' if dashed else ""
            self.parts.append(f'<line x1="{r - 110}" y1="{y - 3}" x2="{r - 92}" y2="{y - 3}" '
                              f'stroke="{color}"{dash}/>')
            self.parts.append(f'<text x="{r - 88}" y="{y}" font-size="9">{escape(name)}</text>')
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
                f'viewBox="0 0 {WIDTH} {HEIGHT}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="#fff"/>', *self.parts, "</svg>"]) + "\n"


def load_points(csv_paths):
    points = []
    for path in csv_paths:
        text = Path(path).read_text()
        try:
            points.extend(points_from_csv(text))
        except CSVFormatError as exc:
            raise CSVFormatError(f"{path}: {exc}") from exc
    if not points:
        raise CSVFormatError("no data rows")
    return points


def _fusion_points(points):
    """tau-grid rows of the first sampling seed, grouped by tau."""
    rows = [p for p in points if p.label == "fusion"]
    if not rows:
        return {}
    seed = min(p.seed for p in rows)
    by_tau = defaultdict(list)
    for p in rows:
        if p.seed == seed:
            by_tau[p.tau].append(p)
    return {tau: sorted(ps, key=lambda p: p.bpp) for tau, ps in sorted(by_tau.items())}


def rd_plot(by_tau, metric):
    xs = [p.bpp for ps in by_tau.values() for p in ps]
    ys = [getattr(p, metric) for ps in by_tau.values() for p in ps]
    plot = _Plot(f"rate vs {METRIC_LABELS[metric]}", "bpp", METRIC_LABELS[metric], xs, ys)
    for i, (tau, ps) in enumerate(by_tau.items()):
        plot.series([p.bpp for p in ps], [getattr(p, metric) for p in ps], f"tau={tau:g}",
                    PALETTE[i % len(PALETTE)])
    return plot.render()


def tradeoff_plot(points, by_tau):
    by_beta = defaultdict(list)
    for ps in by_tau.values():
        for p in ps:
            by_beta[p.beta].append(p)
    variant = defaultdict(list)
    for p in points:
        if p.label == "variant1":
            variant[p.beta].append(p)
    everything = [p for ps in by_beta.values() for p in ps] + [p for ps in variant.values() for p in ps]
    plot = _Plot("PSNR vs P-dist across tau", "PSNR (dB)", "P-dist",
                 [p.psnr_db for p in everything], [p.pdist for p in everything])
    for i, beta in enumerate(sorted(by_beta)):
        ps = sorted(by_beta[beta], key=lambda p: p.tau)
        color = PALETTE[i % len(PALETTE)]
        plot.series([p.psnr_db for p in ps], [p.pdist for p in ps], f"beta={beta:g}", color,
                    labels=[f"{p.tau:g}" for p in ps])
        if beta in variant:
            vs = sorted(variant[beta], key=lambda p: p.tau)
            plot.series([p.psnr_db for p in vs], [p.pdist for p in vs], f"translator {beta:g}", color,
                        dashed=True)
    return plot.render()


def steps_plot(points):
    rows = [p for p in points if p.label == "steps"]
    seed = min(p.seed for p in rows)
    by_beta = defaultdict(list)
    for p in rows:
        if p.seed == seed:
            by_beta[p.beta].append(p)
    plot = _Plot("sampling steps vs P-dist (tau=0)", "steps", "P-dist",
                 [p.steps for p in rows], [p.pdist for p in rows])
    for i, beta in enumerate(sorted(by_beta)):
        ps = sorted(by_beta[beta], key=lambda p: p.steps)
        plot.series([p.steps for p in ps], [p.pdist for p in ps], f"beta={beta:g}", PALETTE[i % len(PALETTE)])
    return plot.render()


def bd_table(by_tau, anchor_tau=1.0, test_tau=0.0):
    """Rows ``(quality_field, bd_rate_percent)`` of the test tau against the anchor tau."""
    anchor = RDCurve(f"tau={anchor_tau:g}", by_tau[anchor_tau])
    test = RDCurve(f"tau={test_tau:g}", by_tau[test_tau])
    return [(field, bd_rate(anchor, test, field)) for field in ("psnr_db", "pdist")]


def bd_notice(by_tau, anchor_tau=1.0, test_tau=0.0):
    """Reason the BD table cannot be computed, or ``None``."""
    if len(by_tau) < 2:
        return "BD table omitted: the CSV holds a single tau value"
    if anchor_tau not in by_tau or test_tau not in by_tau:
        return f"BD table omitted: need tau={anchor_tau:g} and tau={test_tau:g} rows"
    n = min(len(by_tau[anchor_tau]), len(by_tau[test_tau]))
    if n < 4:
        return f"BD table omitted: {n} beta point(s) per curve, at least 4 needed"
    return None


def report(csv_paths, out_dir):
    """Write SVGs and ``bd_table.csv`` (or a notice) into ``out_dir``; returns written paths."""
    points = load_points(csv_paths)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_tau = _fusion_points(points)
    if not by_tau:
        raise CSVFormatError("no tau-grid ('fusion') rows to plot")
    written = []

    def emit(name, text):
        path = out / name
        path.write_text(text)
        written.append(path)

    emit("rd_psnr.svg", rd_plot(by_tau, "psnr_db"))
    emit("rd_pdist.svg", rd_plot(by_tau, "pdist"))
    if len(by_tau) > 1:
        emit("tradeoff.svg", tradeoff_plot(points, by_tau))
    if any(p.label == "steps" for p in points):
        emit("steps.svg", steps_plot(points))
    notice = bd_notice(by_tau)
    if notice is None:
        try:
            rows = bd_table(by_tau)
        except ValueError as exc:
            notice = f"BD table omitted: {exc}"
    if notice is None:
        lines = ["anchor,test,quality,bd_rate_percent"]
        lines += [f"tau=1,tau=0,{field},{value:.4f}" for field, value in rows]
        emit("bd_table.csv", "\n".join(lines) + "\n")
    else:
        emit("bd_notice.txt", notice + "\n")
    return written, notice
