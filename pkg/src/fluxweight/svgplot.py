"""Self-contained log-log SVG plots (axes, decade ticks, polylines).

No plotting dependency: studies emit small standalone SVG files with
the error/estimator curves against DOF counts, a reference line of
slope -1, and the least-squares regression line of the primary curve.
"""

import math

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf")

_W, _H = 640, 480
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def _decades(lo, hi):
    out = []
    e = math.floor(math.log10(lo))
    while 10.0 ** e <= hi * 1.0001:
        if 10.0 ** e >= lo * 0.9999:
            out.append(10.0 ** e)
        e += 1
    return out


class LogLogPlot:
    def __init__(self, title="", xlabel="N", ylabel="error"):
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self.curves = []   # (label, xs, ys)
        self.lines = []    # (label, slope, anchor_x, anchor_y)

    def add_curve(self, label, xs, ys):
        pts = [(float(x), float(y)) for x, y in zip(xs, ys)
               if x > 0 and y > 0 and math.isfinite(y)]
        if pts:
            self.curves.append((label, pts))

    def add_reference_slope(self, label, slope, anchor):
        self.lines.append((label, float(slope), anchor))

    def add_regression(self, curve_index=0):
        label, pts = self.curves[curve_index]
        if len(pts) < 2:
            return None
        lx = [math.log(p[0]) for p in pts]
        ly = [math.log(p[1]) for p in pts]
        n = len(lx)
        mx, my = sum(lx) / n, sum(ly) / n
        sxx = sum((v - mx) ** 2 for v in lx)
        sxy = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
        slope = sxy / sxx if sxx > 0 else float("nan")
        x0 = math.exp(mx)
        y0 = math.exp(my)
        self.lines.append((f"regression slope {slope:.2f}", slope, (x0, y0)))
        return slope

    def write(self, path):
        xs = [p[0] for _, pts in self.curves for p in pts]
        ys = [p[1] for _, pts in self.curves for p in pts]
        if not xs:
            xs, ys = [1.0, 10.0], [1.0, 10.0]
        x0, x1 = min(xs) * 0.8, max(xs) * 1.25
        y0, y1 = min(ys) * 0.8, max(ys) * 1.25

        def X(x):
            return _ML + (math.log10(x) - math.log10(x0)) \
                * (_W - _ML - _MR) / (math.log10(x1) - math.log10(x0))

        def Y(y):
            return _H - _MB - (math.log10(y) - math.log10(y0)) \
                * (_H - _MT - _MB) / (math.log10(y1) - math.log10(y0))

        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
            f'height="{_H}" viewBox="0 0 {_W} {_H}">',
            f'<rect width="{_W}" height="{_H}" fill="white"/>',
            f'<text x="{_W/2:.0f}" y="18" text-anchor="middle" '
            f'font-size="14">{self.title}</text>',
        ]
        # axes
        parts.append(f'<rect x="{_ML}" y="{_MT}" width="{_W-_ML-_MR}" '
                     f'height="{_H-_MT-_MB}" fill="none" stroke="black"/>')
        for xv in _decades(x0, x1):
            parts.append(f'<line x1="{X(xv):.1f}" y1="{_H-_MB}" '
                         f'x2="{X(xv):.1f}" y2="{_MT}" stroke="#dddddd"/>')
            parts.append(f'<text x="{X(xv):.1f}" y="{_H-_MB+16}" '
                         f'text-anchor="middle" font-size="11">1e{int(round(math.log10(xv)))}</text>')
        for yv in _decades(y0, y1):
            parts.append(f'<line x1="{_ML}" y1="{Y(yv):.1f}" x2="{_W-_MR}" '
                         f'y2="{Y(yv):.1f}" stroke="#dddddd"/>')
            parts.append(f'<text x="{_ML-6}" y="{Y(yv)+4:.1f}" '
                         f'text-anchor="end" font-size="11">1e{int(round(math.log10(yv)))}</text>')
        parts.append(f'<text x="{_W/2:.0f}" y="{_H-12}" text-anchor="middle" '
                     f'font-size="12">{self.xlabel}</text>')
        parts.append(f'<text x="16" y="{_H/2:.0f}" text-anchor="middle" '
                     f'font-size="12" transform="rotate(-90 16 {_H/2:.0f})">'
                     f'{self.ylabel}</text>')

        for (label, slope, (ax, ay)) in self.lines:
            ya = ay * (x0 / ax) ** slope
            yb = ay * (x1 / ax) ** slope
            parts.append(f'<line x1="{X(x0):.1f}" y1="{Y(max(min(ya, y1), y0)):.1f}" '
                         f'x2="{X(x1):.1f}" y2="{Y(max(min(yb, y1), y0)):.1f}" '
                         f'stroke="#888888" stroke-dasharray="6 4"/>')

        for i, (label, pts) in enumerate(self.curves):
            color = _COLORS[i % len(_COLORS)]
            d = " ".join(f"{X(x):.1f},{Y(y):.1f}" for x, y in pts)
            parts.append(f'<polyline points="{d}" fill="none" '
                         f'stroke="{color}" stroke-width="1.6"/>')
            for x, y in pts:
                parts.append(f'<circle cx="{X(x):.1f}" cy="{Y(y):.1f}" '
                             f'r="2.6" fill="{color}"/>')
            parts.append(f'<text x="{_W-_MR-8}" y="{_MT+18+14*i}" '
                         f'text-anchor="end" font-size="12" fill="{color}">'
                         f'{label}</text>')
        extra = len(self.curves)
        for j, (label, slope, _) in enumerate(self.lines):
            parts.append(f'<text x="{_W-_MR-8}" y="{_MT+18+14*(extra+j)}" '
                         f'text-anchor="end" font-size="12" fill="#888888">'
                         f'{label}</text>')
        parts.append("</svg>")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(parts))
