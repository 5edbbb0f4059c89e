// Dashboard rendering: SessionView in, one self-contained SVG string out.
// Pure string building keeps it renderer-agnostic and testable headless;
// the browser shell drops the markup into a container element.

import { DialArc, SessionView } from "./session.js";

export const WIDTH = 960;
export const HEIGHT = 600;

const CHANNEL_COLORS = ["#c33", "#e80", "#a6a", "#36c", "#0a8", "#875"];

interface Box {
    x: number;
    y: number;
    w: number;
    h: number;
}

export function xmlEscape(text: string): string {
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/"/g, "&quot;");
}

function fmt(value: number, digits = 1): string {
    return value.toFixed(digits);
}

function yScale(box: Box, lo: number, hi: number): (v: number) => number {
    const span = hi - lo;
    return (v) => box.y + box.h - ((v - lo) / span) * box.h;
}

function frame(box: Box, title: string): string {
    return (
        `<rect x="${box.x}" y="${box.y}" width="${box.w}" height="${box.h}"` +
        ` fill="#fdfdfb" stroke="#888"/>` +
        `<text x="${box.x + 4}" y="${box.y - 5}" font-size="12" fill="#333">` +
        `${xmlEscape(title)}</text>`
    );
}

function polyline(points: Array<[number, number]>, stroke: string, extra = ""): string {
    if (points.length === 0) return "";
    const attr = points.map(([x, y]) => `${fmt(x, 1)},${fmt(y, 1)}`).join(" ");
    return `<polyline points="${attr}" fill="none" stroke="${stroke}" ${extra}/>`;
}

/** Time-series polylines over the fixed 60 s window; null samples split
 *  the trace into segments instead of being bridged. */
function seriesPolylines(
    view: SessionView,
    pick: (p: { t: number; rpm_set: number; rpm_meas: number | null; power_pct: number; error: number }) => number | null,
    box: Box,
    yLo: number,
    yHi: number,
    stroke: string,
    extra = "",
): string {
    const tEnd = view.latest === null ? 0 : view.latest.t;
    const t0 = tEnd - 60;
    const sy = yScale(box, yLo, yHi);
    const sx = (t: number) => box.x + ((t - t0) / 60) * box.w;
    const out: string[] = [];
    let segment: Array<[number, number]> = [];
    for (const point of view.history) {
        const value = pick(point);
        if (value === null) {
            if (segment.length > 0) out.push(polyline(segment, stroke, extra));
            segment = [];
            continue;
        }
        segment.push([sx(point.t), sy(Math.min(yHi, Math.max(yLo, value)))]);
    }
    if (segment.length > 0) out.push(polyline(segment, stroke, extra));
    return out.join("");
}

function dialPoint(cx: number, cy: number, r: number, deg: number): [number, number] {
    const a = ((deg - 90) * Math.PI) / 180;
    return [cx + r * Math.cos(a), cy + r * Math.sin(a)];
}

export function arcPath(cx: number, cy: number, r: number, arc: DialArc): string {
    const sweep = arc.endDeg - arc.startDeg;
    if (sweep >= 359.999) {
        const [x0, y0] = dialPoint(cx, cy, r, 0);
        const [x1, y1] = dialPoint(cx, cy, r, 180);
        return (
            `M ${fmt(x0, 2)} ${fmt(y0, 2)} ` +
            `A ${r} ${r} 0 0 1 ${fmt(x1, 2)} ${fmt(y1, 2)} ` +
            `A ${r} ${r} 0 0 1 ${fmt(x0, 2)} ${fmt(y0, 2)}`
        );
    }
    const [x0, y0] = dialPoint(cx, cy, r, arc.startDeg);
    const [x1, y1] = dialPoint(cx, cy, r, arc.endDeg);
    const large = sweep > 180 ? 1 : 0;
    return (
        `M ${fmt(x0, 2)} ${fmt(y0, 2)} ` +
        `A ${r} ${r} 0 ${large} 1 ${fmt(x1, 2)} ${fmt(y1, 2)}`
    );
}

function cadenceChart(view: SessionView, box: Box): string {
    const grid = [0, 25, 50, 75, 100]
        .map((v) => {
            const y = yScale(box, 0, 110)(v);
            return (
                `<line x1="${box.x}" y1="${fmt(y)}" x2="${box.x + box.w}" y2="${fmt(y)}"` +
                ` stroke="#ddd"/>` +
                `<text x="${box.x - 4}" y="${fmt(y + 3)}" font-size="9"` +
                ` text-anchor="end" fill="#666">${v}</text>`
            );
        })
        .join("");
    const setTrace = seriesPolylines(
        view, (p) => p.rpm_set, box, 0, 110, "#888",
        'stroke-dasharray="5,3" class="trace-rpm-set"',
    );
    const measTrace = seriesPolylines(
        view, (p) => p.rpm_meas, box, 0, 110, "#b22",
        'stroke-width="1.5" class="trace-rpm-meas"',
    );
    return frame(box, "cadence, RPM (dashed: setpoint)") + grid + setTrace + measTrace;
}

function powerChart(view: SessionView, box: Box): string {
    const trace = seriesPolylines(
        view, (p) => p.power_pct, box, 0, 105, "#265",
        'stroke-width="1.5" class="trace-power"',
    );
    return frame(box, "stimulation power, %") + trace;
}

function errorChart(view: SessionView, box: Box): string {
    let bound = 5;
    for (const p of view.history) bound = Math.max(bound, Math.abs(p.error));
    const zero = yScale(box, -bound, bound)(0);
    const zeroLine =
        `<line x1="${box.x}" y1="${fmt(zero)}" x2="${box.x + box.w}"` +
        ` y2="${fmt(zero)}" stroke="#aaa" stroke-dasharray="2,2"/>`;
    const trace = seriesPolylines(
        view, (p) => p.error, box, -bound, bound, "#447",
        'stroke-width="1.2" class="trace-error"',
    );
    return frame(box, `error around zero, RPM (+/-${fmt(bound, 0)})`) + zeroLine + trace;
}

function dial(view: SessionView, box: Box): string {
    const cx = box.x + box.w / 2;
    const cy = box.y + box.h / 2;
    const rOuter = Math.min(box.w, box.h) / 2 - 14;
    const parts: string[] = [
        `<text x="${box.x + 4}" y="${box.y - 5}" font-size="12" fill="#333">` +
        `crank dial, learned firing arcs</text>`,
        `<circle cx="${cx}" cy="${cy}" r="${rOuter + 8}" fill="none" stroke="#ccc"/>`,
    ];
    for (const deg of [0, 90, 180, 270]) {
        const [tx, ty] = dialPoint(cx, cy, rOuter + 8, deg);
        parts.push(
            `<text x="${fmt(tx)}" y="${fmt(ty + 3)}" font-size="8"` +
            ` text-anchor="middle" fill="#999">${deg}</text>`,
        );
    }
    const latest = view.latest;
    for (let i = 0; i < 6; i++) {
        const r = rOuter - 6 - i * 7;
        const color = CHANNEL_COLORS[i]!;
        const active = latest !== null && latest.channels[i] !== undefined
            ? latest.channels[i]!.active : false;
        for (const arc of view.arcs(i)) {
            parts.push(
                `<path d="${arcPath(cx, cy, r, arc)}" fill="none" stroke="${color}"` +
                ` stroke-width="5" stroke-opacity="${active ? "1.0" : "0.35"}"` +
                ` class="dial-arc-${i}"/>`,
            );
        }
    }
    if (latest !== null) {
        const [nx, ny] = dialPoint(cx, cy, rOuter - 48, latest.theta_deg);
        parts.push(
            `<line x1="${cx}" y1="${cy}" x2="${fmt(nx)}" y2="${fmt(ny)}"` +
            ` stroke="#222" stroke-width="2" class="dial-needle"/>`,
        );
        latest.channels.forEach((ch, i) => {
            const y = box.y + 12 + i * 13;
            const weight = ch.active ? "bold" : "normal";
            parts.push(
                `<text x="${box.x + 6}" y="${y}" font-size="10"` +
                ` font-weight="${weight}" fill="${CHANNEL_COLORS[i]}">` +
                `${ch.id} ${fmt(ch.current_mA, 0)} mA</text>`,
            );
        });
    }
    return parts.join("");
}

function pedalBars(view: SessionView, box: Box): string {
    const latest = view.latest;
    if (latest === null) return frame(box, "pedal force, N");
    const [left, right] = latest.pedal_N;
    const top = Math.max(50, left, right);
    const sy = yScale(box, 0, top);
    const barW = box.w / 5;
    const bars = [
        { label: "L", value: left, x: box.x + box.w / 4 - barW / 2 },
        { label: "R", value: right, x: box.x + (3 * box.w) / 4 - barW / 2 },
    ]
        .map((bar) => {
            const y = sy(bar.value);
            return (
                `<rect x="${fmt(bar.x)}" y="${fmt(y)}" width="${fmt(barW)}"` +
                ` height="${fmt(box.y + box.h - y)}" fill="#579" class="pedal-bar"/>` +
                `<text x="${fmt(bar.x + barW / 2)}" y="${box.y + box.h + 11}"` +
                ` font-size="9" text-anchor="middle" fill="#333">` +
                `${bar.label} ${fmt(bar.value, 0)}</text>`
            );
        })
        .join("");
    return frame(box, "pedal force, N") + bars;
}

function mmgSparklines(view: SessionView, box: Box): string {
    const labels = ["LQ", "LH", "RQ", "RH"];
    const rowH = box.h / 4;
    let top = 1e-6;
    for (const p of view.mmgHistory) top = Math.max(top, ...p.env);
    const tEnd = view.latest === null ? 0 : view.latest.t;
    const parts = [frame(box, "MMG envelope")];
    for (let i = 0; i < 4; i++) {
        const rowBox = { x: box.x, y: box.y + i * rowH + 2, w: box.w, h: rowH - 4 };
        const sy = yScale(rowBox, 0, top);
        const points: Array<[number, number]> = view.mmgHistory.map((p) => [
            box.x + ((p.t - (tEnd - 60)) / 60) * box.w,
            sy(p.env[i] ?? 0),
        ]);
        parts.push(polyline(points, "#767", `class="mmg-spark-${i}"`));
        parts.push(
            `<text x="${box.x + 3}" y="${fmt(rowBox.y + 9)}" font-size="8"` +
            ` fill="#555">${labels[i]}</text>`,
        );
    }
    return parts.join("");
}

function statusStrip(view: SessionView, nowMs: number): string {
    const latest = view.latest;
    if (latest === null) return "";
    const meas = latest.rpm_meas === null ? "--" : fmt(latest.rpm_meas);
    const line =
        `t=${fmt(latest.t)}s  set=${fmt(latest.rpm_set, 0)}  meas=${meas}  ` +
        `power=${fmt(latest.power_pct)}%  status=${latest.status}  ` +
        `dropped=${view.framesDropped}`;
    let stale = "";
    if (view.isStale(nowMs)) {
        stale =
            `<rect x="330" y="6" width="300" height="22" fill="#fbe3e3"` +
            ` stroke="#b22" class="stale-banner"/>` +
            `<text x="480" y="21" font-size="12" text-anchor="middle" fill="#b22">` +
            `STALE: no telemetry for ${fmt(view.staleForS(nowMs))} s</text>`;
    }
    return (
        `<text x="12" y="21" font-size="12" fill="#222" class="status-strip">` +
        `${xmlEscape(line)}</text>` + stale
    );
}

/** The whole dashboard as one SVG document string. */
export function renderDashboard(view: SessionView, nowMs: number): string {
    const head =
        `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}"` +
        ` width="${WIDTH}" height="${HEIGHT}" font-family="sans-serif">` +
        `<rect x="0" y="0" width="${WIDTH}" height="${HEIGHT}" fill="#f5f4f0"/>`;
    if (view.latest === null) {
        return (
            head +
            `<text x="${WIDTH / 2}" y="${HEIGHT / 2}" font-size="16"` +
            ` text-anchor="middle" fill="#888" class="empty-state">` +
            `no telemetry yet</text></svg>`
        );
    }
    const body = [
        statusStrip(view, nowMs),
        cadenceChart(view, { x: 50, y: 56, w: 560, h: 170 }),
        powerChart(view, { x: 50, y: 260, w: 560, h: 110 }),
        errorChart(view, { x: 50, y: 404, w: 560, h: 110 }),
        dial(view, { x: 640, y: 56, w: 300, h: 260 }),
        pedalBars(view, { x: 660, y: 360, w: 120, h: 140 }),
        mmgSparklines(view, { x: 810, y: 360, w: 130, h: 140 }),
    ].join("");
    return head + body + "</svg>";
}
