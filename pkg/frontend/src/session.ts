// Session model: a pure view of the wire protocol. Every value in here
// was reported by the server; the console adds bookkeeping (bounds,
// staleness, the learned dial arcs) but never fabricates a reading.

import { CHANNEL_ORDER, TelemetryFrame } from "./protocol.js";

export type ConnectionState =
    | "connecting"
    | "connected"
    | "reconnecting"
    | "disconnected";

export const HISTORY_WINDOW_S = 60;
export const HISTORY_MAX_POINTS = 2048;
export const MMG_MAX_POINTS = 600;
export const STALE_AFTER_MS = 2000;
export const DIAL_BINS = 360;

export interface HistoryPoint {
    t: number;
    rpm_set: number;
    rpm_meas: number | null;
    power_pct: number;
    error: number;
}

export interface MmgPoint {
    t: number;
    env: [number, number, number, number];
}

export interface DialArc {
    startDeg: number;
    endDeg: number;
}

export class SessionView {
    connection: ConnectionState = "connecting";
    latest: TelemetryFrame | null = null;
    history: HistoryPoint[] = [];
    mmgHistory: MmgPoint[] = [];
    framesDropped = 0;
    lastFrameWallMs: number | null = null;

    // One bit per degree per channel: has the server ever reported this
    // channel active at this crank angle. Arcs are read off these bins.
    private dialBins: Uint8Array[] = CHANNEL_ORDER.map(
        () => new Uint8Array(DIAL_BINS),
    );

    ingest(frame: TelemetryFrame, wallMs: number): void {
        this.latest = frame;
        this.lastFrameWallMs = wallMs;
        this.history.push({
            t: frame.t,
            rpm_set: frame.rpm_set,
            rpm_meas: frame.rpm_meas,
            power_pct: frame.power_pct,
            error: frame.error,
        });
        this.mmgHistory.push({ t: frame.t, env: frame.mmg_env });
        this.prune(frame.t);

        const bin = ((Math.floor(frame.theta_deg) % DIAL_BINS) + DIAL_BINS) % DIAL_BINS;
        frame.channels.forEach((ch, i) => {
            if (ch.active) this.dialBins[i]![bin] = 1;
        });
    }

    private prune(now: number): void {
        const cutoff = now - HISTORY_WINDOW_S;
        while (
            this.history.length > HISTORY_MAX_POINTS ||
            (this.history.length > 0 && this.history[0]!.t < cutoff)
        ) {
            this.history.shift();
        }
        while (
            this.mmgHistory.length > MMG_MAX_POINTS ||
            (this.mmgHistory.length > 0 && this.mmgHistory[0]!.t < cutoff)
        ) {
            this.mmgHistory.shift();
        }
    }

    /** Contiguous active-angle runs for one channel, merged across 359->0. */
    arcs(channelIndex: number): DialArc[] {
        const bins = this.dialBins[channelIndex];
        if (bins === undefined) throw new RangeError("channel index out of range");
        const runs: DialArc[] = [];
        let start: number | null = null;
        for (let deg = 0; deg < DIAL_BINS; deg++) {
            if (bins[deg] && start === null) start = deg;
            if (!bins[deg] && start !== null) {
                runs.push({ startDeg: start, endDeg: deg });
                start = null;
            }
        }
        if (start !== null) runs.push({ startDeg: start, endDeg: DIAL_BINS });
        // A run touching both ends is one wrapped arc.
        if (runs.length > 1) {
            const first = runs[0]!;
            const last = runs[runs.length - 1]!;
            if (first.startDeg === 0 && last.endDeg === DIAL_BINS) {
                runs.pop();
                runs[0] = { startDeg: last.startDeg, endDeg: DIAL_BINS + first.endDeg };
            }
        }
        return runs;
    }

    isStale(nowMs: number): boolean {
        return (
            this.lastFrameWallMs !== null &&
            nowMs - this.lastFrameWallMs > STALE_AFTER_MS
        );
    }

    staleForS(nowMs: number): number {
        if (this.lastFrameWallMs === null) return 0;
        return Math.max(0, (nowMs - this.lastFrameWallMs) / 1000);
    }
}
