// Shared test fixtures: a tiny seeded PRNG and canonical frame builders.
// Frames always travel through JSON so every test exercises the real
// wire path, not hand-built objects.

import { CHANNEL_ORDER, parseFrame, TelemetryFrame } from "../src/protocol.js";

export function mulberry32(seed: number): () => number {
    let a = seed >>> 0;
    return () => {
        a = (a + 0x6d2b79f5) >>> 0;
        let t = a;
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

export interface FrameSpec {
    t?: number;
    theta_deg?: number;
    rpm_set?: number;
    rpm_meas?: number | null;
    error?: number;
    power_pct?: number;
    status?: string;
    active?: boolean[];
    currents?: number[];
    pedal_N?: [number, number];
    mmg_env?: [number, number, number, number];
}

/** Serialize a frame spec the way the server would and parse it back. */
export function wireFrame(spec: FrameSpec = {}): TelemetryFrame {
    const active = spec.active ?? CHANNEL_ORDER.map(() => false);
    const currents = spec.currents ?? CHANNEL_ORDER.map(() => 0);
    const payload = {
        t: spec.t ?? 0,
        theta_deg: spec.theta_deg ?? 0,
        rpm_set: spec.rpm_set ?? 0,
        rpm_meas: spec.rpm_meas === undefined ? null : spec.rpm_meas,
        error: spec.error ?? 0,
        power_pct: spec.power_pct ?? 0,
        status: spec.status ?? "InProgress",
        channels: CHANNEL_ORDER.map((id, i) => ({
            id,
            active: active[i] ?? false,
            current_mA: currents[i] ?? 0,
        })),
        pedal_N: spec.pedal_N ?? [0, 0],
        mmg_env: spec.mmg_env ?? [0, 0, 0, 0],
    };
    return parseFrame(JSON.stringify(payload));
}

export function randomFrameSpec(rand: () => number): FrameSpec {
    const maybeNull = rand() < 0.2;
    return {
        t: rand() * 1000,
        theta_deg: rand() * 360,
        rpm_set: Math.floor(rand() * 101),
        rpm_meas: maybeNull ? null : rand() * 120,
        error: (rand() - 0.5) * 40,
        power_pct: rand() * 100,
        status: ["InProgress", "Converged", "Saturated", "Diverged"][Math.floor(rand() * 4)],
        active: CHANNEL_ORDER.map(() => rand() < 0.5),
        currents: CHANNEL_ORDER.map(() => rand() * 55),
        pedal_N: [rand() * 300, rand() * 300],
        mmg_env: [rand() * 0.1, rand() * 0.1, rand() * 0.1, rand() * 0.1],
    };
}

export async function waitFor(
    predicate: () => boolean,
    timeoutMs: number,
    stepMs = 10,
): Promise<void> {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        if (predicate()) return;
        await new Promise((resolve) => setTimeout(resolve, stepMs));
    }
    if (!predicate()) throw new Error(`condition not met within ${timeoutMs} ms`);
}
