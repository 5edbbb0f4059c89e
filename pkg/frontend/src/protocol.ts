// Wire protocol for the telemetry/control endpoint: newline-delimited JSON
// over a WebSocket. Telemetry frames arrive at 10 Hz; the three control
// messages below are the only things the console ever sends.

export const CHANNEL_ORDER = ["LQ", "LH", "LG", "RQ", "RH", "RG"] as const;

export interface ChannelFrame {
    id: string;
    active: boolean;
    current_mA: number;
}

export interface TelemetryFrame {
    t: number;
    theta_deg: number;
    rpm_set: number;
    rpm_meas: number | null;
    error: number;
    power_pct: number;
    status: string;
    channels: ChannelFrame[];
    pedal_N: [number, number];
    mmg_env: [number, number, number, number];
}

export class ProtocolError extends Error {}

function asFiniteNumber(value: unknown, field: string): number {
    if (typeof value !== "number" || !Number.isFinite(value)) {
        throw new ProtocolError(`${field} must be a finite number`);
    }
    return value;
}

/** Parse one telemetry line. Anything malformed throws; the caller drops
 *  the frame rather than patching it, so nothing displayed is invented. */
export function parseFrame(line: string): TelemetryFrame {
    let raw: unknown;
    try {
        raw = JSON.parse(line);
    } catch {
        throw new ProtocolError("frame is not valid JSON");
    }
    if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
        throw new ProtocolError("frame must be a JSON object");
    }
    const obj = raw as Record<string, unknown>;

    const rpmMeas = obj.rpm_meas;
    if (rpmMeas !== null && (typeof rpmMeas !== "number" || !Number.isFinite(rpmMeas))) {
        throw new ProtocolError("rpm_meas must be a finite number or null");
    }
    if (typeof obj.status !== "string") {
        throw new ProtocolError("status must be a string");
    }

    if (!Array.isArray(obj.channels) || obj.channels.length !== CHANNEL_ORDER.length) {
        throw new ProtocolError("channels must list all six channels");
    }
    const channels: ChannelFrame[] = obj.channels.map((entry, i) => {
        if (typeof entry !== "object" || entry === null) {
            throw new ProtocolError("channel entry must be an object");
        }
        const ch = entry as Record<string, unknown>;
        if (ch.id !== CHANNEL_ORDER[i]) {
            throw new ProtocolError(`channel ${i} must be ${CHANNEL_ORDER[i]}`);
        }
        if (typeof ch.active !== "boolean") {
            throw new ProtocolError("channel active must be a boolean");
        }
        return {
            id: CHANNEL_ORDER[i] as string,
            active: ch.active,
            current_mA: asFiniteNumber(ch.current_mA, "channel current_mA"),
        };
    });

    if (!Array.isArray(obj.pedal_N) || obj.pedal_N.length !== 2) {
        throw new ProtocolError("pedal_N must hold two values");
    }
    if (!Array.isArray(obj.mmg_env) || obj.mmg_env.length !== 4) {
        throw new ProtocolError("mmg_env must hold four values");
    }

    return {
        t: asFiniteNumber(obj.t, "t"),
        theta_deg: asFiniteNumber(obj.theta_deg, "theta_deg"),
        rpm_set: asFiniteNumber(obj.rpm_set, "rpm_set"),
        rpm_meas: rpmMeas as number | null,
        error: asFiniteNumber(obj.error, "error"),
        power_pct: asFiniteNumber(obj.power_pct, "power_pct"),
        status: obj.status,
        channels,
        pedal_N: [
            asFiniteNumber(obj.pedal_N[0], "pedal_N[0]"),
            asFiniteNumber(obj.pedal_N[1], "pedal_N[1]"),
        ],
        mmg_env: [
            asFiniteNumber(obj.mmg_env[0], "mmg_env[0]"),
            asFiniteNumber(obj.mmg_env[1], "mmg_env[1]"),
            asFiniteNumber(obj.mmg_env[2], "mmg_env[2]"),
            asFiniteNumber(obj.mmg_env[3], "mmg_env[3]"),
        ],
    };
}

/** Split a socket payload into telemetry lines (frames end in a newline). */
export function splitLines(payload: string): string[] {
    return payload.split("\n").filter((line) => line.length > 0);
}

// Control messages are built by hand so the bytes on the wire are fixed:
// key order, no whitespace, plain decimal numbers.

export function encodeSetpoint(rpm: number): string {
    if (!Number.isInteger(rpm) || rpm < 0 || rpm > 100) {
        throw new RangeError("setpoint must be an integer in [0, 100]");
    }
    return `{"type":"setpoint","rpm":${rpm}}`;
}

export function encodeRocker(on: boolean): string {
    return `{"type":"rocker","on":${on}}`;
}

export interface GainsUpdate {
    ki?: number;
    kp?: number;
    kd?: number;
}

export function encodeGains(gains: GainsUpdate): string {
    const parts: string[] = [];
    for (const key of ["ki", "kp", "kd"] as const) {
        const value = gains[key];
        if (value === undefined) continue;
        if (!Number.isFinite(value)) {
            throw new RangeError(`${key} must be a finite number`);
        }
        parts.push(`"${key}":${JSON.stringify(value)}`);
    }
    if (parts.length === 0) {
        throw new RangeError("gains update must set at least one of ki, kp, kd");
    }
    return `{"type":"gains",${parts.join(",")}}`;
}
