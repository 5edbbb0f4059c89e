// Wire protocol tests. Control encoders are compared character by
// character: the server contract is a byte-exact message, not merely
// equivalent JSON.

import { describe, expect, it } from "vitest";

import {
    CHANNEL_ORDER,
    encodeGains,
    encodeRocker,
    encodeSetpoint,
    parseFrame,
    ProtocolError,
    splitLines,
} from "../src/protocol.js";
import { mulberry32, randomFrameSpec, wireFrame } from "./helpers.js";

const SERVER_LINE =
    '{"t":12.3456,"theta_deg":123.456,"rpm_set":40.0,"rpm_meas":39.8812,' +
    '"error":0.1188,"power_pct":57.812,"status":"Converged","channels":[' +
    '{"id":"LQ","active":false,"current_mA":0.0},' +
    '{"id":"LH","active":false,"current_mA":0.0},' +
    '{"id":"LG","active":true,"current_mA":27.0},' +
    '{"id":"RQ","active":false,"current_mA":0.0},' +
    '{"id":"RH","active":true,"current_mA":33.0},' +
    '{"id":"RG","active":true,"current_mA":30.0}],' +
    '"pedal_N":[12.3,45.6],"mmg_env":[0.00123,0.00234,0.00345,0.00456]}';

describe("control encoders", () => {
    it("encodes setpoint messages byte-exactly", () => {
        expect(encodeSetpoint(40)).toBe('{"type":"setpoint","rpm":40}');
        expect(encodeSetpoint(0)).toBe('{"type":"setpoint","rpm":0}');
        expect(encodeSetpoint(100)).toBe('{"type":"setpoint","rpm":100}');
    });

    it("encodes rocker messages byte-exactly", () => {
        expect(encodeRocker(true)).toBe('{"type":"rocker","on":true}');
        expect(encodeRocker(false)).toBe('{"type":"rocker","on":false}');
    });

    it("encodes gains messages byte-exactly, subset allowed", () => {
        expect(encodeGains({ ki: 0.45 })).toBe('{"type":"gains","ki":0.45}');
        expect(encodeGains({ ki: 0.45, kp: 0 })).toBe('{"type":"gains","ki":0.45,"kp":0}');
        expect(encodeGains({ ki: 1, kp: 0.5, kd: 0.05 })).toBe(
            '{"type":"gains","ki":1,"kp":0.5,"kd":0.05}',
        );
    });

    it("rejects setpoints off the slider grid", () => {
        for (const bad of [40.5, -1, 101, NaN, Infinity]) {
            expect(() => encodeSetpoint(bad)).toThrow(RangeError);
        }
    });

    it("rejects empty or non-finite gains", () => {
        expect(() => encodeGains({})).toThrow(RangeError);
        expect(() => encodeGains({ ki: NaN })).toThrow(RangeError);
    });
});

describe("telemetry parsing", () => {
    it("parses a canonical server line", () => {
        const frame = parseFrame(SERVER_LINE);
        expect(frame.t).toBe(12.3456);
        expect(frame.rpm_set).toBe(40);
        expect(frame.rpm_meas).toBeCloseTo(39.8812, 10);
        expect(frame.status).toBe("Converged");
        expect(frame.channels.map((c) => c.id)).toEqual([...CHANNEL_ORDER]);
        expect(frame.channels[4]!.active).toBe(true);
        expect(frame.channels[4]!.current_mA).toBe(33);
        expect(frame.pedal_N).toEqual([12.3, 45.6]);
        expect(frame.mmg_env).toHaveLength(4);
    });

    it("keeps a null cadence estimate null", () => {
        const frame = wireFrame({ rpm_meas: null });
        expect(frame.rpm_meas).toBeNull();
    });

    it("rejects malformed frames", () => {
        const good = JSON.parse(SERVER_LINE);
        const cases: unknown[] = [
            "not json at all",
            "[1,2,3]",
            JSON.stringify({ ...good, t: "soon" }),
            JSON.stringify({ ...good, rpm_meas: "fast" }),
            JSON.stringify({ ...good, status: 7 }),
            JSON.stringify({ ...good, channels: good.channels.slice(0, 5) }),
            JSON.stringify({
                ...good,
                channels: [...good.channels.slice(1), good.channels[0]],
            }),
            JSON.stringify({ ...good, pedal_N: [1] }),
            JSON.stringify({ ...good, mmg_env: [1, 2, 3] }),
        ];
        for (const line of cases) {
            expect(() => parseFrame(line as string)).toThrow(ProtocolError);
        }
    });

    it("round-trips random frames through the wire format", () => {
        const rand = mulberry32(2024);
        for (let i = 0; i < 300; i++) {
            const spec = randomFrameSpec(rand);
            const frame = wireFrame(spec);
            expect(frame.t).toBe(spec.t);
            expect(frame.rpm_meas).toBe(spec.rpm_meas ?? null);
            expect(frame.error).toBe(spec.error);
            expect(frame.channels.map((c) => c.active)).toEqual(spec.active);
            expect(frame.mmg_env).toEqual(spec.mmg_env);
        }
    });

    it("splits newline-delimited payloads and drops blanks", () => {
        expect(splitLines(SERVER_LINE + "\n")).toEqual([SERVER_LINE]);
        expect(splitLines(SERVER_LINE + "\n" + SERVER_LINE + "\n")).toHaveLength(2);
        expect(splitLines("\n\n")).toEqual([]);
    });
});
