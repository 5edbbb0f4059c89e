// ConsoleClient behavior against a scripted fake socket: control refusal
// while disconnected, pending-setpoint echo tracking, frame fanout, and
// automatic reconnect after a drop.

import { describe, expect, it } from "vitest";

import { ConsoleClient, WebSocketLike } from "../src/client.js";
import { CHANNEL_ORDER } from "../src/protocol.js";

type Listener = (event: { data?: unknown }) => void;

class FakeSocket implements WebSocketLike {
    sent: string[] = [];
    private listeners = new Map<string, Listener[]>();

    send(data: string): void {
        this.sent.push(data);
    }

    close(): void {
        this.fire("close");
    }

    addEventListener(type: "open" | "message" | "close" | "error", listener: Listener): void {
        const list = this.listeners.get(type) ?? [];
        list.push(listener);
        this.listeners.set(type, list);
    }

    fire(type: string, event: { data?: unknown } = {}): void {
        for (const listener of this.listeners.get(type) ?? []) listener(event);
    }
}

function frameLine(overrides: Record<string, unknown> = {}): string {
    return JSON.stringify({
        t: 1,
        theta_deg: 10,
        rpm_set: 0,
        rpm_meas: null,
        error: 0,
        power_pct: 0,
        status: "InProgress",
        channels: CHANNEL_ORDER.map((id) => ({ id, active: false, current_mA: 0 })),
        pedal_N: [0, 0],
        mmg_env: [0, 0, 0, 0],
        ...overrides,
    });
}

function harness(baseBackoffMs = 5) {
    const sockets: FakeSocket[] = [];
    let changes = 0;
    const client = new ConsoleClient({
        url: "ws://test",
        wsFactory: () => {
            const socket = new FakeSocket();
            sockets.push(socket);
            return socket;
        },
        baseBackoffMs,
        capBackoffMs: 50,
        onChange: () => (changes += 1),
    });
    return { client, sockets, changes: () => changes };
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

describe("ConsoleClient", () => {
    it("refuses controls until the socket is open, then sends exact bytes", () => {
        const { client, sockets } = harness();
        client.connect();
        expect(client.connected).toBe(false);
        expect(client.setSetpoint(40)).toBe(false);
        expect(sockets[0]!.sent).toEqual([]);

        sockets[0]!.fire("open");
        expect(client.connected).toBe(true);
        expect(client.setSetpoint(40)).toBe(true);
        expect(client.toggleRocker(false)).toBe(true);
        expect(client.setGains({ ki: 0.45 })).toBe(true);
        expect(sockets[0]!.sent).toEqual([
            '{"type":"setpoint","rpm":40}',
            '{"type":"rocker","on":false}',
            '{"type":"gains","ki":0.45}',
        ]);
        expect(client.rockerOn).toBe(false);
    });

    it("tracks the pending setpoint until telemetry echoes it", () => {
        const { client, sockets } = harness();
        client.connect();
        sockets[0]!.fire("open");
        client.setSetpoint(40);
        expect(client.pendingSetpoint).toBe(40);
        sockets[0]!.fire("message", { data: frameLine({ rpm_set: 0 }) + "\n" });
        expect(client.pendingSetpoint).toBe(40);
        sockets[0]!.fire("message", { data: frameLine({ rpm_set: 40 }) + "\n" });
        expect(client.pendingSetpoint).toBeNull();
        expect(client.view.latest!.rpm_set).toBe(40);
    });

    it("ingests batched lines and counts dropped garbage", () => {
        const { client, sockets } = harness();
        client.connect();
        sockets[0]!.fire("open");
        const payload = frameLine({ t: 1 }) + "\n" + frameLine({ t: 2 }) + "\n";
        sockets[0]!.fire("message", { data: payload });
        expect(client.view.history).toHaveLength(2);
        sockets[0]!.fire("message", { data: "{{{nonsense\n" });
        expect(client.view.framesDropped).toBe(1);
        expect(client.view.latest!.t).toBe(2);
    });

    it("reconnects with backoff after a drop and recovers", async () => {
        const { client, sockets } = harness(5);
        client.connect();
        sockets[0]!.fire("open");
        expect(client.connected).toBe(true);

        sockets[0]!.fire("close");
        expect(client.view.connection).toBe("reconnecting");
        expect(client.setSetpoint(50)).toBe(false);

        await sleep(30);
        expect(sockets.length).toBeGreaterThanOrEqual(2);
        sockets[sockets.length - 1]!.fire("open");
        expect(client.connected).toBe(true);
        expect(client.setSetpoint(50)).toBe(true);
    });

    it("stays down after a user close", async () => {
        const { client, sockets } = harness(5);
        client.connect();
        sockets[0]!.fire("open");
        client.close();
        expect(client.view.connection).toBe("disconnected");
        const count = sockets.length;
        await sleep(40);
        expect(sockets.length).toBe(count);
        expect(client.setSetpoint(10)).toBe(false);
    });
});
