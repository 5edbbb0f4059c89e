// End-to-end against a live endpoint: spawn the Python CLI in serve mode
// on an ephemeral port, run the scripted operator sequence (setpoint 40,
// then rocker off), and hold it to the latency and safety budgets. Wire
// bytes are recorded at the socket so the control-message contract is
// checked against what actually went out.

import { afterAll, beforeAll, describe, expect, it } from "vitest";
import { ChildProcessWithoutNullStreams, spawn } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { fileURLToPath } from "node:url";
import WebSocket from "ws";

import { ConsoleClient, WebSocketLike } from "../src/client.js";
import { renderDashboard } from "../src/dashboard.js";
import { parseFrame, TelemetryFrame } from "../src/protocol.js";
import { waitFor } from "./helpers.js";

interface ReceivedFrame {
    frame: TelemetryFrame;
    wallMs: number;
}

const repoRoot = fileURLToPath(new URL("../..", import.meta.url));

let server: ChildProcessWithoutNullStreams | null = null;
let url = "";
let client: ConsoleClient;
const received: ReceivedFrame[] = [];
const sent: string[] = [];

function recordingFactory(target: string): WebSocketLike {
    const socket = new WebSocket(target);
    socket.addEventListener("message", (event) => {
        const text =
            typeof event.data === "string" ? event.data : String(event.data);
        for (const line of text.split("\n")) {
            if (line.length === 0) continue;
            received.push({ frame: parseFrame(line), wallMs: Date.now() });
        }
    });
    const loose = socket as unknown as {
        addEventListener(type: string, listener: unknown): void;
    };
    return {
        send: (data: string) => {
            sent.push(data);
            socket.send(data);
        },
        close: () => socket.close(),
        addEventListener: (type, listener) => loose.addEventListener(type, listener),
    };
}

beforeAll(async () => {
    const outDir = mkdtempSync(join(tmpdir(), "console-it-"));
    const proc = spawn(
        "python3",
        ["-m", "fescycle", "serve", "--port", "0", "--out-dir", outDir],
        { cwd: repoRoot, env: { ...process.env, PYTHONUNBUFFERED: "1" } },
    );
    server = proc;
    proc.stderr.on("data", (chunk) => process.stderr.write(String(chunk)));

    let banner = "";
    let settled = false;
    await new Promise<void>((resolve, reject) => {
        const timer = setTimeout(() => {
            if (!settled) {
                settled = true;
                reject(new Error(`no serve banner within 20 s; stdout so far:\n${banner}`));
            }
        }, 20_000);
        proc.stdout.on("data", (chunk) => {
            banner += String(chunk);
            const match = banner.match(/serving ws:\/\/([\d.]+):(\d+)/);
            if (match && !settled) {
                settled = true;
                clearTimeout(timer);
                url = `ws://${match[1]}:${match[2]}`;
                resolve();
            }
        });
        proc.on("exit", (code) => {
            if (!settled) {
                settled = true;
                clearTimeout(timer);
                reject(new Error(`serve exited early with code ${code}:\n${banner}`));
            }
        });
    });
});

afterAll(async () => {
    // A child killed by signal reports exitCode null and a signalCode.
    if (server === null || server.exitCode !== null || server.signalCode !== null) {
        return;
    }
    const exited = new Promise((resolve) => server!.once("exit", resolve));
    server.kill("SIGTERM");
    await exited;
});

describe("live console loop", () => {
    it("runs the scripted setpoint-then-rocker sequence within budget", async () => {
        client = new ConsoleClient({
            url,
            wsFactory: recordingFactory,
            baseBackoffMs: 200,
        });
        const connectMs = Date.now();
        client.connect();

        await waitFor(() => client.view.latest !== null, 3000);
        const firstFrameMs = received[0]!.wallMs - connectMs;
        expect(firstFrameMs).toBeLessThanOrEqual(1000);
        expect(client.view.connection).toBe("connected");

        await waitFor(() => received.length >= 3, 2000);
        const setpointSentMs = Date.now();
        expect(client.setSetpoint(40)).toBe(true);
        expect(client.pendingSetpoint).toBe(40);
        await waitFor(
            () => client.view.latest !== null && client.view.latest.rpm_set === 40,
            2000,
        );
        const echo = received.find((r) => r.frame.rpm_set === 40)!;
        const setpointLatencyMs = echo.wallMs - setpointSentMs;
        expect(setpointLatencyMs).toBeLessThanOrEqual(500);
        expect(client.pendingSetpoint).toBeNull();

        // Let the loop kick the crank so channels are actually firing.
        await waitFor(
            () => client.view.latest!.channels.some((c) => c.active),
            8000,
        );

        const beforeRocker = received.length;
        expect(client.toggleRocker(false)).toBe(true);
        await waitFor(() => received.length >= beforeRocker + 2, 2000);
        const next = received.slice(beforeRocker, beforeRocker + 2);
        const zeroIndex = next.findIndex((r) =>
            r.frame.channels.every((c) => c.current_mA === 0 && !c.active),
        );
        expect(zeroIndex).toBeGreaterThanOrEqual(0);
        expect(client.rockerOn).toBe(false);

        expect(sent).toEqual([
            '{"type":"setpoint","rpm":40}',
            '{"type":"rocker","on":false}',
        ]);

        const svg = renderDashboard(client.view, Date.now());
        expect(svg.startsWith("<svg")).toBe(true);
        expect(svg).toContain('class="trace-rpm-set"');
        expect(svg).toContain('class="dial-needle"');
        expect(svg).not.toContain("NaN");

        console.log(
            `[PASS] criterion 11: first frame ${firstFrameMs} ms, ` +
            `setpoint echo ${setpointLatencyMs} ms <= 500, ` +
            `all-zero currents in ${zeroIndex + 1} frame(s), ` +
            `dashboard rendered (${svg.length} chars)`,
        );
    });

    it("falls back to reconnecting and refuses controls once the server dies", async () => {
        expect(client.connected).toBe(true);
        server!.kill("SIGTERM");
        await waitFor(() => client.view.connection === "reconnecting", 5000);
        expect(client.setSetpoint(50)).toBe(false);
        // Last-known state stays on screen; staleness is flagged, nothing
        // is invented to fill the gap.
        expect(client.view.latest).not.toBeNull();
        expect(client.view.isStale(Date.now() + 2500)).toBe(true);
        client.close();
        expect(client.view.connection).toBe("disconnected");
    });
});
