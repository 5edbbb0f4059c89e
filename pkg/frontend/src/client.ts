// Socket lifecycle around the SessionView: connect, feed frames in, send
// controls out, reconnect with exponential backoff when the link drops.
// Controls refuse to fire while disconnected; the UI surfaces that.

import { backoffDelayMs } from "./backoff.js";
import {
    encodeGains,
    encodeRocker,
    encodeSetpoint,
    GainsUpdate,
    parseFrame,
    ProtocolError,
    splitLines,
} from "./protocol.js";
import { SessionView } from "./session.js";

export interface WebSocketLike {
    send(data: string): void;
    close(): void;
    addEventListener(
        type: "open" | "message" | "close" | "error",
        listener: (event: { data?: unknown }) => void,
    ): void;
}

export type WebSocketFactory = (url: string) => WebSocketLike;

export interface ClientOptions {
    url: string;
    wsFactory?: WebSocketFactory;
    baseBackoffMs?: number;
    capBackoffMs?: number;
    now?: () => number;
    onChange?: () => void;
}

function defaultFactory(url: string): WebSocketLike {
    const ctor = (globalThis as { WebSocket?: new (url: string) => WebSocketLike }).WebSocket;
    if (ctor === undefined) {
        throw new Error("no WebSocket implementation available; pass wsFactory");
    }
    return new ctor(url);
}

function toText(data: unknown): string {
    if (typeof data === "string") return data;
    if (data instanceof ArrayBuffer) return new TextDecoder().decode(data);
    return String(data);
}

export class ConsoleClient {
    readonly view = new SessionView();
    readonly url: string;

    /** Setpoint sent but not yet echoed back in telemetry. */
    pendingSetpoint: number | null = null;
    /** Operator's rocker position (user state, not a server reading). */
    rockerOn = true;

    private readonly wsFactory: WebSocketFactory;
    private readonly baseBackoffMs: number;
    private readonly capBackoffMs: number;
    private readonly now: () => number;
    private readonly onChange: () => void;

    private socket: WebSocketLike | null = null;
    private attempt = 0;
    private closedByUser = false;
    private reconnectTimer: ReturnType<typeof setTimeout> | null = null;

    constructor(options: ClientOptions) {
        this.url = options.url;
        this.wsFactory = options.wsFactory ?? defaultFactory;
        this.baseBackoffMs = options.baseBackoffMs ?? 500;
        this.capBackoffMs = options.capBackoffMs ?? 10_000;
        this.now = options.now ?? (() => Date.now());
        this.onChange = options.onChange ?? (() => {});
    }

    get connected(): boolean {
        return this.view.connection === "connected";
    }

    connect(): void {
        this.closedByUser = false;
        this.openSocket();
    }

    close(): void {
        this.closedByUser = true;
        if (this.reconnectTimer !== null) {
            clearTimeout(this.reconnectTimer);
            this.reconnectTimer = null;
        }
        this.teardownSocket();
        this.view.connection = "disconnected";
        this.onChange();
    }

    setSetpoint(rpm: number): boolean {
        if (!this.sendRaw(encodeSetpoint(rpm))) return false;
        this.pendingSetpoint = rpm;
        this.onChange();
        return true;
    }

    toggleRocker(on: boolean): boolean {
        if (!this.sendRaw(encodeRocker(on))) return false;
        this.rockerOn = on;
        this.onChange();
        return true;
    }

    setGains(gains: GainsUpdate): boolean {
        return this.sendRaw(encodeGains(gains));
    }

    private sendRaw(payload: string): boolean {
        if (!this.connected || this.socket === null) return false;
        try {
            this.socket.send(payload);
        } catch {
            return false;
        }
        return true;
    }

    private openSocket(): void {
        this.reconnectTimer = null;
        let socket: WebSocketLike;
        try {
            socket = this.wsFactory(this.url);
        } catch {
            this.scheduleReconnect();
            return;
        }
        this.socket = socket;
        socket.addEventListener("open", () => {
            if (this.socket !== socket) return;
            this.attempt = 0;
            this.view.connection = "connected";
            this.onChange();
        });
        socket.addEventListener("message", (event) => {
            if (this.socket !== socket) return;
            this.handlePayload(toText(event.data));
        });
        socket.addEventListener("close", () => {
            if (this.socket !== socket) return;
            this.socket = null;
            if (!this.closedByUser) this.scheduleReconnect();
        });
        socket.addEventListener("error", () => {
            // The matching close event drives the reconnect.
        });
    }

    private scheduleReconnect(): void {
        if (this.reconnectTimer !== null) return;
        this.view.connection = "reconnecting";
        this.onChange();
        const delay = backoffDelayMs(this.attempt, this.baseBackoffMs, this.capBackoffMs);
        this.attempt += 1;
        this.reconnectTimer = setTimeout(() => this.openSocket(), delay);
    }

    private teardownSocket(): void {
        const socket = this.socket;
        this.socket = null;
        if (socket !== null) {
            try {
                socket.close();
            } catch {
                // Closing a socket that never opened is fine to ignore.
            }
        }
    }

    private handlePayload(payload: string): void {
        for (const line of splitLines(payload)) {
            try {
                const frame = parseFrame(line);
                this.view.ingest(frame, this.now());
                if (this.pendingSetpoint !== null && frame.rpm_set === this.pendingSetpoint) {
                    this.pendingSetpoint = null;
                }
            } catch (err) {
                if (err instanceof ProtocolError) {
                    this.view.framesDropped += 1;
                } else {
                    throw err;
                }
            }
        }
        this.onChange();
    }
}
