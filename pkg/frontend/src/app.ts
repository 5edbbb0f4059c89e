// Browser shell: wires the slider, rocker and gain inputs to a
// ConsoleClient and repaints the dashboard on every change. All state
// shown comes from the socket handler or from the operator's own inputs.

import { ConsoleClient } from "./client.js";
import { renderDashboard } from "./dashboard.js";

function element<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (node === null) throw new Error(`missing element #${id}`);
    return node as T;
}

function endpointUrl(): string {
    const override = new URLSearchParams(window.location.search).get("ws");
    if (override !== null) return override;
    return "ws://127.0.0.1:8765";
}

const dashboard = element<HTMLDivElement>("dashboard");
const connBadge = element<HTMLSpanElement>("connection");
const warning = element<HTMLSpanElement>("warning");
const slider = element<HTMLInputElement>("setpoint");
const sliderLabel = element<HTMLSpanElement>("setpoint-label");
const rocker = element<HTMLInputElement>("rocker");
const stimOff = element<HTMLDivElement>("stim-off");
const gainInputs = {
    ki: element<HTMLInputElement>("gain-ki"),
    kp: element<HTMLInputElement>("gain-kp"),
    kd: element<HTMLInputElement>("gain-kd"),
};
const gainsApply = element<HTMLButtonElement>("gains-apply");

const client = new ConsoleClient({ url: endpointUrl(), onChange: scheduleRender });

let renderQueued = false;
function scheduleRender(): void {
    if (renderQueued) return;
    renderQueued = true;
    requestAnimationFrame(() => {
        renderQueued = false;
        render();
    });
}

function render(): void {
    dashboard.innerHTML = renderDashboard(client.view, Date.now());

    connBadge.textContent = client.view.connection;
    connBadge.className = `badge ${client.view.connection}`;

    const disabled = !client.connected;
    slider.disabled = disabled;
    rocker.disabled = disabled;
    gainsApply.disabled = disabled;

    const pending = client.pendingSetpoint;
    sliderLabel.textContent =
        pending !== null ? `${slider.value} RPM (pending)` : `${slider.value} RPM`;

    stimOff.hidden = client.rockerOn;
}

function warn(message: string): void {
    warning.textContent = message;
    setTimeout(() => {
        if (warning.textContent === message) warning.textContent = "";
    }, 3000);
}

slider.addEventListener("input", () => {
    const rpm = Number(slider.value);
    if (!client.setSetpoint(rpm)) warn("disconnected: setpoint not sent");
    scheduleRender();
});

rocker.addEventListener("change", () => {
    if (!client.toggleRocker(rocker.checked)) {
        warn("disconnected: rocker not sent");
        rocker.checked = client.rockerOn;
    }
    scheduleRender();
});

gainsApply.addEventListener("click", () => {
    const update: { ki?: number; kp?: number; kd?: number } = {};
    for (const key of ["ki", "kp", "kd"] as const) {
        const text = gainInputs[key].value.trim();
        if (text === "") continue;
        const value = Number(text);
        if (!Number.isFinite(value)) {
            warn(`${key} is not a number`);
            return;
        }
        update[key] = value;
    }
    if (Object.keys(update).length === 0) {
        warn("no gain values entered");
        return;
    }
    if (!client.setGains(update)) warn("disconnected: gains not sent");
});

// Staleness is wall-clock driven, so repaint even when no frames arrive.
setInterval(scheduleRender, 500);

client.connect();
render();
