// Reconnect pacing: plain exponential backoff with a ceiling. No jitter;
// one console talks to one local endpoint, so synchronized retries are
// not a concern and determinism keeps the behavior testable.

export const BACKOFF_BASE_MS = 500;
export const BACKOFF_CAP_MS = 10_000;

export function backoffDelayMs(
    attempt: number,
    baseMs: number = BACKOFF_BASE_MS,
    capMs: number = BACKOFF_CAP_MS,
): number {
    if (!Number.isInteger(attempt) || attempt < 0) {
        throw new RangeError("attempt must be a non-negative integer");
    }
    if (baseMs <= 0 || capMs < baseMs) {
        throw new RangeError("need 0 < baseMs <= capMs");
    }
    // Cap the exponent before shifting so large attempt counts cannot
    // overflow into negative or fractional delays.
    const exponent = Math.min(attempt, 30);
    return Math.min(capMs, baseMs * 2 ** exponent);
}
