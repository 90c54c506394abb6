/** Countdown toward a server-stamped deadline.
 *
 * The deadline is an absolute epoch from the server and both processes sit
 * on synchronized clocks at study sites, so the display is the plain
 * differential against the local clock. Timeout ENFORCEMENT never happens
 * here: the server re-checks every submission against its own clock, so a
 * skewed client can only mis-display, not cheat.
 */

export function remainingMs(deadlineEpochMs: number, nowMs: number): number {
  return Math.max(0, deadlineEpochMs - nowMs);
}

/** Tenths-of-a-second display, rounded up so "0.0" never shows early. */
export function formatSeconds(ms: number): string {
  return (Math.ceil(ms / 100) / 10).toFixed(1);
}

/** Drive an element's text until the deadline passes; returns a stopper. */
export function startCountdown(
  el: { textContent: string | null },
  deadlineEpochMs: number,
  onExpire: () => void,
  now: () => number = Date.now,
  tickMs = 100,
): () => void {
  let timer: ReturnType<typeof setInterval> | null = null;
  const stop = () => {
    if (timer !== null) clearInterval(timer);
    timer = null;
  };
  const tick = () => {
    const left = remainingMs(deadlineEpochMs, now());
    el.textContent = formatSeconds(left);
    if (left <= 0) {
      stop();
      onExpire();
    }
  };
  timer = setInterval(tick, tickMs);
  tick();
  return stop;
}
