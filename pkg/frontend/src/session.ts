/** The session loop: fetch, show, decide-or-expire, submit, repeat.
 *
 * Item order and deadlines are entirely server-owned; this loop just walks
 * whatever /next hands out. One request is in flight at a time, and the
 * submit path inherits the client's idempotent retries, so a dropped
 * acknowledgment can neither skip an item nor answer one twice.
 */

import { CurrentItem, Report, StudyClient, SubmitStatus } from "./api.js";
import { NEUTRAL, StopValue, snapToStop } from "./slider.js";

export interface Driver {
  /** Resolve with the observer's value for this item. May never resolve;
   * the deadline then answers for them. */
  decide(item: CurrentItem): Promise<number>;
}

export interface RunHooks {
  onItem?(item: CurrentItem): void;
  onSubmitted?(item: CurrentItem, value: StopValue, status: SubmitStatus): void;
  now?(): number;
}

/** The driver's choice, or neutral once the server deadline passes. */
function decideWithinDeadline(
  driver: Driver,
  item: CurrentItem,
  now: () => number,
): Promise<number> {
  let timer: ReturnType<typeof setTimeout>;
  const expiry = new Promise<number>((resolve) => {
    timer = setTimeout(() => resolve(NEUTRAL), Math.max(0, item.deadlineEpochMs - now()));
  });
  return Promise.race([driver.decide(item), expiry]).finally(() => clearTimeout(timer));
}

export async function runSession(
  client: StudyClient,
  observer: string,
  deckSeed: number,
  driver: Driver,
  hooks: RunHooks = {},
  nEach?: number,
): Promise<{ sessionId: string; report: Report }> {
  const now = hooks.now ?? Date.now;
  const { sessionId } = await client.createSession(observer, deckSeed, nEach);
  for (;;) {
    const next = await client.nextItem(sessionId);
    if (next.done) break;
    const item = next.item;
    hooks.onItem?.(item);
    const shownAt = now();
    const raw = await decideWithinDeadline(driver, item, now);
    // snap before the wire: the UI must never emit an off-grid value even
    // if a driver hands one over
    const value = snapToStop(raw);
    const status = await client.submit(sessionId, item.imageId, value, now() - shownAt);
    hooks.onSubmitted?.(item, value, status);
  }
  return { sessionId, report: await client.report(sessionId) };
}
