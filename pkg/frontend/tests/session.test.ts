/** End-to-end sessions against the real study service.
 *
 * The service is spawned from the installed CLI, so these tests exercise the
 * actual wire contract: deck creation, item sequencing, deadline stamping,
 * submission verdicts, and the report/transcript pair. The report is checked
 * against an independent rescoring of the transcript; every response value
 * is a multiple of 0.25, so the confusion sums and their ratios must agree
 * bit for bit.
 */

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { CurrentItem, StudyClient, SubmitStatus } from "../src/api.js";
import { Driver, runSession } from "../src/session.js";
import { STOPS } from "../src/slider.js";
import {
  FixtureDirs,
  ServerHandle,
  makeFixtures,
  pairCountAuc,
  parseTranscript,
  pngMeanByte,
  rescoreTranscript,
  startServer,
} from "./helpers.js";

let dirs: FixtureDirs;

beforeAll(() => {
  dirs = makeFixtures();
});

describe("live sessions", () => {
  let server: ServerHandle;
  let client: StudyClient;

  beforeAll(async () => {
    server = await startServer(dirs, { seconds: 8, grace: 1 });
    client = new StudyClient(server.baseUrl);
  });

  afterAll(async () => {
    await server.stop();
  });

  it("a brightness oracle walks the deck to a perfect report", async () => {
    // fixture classes are separable by mean shade alone, so an observer
    // that actually downloads and inspects each image must score perfectly
    const oracle: Driver = {
      async decide(item: CurrentItem) {
        const resp = await fetch(client.imageUrl(item.imageUrl));
        expect(resp.ok).toBe(true);
        const png = Buffer.from(await resp.arrayBuffer());
        return pngMeanByte(png) > 128 ? 1 : 0;
      },
    };
    const indices: number[] = [];
    const statuses: SubmitStatus[] = [];
    const { sessionId, report } = await runSession(client, "oracle", 7, oracle, {
      onItem: (item) => indices.push(item.index),
      onSubmitted: (_item, _value, status) => statuses.push(status),
    });

    expect(indices).toEqual([...Array(20).keys()]);
    expect(statuses).toHaveLength(20);
    expect(new Set(statuses)).toEqual(new Set(["accepted"]));

    expect(report.tp).toBe(10);
    expect(report.tn).toBe(10);
    expect(report.fp).toBe(0);
    expect(report.fn).toBe(0);
    expect(report.u).toBe(0);
    expect(report.precision).toBe(1);
    expect(report.recall).toBe(1);
    expect(report.accuracy).toBe(1);
    expect(report.auc).toBe(1);

    const rows = parseTranscript(await client.transcriptCsv(sessionId));
    expect(rows).toHaveLength(20);
    expect(rows.filter((r) => r.truth === "fake")).toHaveLength(10);
    expect(rows.every((r) => !r.timedOut)).toBe(true);
    const rescored = rescoreTranscript(rows);
    expect(rescored).toEqual({
      tp: 10, tn: 10, fp: 0, fn: 0, u: 0,
      precision: 1, recall: 1, accuracy: 1,
    });
  });

  it("a scripted mixed observer's report matches an independent rescore", async () => {
    const scripted: Driver = {
      async decide(item: CurrentItem) {
        return STOPS[(item.index * 7 + 3) % 5]!;
      },
    };
    const { sessionId, report } = await runSession(client, "scripted", 11, scripted);
    const rows = parseTranscript(await client.transcriptCsv(sessionId));
    expect(new Set(rows.map((r) => r.value)).size).toBe(5);

    const rescored = rescoreTranscript(rows);
    expect(report.tp).toBe(rescored.tp);
    expect(report.tn).toBe(rescored.tn);
    expect(report.fp).toBe(rescored.fp);
    expect(report.fn).toBe(rescored.fn);
    expect(report.u).toBe(rescored.u);
    expect(report.precision).toBe(rescored.precision);
    expect(report.recall).toBe(rescored.recall);
    expect(report.accuracy).toBe(rescored.accuracy);
    expect(report.auc).toBeCloseTo(pairCountAuc(rows), 12);

    // fractional counts still conserve the class totals exactly
    expect(rescored.tp + rescored.fn).toBe(10);
    expect(rescored.tn + rescored.fp).toBe(10);
  });

  it("re-fetching the current item returns the same deadline stamp", async () => {
    const { sessionId } = await client.createSession("refetch", 3);
    const first = await client.nextItem(sessionId);
    const second = await client.nextItem(sessionId);
    expect(first).toEqual(second);
    if (first.done) throw new Error("fresh session reported done");
    expect(first.item.index).toBe(0);
    expect(first.item.deadlineEpochMs).toBeGreaterThan(Date.now() - 1000);
  });

  it("the service refuses off-grid values end to end", async () => {
    const { sessionId } = await client.createSession("offgrid", 4);
    const next = await client.nextItem(sessionId);
    if (next.done) throw new Error("fresh session reported done");
    // bypass the client's snapping and post a raw slider position
    const resp = await fetch(`${server.baseUrl}/session/${sessionId}/response`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ image_id: next.item.imageId, value: 0.3, elapsed_ms: 10 }),
    });
    expect(resp.status).toBe(422);
  });
});

describe("deadline enforcement", () => {
  let server: ServerHandle;
  let client: StudyClient;

  beforeAll(async () => {
    // zero grace: the runner's auto-submit at the deadline necessarily
    // arrives after it, so every verdict must be timed_out
    server = await startServer(dirs, { seconds: 0.25, grace: 0 });
    client = new StudyClient(server.baseUrl);
  });

  afterAll(async () => {
    await server.stop();
  });

  it("an observer who never answers is scored unsure on every item", async () => {
    const silent: Driver = {
      decide: () => new Promise<number>(() => {}),
    };
    const statuses: SubmitStatus[] = [];
    const { sessionId, report } = await runSession(client, "silent", 5, silent, {
      onSubmitted: (_item, value, status) => {
        expect(value).toBe(0.5);
        statuses.push(status);
      },
    });

    expect(statuses).toHaveLength(20);
    expect(statuses.every((s) => s === "timed_out")).toBe(true);
    expect(report.u).toBe(20);
    expect(report.tp).toBe(5);
    expect(report.tn).toBe(5);
    expect(report.fp).toBe(5);
    expect(report.fn).toBe(5);
    expect(report.precision).toBe(0.5);
    expect(report.recall).toBe(0.5);
    expect(report.accuracy).toBe(0.5);
    expect(report.auc).toBe(0.5); // every pair ties

    const rows = parseTranscript(await client.transcriptCsv(sessionId));
    expect(rows).toHaveLength(20);
    expect(rows.every((r) => r.timedOut && r.value === 0.5)).toBe(true);
  });
});
