/** Shared scaffolding for the suite: fixture PNGs, a real study server, and
 * an independent rescoring of transcripts to check the server's report
 * against.
 *
 * The PNG codec here is intentionally minimal (8-bit grayscale, filter 0)
 * so the tests carry no image dependency; the decoder only needs to recover
 * mean brightness, which is how the scripted "perfect observer" tells the
 * two fixture classes apart.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdirSync, mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { deflateSync, inflateSync } from "node:zlib";

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(buf: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < buf.length; i++) {
    c = (CRC_TABLE[(c ^ buf[i]!) & 0xff]! ^ (c >>> 8)) >>> 0;
  }
  return (c ^ 0xffffffff) >>> 0;
}

function chunk(type: string, data: Uint8Array): Buffer {
  const head = Buffer.alloc(8);
  head.writeUInt32BE(data.length, 0);
  head.write(type, 4, "ascii");
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(crc32(Buffer.concat([head.subarray(4), data])), 0);
  return Buffer.concat([head, data, crc]);
}

const PNG_SIGNATURE = Buffer.from([137, 80, 78, 71, 13, 10, 26, 10]);

/** Flat 8-bit grayscale PNG at the given shade. */
export function encodeGrayPng(width: number, height: number, shade: number): Buffer {
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  const raw = Buffer.alloc(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.fill(shade, y * (width + 1) + 1, (y + 1) * (width + 1));
  }
  return Buffer.concat([
    PNG_SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", deflateSync(raw)),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

/** Mean pixel byte of an 8-bit grayscale, filter-0 PNG. */
export function pngMeanByte(png: Buffer): number {
  if (!png.subarray(0, 8).equals(PNG_SIGNATURE)) throw new Error("not a PNG");
  let width = 0;
  let height = 0;
  const idat: Buffer[] = [];
  for (let off = 8; off < png.length; ) {
    const len = png.readUInt32BE(off);
    const type = png.toString("ascii", off + 4, off + 8);
    const data = png.subarray(off + 8, off + 8 + len);
    if (type === "IHDR") {
      width = data.readUInt32BE(0);
      height = data.readUInt32BE(4);
      if (data[8] !== 8 || data[9] !== 0) throw new Error("unsupported PNG layout");
    } else if (type === "IDAT") {
      idat.push(data);
    }
    off += 12 + len;
  }
  const raw = inflateSync(Buffer.concat(idat));
  let sum = 0;
  for (let y = 0; y < height; y++) {
    const row = y * (width + 1);
    if (raw[row] !== 0) throw new Error("unsupported PNG filter");
    for (let x = 1; x <= width; x++) sum += raw[row + x]!;
  }
  return sum / (width * height);
}

export interface FixtureDirs {
  realDir: string;
  fakeDir: string;
}

/** Ten dark "real" and ten bright "fake" radiograph stand-ins. */
export function makeFixtures(): FixtureDirs {
  const root = mkdtempSync(join(tmpdir(), "observer-fixtures-"));
  const realDir = join(root, "real");
  const fakeDir = join(root, "fake");
  mkdirSync(realDir);
  mkdirSync(fakeDir);
  for (let i = 0; i < 10; i++) {
    writeFileSync(join(realDir, `real_${i}.png`), encodeGrayPng(32, 24, 20 + i));
    writeFileSync(join(fakeDir, `fake_${i}.png`), encodeGrayPng(32, 24, 200 + i));
  }
  return { realDir, fakeDir };
}

export interface ServerHandle {
  baseUrl: string;
  stop(): Promise<void>;
}

export interface ServerOptions {
  seconds: number;
  grace: number;
  nEach?: number;
}

/** Spawn the real study service and wait for /healthz. */
export async function startServer(
  dirs: FixtureDirs,
  opts: ServerOptions,
): Promise<ServerHandle> {
  const sessionDir = mkdtempSync(join(tmpdir(), "observer-sessions-"));
  const port = 20000 + Math.floor(Math.random() * 20000);
  const baseUrl = `http://127.0.0.1:${port}`;
  const proc = spawn(
    "radsynth",
    [
      "study", "serve",
      "--real", dirs.realDir,
      "--fake", dirs.fakeDir,
      "--sessions", sessionDir,
      "--host", "127.0.0.1",
      "--port", String(port),
      "--n-each", String(opts.nEach ?? 10),
      "--seconds", String(opts.seconds),
      "--grace", String(opts.grace),
    ],
    { stdio: ["ignore", "ignore", "pipe"] },
  );
  let stderr = "";
  proc.stderr!.on("data", (d: Buffer) => {
    stderr += d.toString();
  });
  let exited = false;
  proc.once("exit", () => {
    exited = true;
  });

  const start = Date.now();
  for (;;) {
    if (exited) throw new Error(`study server exited during startup:\n${stderr}`);
    if (Date.now() - start > 45_000) {
      proc.kill("SIGKILL");
      throw new Error(`study server never became healthy:\n${stderr}`);
    }
    try {
      const resp = await fetch(`${baseUrl}/healthz`);
      if (resp.ok) break;
    } catch {
      // not listening yet
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }

  const stop = () =>
    new Promise<void>((resolve) => {
      if (exited) {
        resolve();
        return;
      }
      proc.once("exit", () => resolve());
      proc.kill("SIGTERM");
      setTimeout(() => proc.kill("SIGKILL"), 3000).unref();
    });
  return { baseUrl, stop };
}

export interface TranscriptRow {
  index: number;
  imageId: string;
  truth: "real" | "fake";
  value: number;
  elapsed: number;
  timedOut: boolean;
}

export function parseTranscript(csv: string): TranscriptRow[] {
  const lines = csv.split(/\r?\n/).filter((line) => line.length > 0);
  if (lines[0] !== "index,image_id,truth,value,elapsed,timed_out") {
    throw new Error(`unexpected transcript header: ${lines[0]}`);
  }
  return lines.slice(1).map((line) => {
    const parts = line.split(",");
    if (parts.length !== 6) throw new Error(`bad transcript row: ${line}`);
    const truth = parts[2]!;
    if (truth !== "real" && truth !== "fake") {
      throw new Error(`bad truth label: ${truth}`);
    }
    return {
      index: Number(parts[0]),
      imageId: parts[1]!,
      truth,
      value: Number(parts[3]),
      elapsed: Number(parts[4]),
      timedOut: parts[5] === "1",
    };
  });
}

export interface RescoredReport {
  tp: number;
  tn: number;
  fp: number;
  fn: number;
  u: number;
  precision: number;
  recall: number;
  accuracy: number;
}

/** Fractional-certainty confusion counts, recomputed from the transcript.
 * Every value is a multiple of 0.25, so the sums are exact and the derived
 * ratios must match the server's report bit for bit. */
export function rescoreTranscript(rows: TranscriptRow[]): RescoredReport {
  let tp = 0;
  let tn = 0;
  let fp = 0;
  let fn = 0;
  let u = 0;
  for (const row of rows) {
    if (row.value === 0.5) u += 1;
    if (row.truth === "fake") {
      tp += row.value;
      fn += 1 - row.value;
    } else {
      fp += row.value;
      tn += 1 - row.value;
    }
  }
  const total = tp + tn + fp + fn;
  return {
    tp, tn, fp, fn, u,
    precision: tp + fp > 0 ? tp / (tp + fp) : 0,
    recall: tp + fn > 0 ? tp / (tp + fn) : 0,
    accuracy: total > 0 ? (tp + tn) / total : 0,
  };
}

/** AUC by brute-force pair counting, fake as the positive class. */
export function pairCountAuc(rows: TranscriptRow[]): number {
  const fakes = rows.filter((r) => r.truth === "fake").map((r) => r.value);
  const reals = rows.filter((r) => r.truth === "real").map((r) => r.value);
  let wins = 0;
  for (const f of fakes) {
    for (const r of reals) {
      if (f > r) wins += 1;
      else if (f === r) wins += 0.5;
    }
  }
  return wins / (fakes.length * reals.length);
}
