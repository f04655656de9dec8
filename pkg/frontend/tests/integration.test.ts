// End-to-end: scripted browser session (jsdom) against a live serve-test
// process. Covers both parts, checks that posted ratings land in
// /api/results with exact per-condition means, and that the condition
// anonymization round-trips (tokens are matched to conditions by comparing
// audio bytes, never by name).

import { ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync, mkdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { dirname, join, resolve } from "node:path";
import { fileURLToPath } from "node:url";

import { JSDOM } from "jsdom";
import { afterAll, beforeAll, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/client.js";
import { SessionController } from "../src/controller.js";
import { renderSession } from "../src/view.js";
import type { SessionDescriptor } from "../src/types.js";

const REPO_ROOT = resolve(dirname(fileURLToPath(import.meta.url)), "..", "..");
const CONDITIONS = ["unet-like", "tasnet-like"] as const;

function pcm16Wav(seed: number, samples = 400, rate = 8000): Buffer {
  // distinct deterministic payload per seed; amplitude ~0.3
  const data = Buffer.alloc(samples * 2);
  let state = seed >>> 0;
  for (let i = 0; i < samples; i += 1) {
    state = (state * 1103515245 + 12345) >>> 0;
    const value = Math.round((((state / 0xffffffff) * 2 - 1) * 0.3) * 32767);
    data.writeInt16LE(value, i * 2);
  }
  const header = Buffer.alloc(44);
  header.write("RIFF", 0);
  header.writeUInt32LE(36 + data.length, 4);
  header.write("WAVE", 8);
  header.write("fmt ", 12);
  header.writeUInt32LE(16, 16);
  header.writeUInt16LE(1, 20); // PCM
  header.writeUInt16LE(1, 22); // mono
  header.writeUInt32LE(rate, 24);
  header.writeUInt32LE(rate * 2, 28);
  header.writeUInt16LE(2, 32);
  header.writeUInt16LE(16, 34);
  header.write("data", 36);
  header.writeUInt32LE(data.length, 40);
  return Buffer.concat([header, data]);
}

interface Service {
  proc: ChildProcess;
  baseUrl: string;
  root: string;
}

async function startService(): Promise<Service> {
  const root = mkdtempSync(join(tmpdir(), "podbench-ui-"));
  mkdirSync(join(root, "audio"));
  const excerpts = [];
  for (let i = 0; i < 8; i += 1) {
    const excerptId = `ex${i}`;
    const mixture = `audio/${excerptId}_mix.wav`;
    writeFileSync(join(root, mixture), pcm16Wav(1000 + i));
    const estimates: Record<string, string> = {};
    CONDITIONS.forEach((condition, c) => {
      const rel = `audio/${excerptId}_${c}.wav`;
      writeFileSync(join(root, rel), pcm16Wav(2000 + i * 10 + c));
      estimates[condition] = rel;
    });
    excerpts.push({ excerpt_id: excerptId, mixture, estimates });
  }
  const configPath = join(root, "config.json");
  writeFileSync(
    configPath,
    JSON.stringify({
      conditions: CONDITIONS,
      training_excerpt_id: "ex0",
      excerpts,
    }),
  );

  const proc = spawn(
    "python3",
    [
      "-m",
      "podbench",
      "serve-test",
      "--config",
      configPath,
      "--ratings",
      join(root, "ratings.jsonl"),
      "--port",
      "0",
    ],
    {
      cwd: REPO_ROOT,
      env: { ...process.env, PYTHONPATH: join(REPO_ROOT, "src") },
      stdio: ["ignore", "pipe", "pipe"],
    },
  );
  const baseUrl = await new Promise<string>((resolvePromise, rejectPromise) => {
    let buffer = "";
    const timer = setTimeout(() => rejectPromise(new Error("service did not start")), 20000);
    proc.stdout!.on("data", (chunk: Buffer) => {
      buffer += chunk.toString();
      const match = buffer.match(/listening on (http:\/\/[\d.]+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolvePromise(match[1]!);
      }
    });
    proc.stderr!.on("data", () => undefined);
    proc.on("exit", (code) => {
      clearTimeout(timer);
      rejectPromise(new Error(`service exited early with code ${code}`));
    });
  });
  return { proc, baseUrl, root };
}

/** Map each stimulus token to its condition by comparing served audio
 * bytes with the files we wrote; the UI itself never sees these names. */
async function identifyConditions(
  service: Service,
  descriptor: SessionDescriptor,
): Promise<Map<string, (typeof CONDITIONS)[number]>> {
  const byCondition = new Map<string, Buffer>();
  for (let i = 0; i < 8; i += 1) {
    CONDITIONS.forEach((condition, c) => {
      byCondition.set(`ex${i}:${condition}`, readFileSync(join(service.root, `audio/ex${i}_${c}.wav`)));
    });
  }
  const out = new Map<string, (typeof CONDITIONS)[number]>();
  for (const task of descriptor.tasks) {
    for (const stimulus of task.stimuli) {
      const response = await fetch(service.baseUrl + stimulus.url);
      expect(response.headers.get("content-type")).toBe("audio/wav");
      const body = Buffer.from(await response.arrayBuffer());
      const matches = CONDITIONS.filter((condition) =>
        body.equals(byCondition.get(`${task.excerpt_id}:${condition}`)!),
      );
      expect(matches).toHaveLength(1);
      out.set(stimulus.stimulus_id, matches[0]!);
    }
  }
  return out;
}

function mean(values: number[]): number {
  return values.reduce((a, b) => a + b, 0) / values.length;
}

function pstd(values: number[]): number {
  const m = mean(values);
  return Math.sqrt(mean(values.map((v) => (v - m) ** 2)));
}

describe("live listening test", () => {
  let service: Service;

  beforeAll(async () => {
    service = await startService();
  });

  afterAll(() => {
    service.proc.kill();
  });

  it("completes part 1 through the DOM and part 2 through the controller; MOS matches hand computation", async () => {
    const client = new ApiClient((input, init) => fetch(input, init), service.baseUrl);

    // ---- part 1: scripted browser session over all 8 pages ----
    const descriptor1 = await client.loadSession(1, 20240817, "scripted");
    expect(descriptor1.tasks).toHaveLength(8);
    expect(descriptor1.tasks[0]!.training).toBe(true);
    const tokenToCondition = await identifyConditions(service, descriptor1);

    // page p rates unet-like with plan[p] and tasnet-like with 6 - plan[p]
    const plan = [3, 5, 4, 5, 5, 4, 5, 4];

    const jsdom = new JSDOM('<main id="app"></main>', { url: service.baseUrl });
    const container = jsdom.window.document.getElementById("app") as HTMLElement;
    const controller1 = new SessionController(descriptor1);
    renderSession(container, controller1, client);

    for (let page = 0; page < 8; page += 1) {
      const task = controller1.currentTask;
      expect(container.querySelector(".progress")?.textContent).toBe(`Page ${page + 1} of 8`);
      for (const forbiddenName of CONDITIONS) {
        expect(container.innerHTML).not.toContain(forbiddenName);
      }
      for (const stimulus of task.stimuli) {
        const condition = tokenToCondition.get(stimulus.stimulus_id)!;
        const value = condition === "unet-like" ? plan[page]! : 6 - plan[page]!;
        const input = container.querySelector(
          `input[name="${stimulus.stimulus_id}-OVRL"][value="${value}"]`,
        ) as HTMLInputElement;
        input.click();
      }
      (container.querySelector("button.submit") as HTMLButtonElement).click();
      await vi.waitFor(() => {
        const advanced =
          controller1.isFinished || controller1.currentIndex === page + 1;
        expect(advanced).toBe(true);
      });
    }
    expect(controller1.isFinished).toBe(true);
    expect(container.querySelector(".completion")).not.toBeNull();

    // ---- part 2: SIG and BAK via the controller API ----
    const descriptor2 = await client.loadSession(2, 77, "scripted");
    expect(descriptor2.metrics).toEqual(["SIG", "BAK"]);
    const tokens2 = await identifyConditions(service, descriptor2);
    const controller2 = new SessionController(descriptor2);
    const part2Plan = { "unet-like": { SIG: 4, BAK: 5 }, "tasnet-like": { SIG: 2, BAK: 1 } };
    while (!controller2.isFinished) {
      const task = controller2.currentTask;
      for (const stimulus of task.stimuli) {
        const condition = tokens2.get(stimulus.stimulus_id)!;
        controller2.setRating(stimulus.stimulus_id, "SIG", part2Plan[condition].SIG);
        controller2.setRating(stimulus.stimulus_id, "BAK", part2Plan[condition].BAK);
      }
      const outcome = await controller2.submitCurrent(client);
      expect(outcome.ok).toBe(true);
    }

    // ---- results: anonymization round-trips and MOS matches hand math ----
    const results = await client.results();
    const byKey = new Map(results.groups.map((g) => [`${g.condition}:${g.metric}`, g]));

    // training page (page 0) is excluded: scored part-1 values are plan[1..7]
    const scoredUnet = plan.slice(1);
    const scoredTasnet = scoredUnet.map((v) => 6 - v);
    const unetOvrl = byKey.get("unet-like:OVRL")!;
    expect(unetOvrl.n).toBe(7);
    expect(unetOvrl.mean).toBeCloseTo(mean(scoredUnet), 12);
    expect(unetOvrl.std).toBeCloseTo(pstd(scoredUnet), 12);
    const tasnetOvrl = byKey.get("tasnet-like:OVRL")!;
    expect(tasnetOvrl.mean).toBeCloseTo(mean(scoredTasnet), 12);

    expect(byKey.get("unet-like:SIG")!.mean).toBe(4);
    expect(byKey.get("unet-like:BAK")!.mean).toBe(5);
    expect(byKey.get("tasnet-like:SIG")!.mean).toBe(2);
    expect(byKey.get("tasnet-like:BAK")!.mean).toBe(1);
    expect(byKey.get("unet-like:SIG")!.n).toBe(7);
  });

  it("rejects an out-of-scale rating end to end and the page survives", async () => {
    const client = new ApiClient((input, init) => fetch(input, init), service.baseUrl);
    const descriptor = await client.loadSession(1, 5150, "validator");
    const task = descriptor.tasks[1]!;
    const response = await fetch(`${service.baseUrl}/api/ratings`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        session_id: descriptor.session_id,
        excerpt_id: task.excerpt_id,
        ratings: task.stimuli.map((s) => ({
          stimulus_id: s.stimulus_id,
          metric: "OVRL",
          value: 9,
        })),
      }),
    });
    expect(response.status).toBe(422);
    const doc = (await response.json()) as { offenders: string[] };
    expect(doc.offenders.length).toBeGreaterThan(0);
  });
});
