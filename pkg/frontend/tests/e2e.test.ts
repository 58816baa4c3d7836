// @vitest-environment jsdom
//
// End-to-end: a scripted browser session against the real dialogue service.
// The service is spawned as a child process with a 3-turn horizon so the
// script always sees start -> 3 utterances -> inform -> feedback, then the
// rendered view and the persisted transcript are checked against the API log.
import { spawn, type ChildProcess } from "node:child_process";
import fs from "node:fs";
import os from "node:os";
import path from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { ChatApp } from "../src/app";
import type { TranscriptRecord } from "../src/types";

const PORT = 8753;
const BASE = `http://127.0.0.1:${PORT}`;

let proc: ChildProcess;
let transcriptDir: string;
let serverLog = "";

async function waitForService(): Promise<void> {
  const deadline = Date.now() + 30_000;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/healthz`);
      if (resp.ok) return;
    } catch {
      /* not up yet */
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`service never came up; log:\n${serverLog}`);
}

beforeAll(async () => {
  transcriptDir = fs.mkdtempSync(path.join(os.tmpdir(), "kbdial-web-"));
  proc = spawn(
    "python3",
    [
      "-m",
      "kbdial.cli",
      "serve",
      "--kb",
      "small@1",
      "--seed",
      "7",
      "--port",
      String(PORT),
      "--transcripts",
      transcriptDir,
      "--max-turns",
      "3",
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  proc.stdout?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  proc.stderr?.on("data", (chunk: Buffer) => (serverLog += chunk.toString()));
  await waitForService();
}, 40_000);

afterAll(() => {
  proc?.kill("SIGTERM");
  fs.rmSync(transcriptDir, { recursive: true, force: true });
});

function domMessages(root: HTMLElement): Array<{ speaker: string; text: string }> {
  return [...root.querySelectorAll("#messages .msg")].map((li) => ({
    speaker: li.classList.contains("user") ? "user" : "agent",
    text: li.querySelector(".text")?.textContent ?? "",
  }));
}

describe("scripted browser session against the live service", () => {
  it("start -> 3 utterances -> inform -> feedback, with a faithful transcript", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;
    const app = new ChatApp(root, new ApiClient(BASE));

    await app.boot();
    expect([...app.agentNames]).toContain("rule-soft");

    // start an eval-mode session with the soft-lookup rule agent
    root.querySelector<HTMLSelectElement>("#agent-select")!.value =
      "rule-soft";
    root.querySelector<HTMLElement>('[data-action="start"]')!.click();
    await app.settled();

    expect(app.state.status).toBe("open");
    expect(app.state.sessionId).not.toBeNull();
    const sessionId = app.state.sessionId!;
    expect(app.state.targetCard).not.toBeNull();
    expect(root.querySelectorAll(".chip").length).toBeGreaterThan(0);
    expect(domMessages(root)).toHaveLength(1); // greeting

    // three utterances; an uninformative user guarantees the horizon inform
    const input = root.querySelector<HTMLInputElement>("#utterance")!;
    const send = () => {
      root.querySelector<HTMLElement>('[data-action="send"]')!.click();
      return app.settled();
    };

    input.value = "hello, i am searching for a movie";
    await send();
    expect(app.state.status).toBe("open");

    input.value = "i do not know";
    await send();
    expect(app.state.status).toBe("open");

    input.value = "i do not know that one either";
    await send();

    // the 3-turn horizon forces the inform on the third reply
    expect(app.state.status).toBe("done");
    expect(app.state.informForced).toBe(true);
    expect(app.state.results.length).toBeGreaterThan(0);
    expect(app.state.results.length).toBeLessThanOrEqual(5);
    expect(root.querySelectorAll("#results ol li")).toHaveLength(
      app.state.results.length,
    );

    // every turn so far is rendered: greeting + 3 user + 3 agent
    expect(domMessages(root)).toHaveLength(7);

    // submit feedback according to whether the target actually appeared
    const found = app.state.targetRank !== null;
    root
      .querySelector<HTMLElement>(
        `[data-action="feedback-${found ? "found" : "missed"}"]`,
      )!
      .click();
    await app.settled();

    expect(app.state.status).toBe("closed");
    const rendered = domMessages(root);
    expect(rendered).toHaveLength(8); // 4 user + 4 agent
    expect(rendered.filter((m) => m.speaker === "user")).toHaveLength(4);
    expect(rendered.filter((m) => m.speaker === "agent")).toHaveLength(4);

    // the API log agrees with what the browser rendered ...
    const summary = await new ApiClient(BASE).getSession(sessionId);
    expect(summary.status).toBe("informed");
    const logged = summary.transcript.filter((r) =>
      ["start", "user", "agent"].includes(r.event),
    );
    const loggedTexts = logged.map((r) =>
      r.event === "agent" ? (r.rendered_text as string) : (r.text as string),
    );
    // (the final rendered message is the local feedback confirmation)
    expect(rendered.slice(0, -1).map((m) => m.text)).toEqual(loggedTexts);
    expect(logged.map((r) => r.event)).toEqual([
      "start",
      "user",
      "agent",
      "user",
      "agent",
      "user",
      "agent",
    ]);

    // ... and the persisted transcript matches the API log exactly
    const feedbackRecords = summary.transcript.filter(
      (r) => r.event === "feedback",
    );
    expect(feedbackRecords).toHaveLength(1);
    expect(feedbackRecords[0]?.success).toBe(found);

    const persisted = fs
      .readFileSync(path.join(transcriptDir, `${sessionId}.jsonl`), "utf-8")
      .trim()
      .split("\n")
      .map((line) => JSON.parse(line) as TranscriptRecord);
    expect(persisted).toEqual(summary.transcript);
  }, 60_000);

  it("a second tab gets its own session; stale ids 404 into a banner", async () => {
    document.body.innerHTML = '<div id="app"></div>';
    const root = document.getElementById("app")!;
    const app = new ChatApp(root, new ApiClient(BASE));
    await app.boot();
    root.querySelector<HTMLElement>('[data-action="start"]')!.click();
    await app.settled();
    expect(app.state.status).toBe("open");

    // poke a bogus session id straight at the API client
    const api = new ApiClient(BASE);
    await expect(api.sendUtterance("nosuchsession", "hi")).rejects.toThrow(
      /no session/,
    );
  }, 30_000);
});
