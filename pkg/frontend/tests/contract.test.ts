/** S2 — the UI never diverges from the service: replay recorded
 * responses and assert every rendered number and band matches the
 * payload verbatim. */

// @vitest-environment happy-dom

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { beforeEach, describe, expect, it } from "vitest";

import { WhatIfApp } from "../src/app.js";
import { bandColor, formatRating } from "../src/render.js";
import type { PhotoPayload, WhatIfEntry } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const recorded = JSON.parse(
  readFileSync(join(here, "fixtures", "recorded.json"), "utf-8"),
);
const profile = JSON.parse(
  readFileSync(join(here, "fixtures", "profile.json"), "utf-8"),
);

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

/** Fetch stub that replays the recorded payloads. */
function replayFetch(): { fetch: typeof fetch; calls: string[] } {
  const calls: string[] = [];
  const impl = async (input: string, init?: RequestInit): Promise<Response> => {
    calls.push(input);
    if (input.endsWith("/situations")) {
      return json(recorded.situations);
    }
    if (input.endsWith("/profiles") && init?.method === "POST") {
      return json(recorded.upload, 201);
    }
    if (input.includes("/whatif")) {
      const body = JSON.parse(String(init?.body ?? "{}")) as {
        masked_photo_ids: string[];
      };
      return json(
        body.masked_photo_ids.length === 0
          ? recorded.whatif_empty
          : recorded.whatif_p2,
      );
    }
    if (input.includes("/photos")) {
      return json(recorded.photos_ACC);
    }
    throw new Error(`unexpected request: ${input}`);
  };
  return { fetch: impl as typeof fetch, calls };
}

describe("S2: rendered values always equal the service payload", () => {
  let app: WhatIfApp;
  let root: HTMLElement;

  beforeEach(async () => {
    document.body.innerHTML = '<main id="app"></main>';
    root = document.getElementById("app") as HTMLElement;
    const { fetch } = replayFetch();
    app = new WhatIfApp(root, "http://service", fetch);
    await app.init();
    await app.loadProfile(profile);
  });

  it("renders one gauge per situation with the payload's numbers and bands", () => {
    const gauges = [...root.querySelectorAll<HTMLElement>(".gauge")];
    const payload = recorded.whatif_empty.situations as Record<string, WhatIfEntry>;
    expect(gauges.length).toBe(Object.keys(payload).length);
    for (const gauge of gauges) {
      const code = gauge.dataset.situation as string;
      const entry = payload[code];
      expect(entry).toBeDefined();
      const shown = gauge.querySelector(".gauge-rating")?.textContent;
      expect(shown).toBe(formatRating(entry.rating));
      expect(gauge.dataset.band).toBe(entry.band ?? "none");
      expect(gauge.style.borderColor).toBe(bandColor(entry.band));
      const coverage = gauge.querySelector(".gauge-coverage")?.textContent;
      expect(coverage).toBe(`coverage ${(entry.coverage * 100).toFixed(0)}%`);
      const percentile = gauge.querySelector(".gauge-percentile")?.textContent;
      if (entry.percentile !== null) {
        expect(percentile).toContain(`${Math.round(entry.percentile * 100)}%`);
      }
    }
  });

  it("renders the photo grid in payload order with payload impacts", () => {
    const cards = [...root.querySelectorAll<HTMLElement>(".photo-card")];
    const photos = recorded.photos_ACC.photos as PhotoPayload[];
    expect(cards.map((card) => card.dataset.photoId)).toEqual(
      photos.map((photo) => photo.photo_id),
    );
    for (const [i, card] of cards.entries()) {
      const badge = card.querySelector(".impact-badge")?.textContent;
      const photo = photos[i];
      expect(badge).toBe(
        photo.no_signal ? "no signal" : (photo.impact as number).toFixed(3),
      );
      expect(card.dataset.band).toBe(photo.band ?? "none");
    }
  });

  it("applies the what-if payload to every gauge after masking", async () => {
    const card = root.querySelector<HTMLElement>('[data-photo-id="p2"]');
    expect(card).not.toBeNull();
    await app.store.toggleMask("p2");
    const payload = recorded.whatif_p2.situations as Record<string, WhatIfEntry>;
    for (const gauge of root.querySelectorAll<HTMLElement>(".gauge")) {
      const entry = payload[gauge.dataset.situation as string];
      expect(gauge.querySelector(".gauge-rating")?.textContent).toBe(
        formatRating(entry.rating),
      );
      expect(gauge.dataset.band).toBe(entry.band ?? "none");
    }
    // log deltas equal the payload deltas (rating_after - rating_before)
    const before = recorded.whatif_empty.situations as Record<string, WhatIfEntry>;
    const logEntries = [...root.querySelectorAll<HTMLElement>(".log-entry")];
    expect(logEntries.length).toBe(Object.keys(payload).length);
    for (const item of logEntries) {
      const code = item.dataset.situation as string;
      const expected =
        (payload[code].rating as number) - (before[code].rating as number);
      expect(item.textContent).toContain(expected.toFixed(3));
      expect(item.dataset.sign).toBe(expected > 0 ? "+" : expected < 0 ? "-" : "=");
    }
  });

  it("masked cards are visually distinct and excluded from the request", async () => {
    const { fetch, calls } = replayFetch();
    const app2 = new WhatIfApp(root, "http://service", fetch);
    await app2.init();
    await app2.loadProfile(profile);
    await app2.store.toggleMask("p2");
    expect(app2.store.excludedPhotoIds()).toEqual(["p2"]);
    const card = root.querySelector<HTMLElement>('[data-photo-id="p2"]');
    expect(card?.classList.contains("masked")).toBe(true);
    expect(calls.filter((c) => c.includes("/whatif")).length).toBe(2);
  });

  it("switching situations preserves the mask set", async () => {
    await app.store.toggleMask("p2");
    expect(app.store.excludedPhotoIds()).toEqual(["p2"]);
    await app.store.switchSituation("BANK");
    expect(app.store.state.activeSituation).toBe("BANK");
    expect(app.store.excludedPhotoIds()).toEqual(["p2"]);
    const select = root.querySelector<HTMLSelectElement>(".situation-switcher");
    expect(select?.value).toBe("BANK");
  });

  it("malformed profile file shows an error banner and no partial render", async () => {
    const { fetch } = replayFetch();
    const app2 = new WhatIfApp(root, "http://service", fetch);
    await app2.init();
    await app2.loadProfileText("{not json");
    expect(root.querySelector(".error-banner")?.textContent).toContain("JSON");
    expect(root.querySelectorAll(".gauge").length).toBe(0);
    expect(root.querySelectorAll(".photo-card").length).toBe(0);
  });
});
