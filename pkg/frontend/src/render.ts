/** Pure DOM renderers. Every number and band shown here is copied
 * verbatim from a service payload; nothing is recomputed client-side. */

import type { ViewState } from "./state.js";
import type { PhotoPayload, WhatIfEntry } from "./types.js";

const BAND_COLORS: Record<string, string> = {
  red: "#c0392b",
  orange: "#e67e22",
  yellow: "#d4b106",
  "light-green": "#7cb342",
  green: "#2e7d32",
};

export function bandColor(band: string | null): string {
  return band !== null && band in BAND_COLORS ? BAND_COLORS[band] : "#9e9e9e";
}

function el(
  tag: string,
  className: string,
  text?: string,
): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function formatRating(rating: number | null): string {
  return rating === null ? "not ratable" : rating.toFixed(3);
}

export function formatPercentile(percentile: number | null): string {
  if (percentile === null) {
    return "";
  }
  return `better than ${Math.round(percentile * 100)}% of the reference community`;
}

export function renderGauge(code: string, entry: WhatIfEntry): HTMLElement {
  const gauge = el("div", "gauge");
  gauge.dataset.situation = code;
  gauge.dataset.band = entry.band ?? "none";
  gauge.style.borderColor = bandColor(entry.band);
  gauge.appendChild(el("div", "gauge-code", code));
  const value = el("div", "gauge-rating", formatRating(entry.rating));
  value.style.color = bandColor(entry.band);
  gauge.appendChild(value);
  gauge.appendChild(el("div", "gauge-percentile", formatPercentile(entry.percentile)));
  gauge.appendChild(
    el("div", "gauge-coverage", `coverage ${(entry.coverage * 100).toFixed(0)}%`),
  );
  if (entry.delta !== null && entry.delta !== 0) {
    const sign = entry.delta > 0 ? "+" : "";
    gauge.appendChild(
      el("div", "gauge-delta", `${sign}${entry.delta.toFixed(3)} vs full profile`),
    );
  }
  return gauge;
}

export function renderPhotoCard(
  photo: PhotoPayload,
  masked: boolean,
): HTMLElement {
  const card = el("div", masked ? "photo-card masked" : "photo-card");
  card.dataset.photoId = photo.photo_id;
  card.dataset.band = photo.band ?? "none";

  const glyph = el("div", "photo-glyph");
  glyph.textContent = photo.boxes.length
    ? photo.boxes.map((box) => box.object).join(", ")
    : "(no detections)";
  card.appendChild(glyph);

  const badge = el(
    "div",
    "impact-badge",
    photo.no_signal ? "no signal" : (photo.impact as number).toFixed(3),
  );
  badge.style.background = bandColor(photo.band);
  card.appendChild(badge);

  const overlay = el("div", "box-overlay");
  for (const box of photo.boxes) {
    if (box.bbox === null) {
      continue;
    }
    const [x, y, w, h] = box.bbox;
    const rect = el("div", "box");
    rect.style.left = `${x * 100}%`;
    rect.style.top = `${y * 100}%`;
    rect.style.width = `${w * 100}%`;
    rect.style.height = `${h * 100}%`;
    rect.title = `${box.object} (${box.confidence.toFixed(2)}, rating ${box.rating.toFixed(2)})`;
    overlay.appendChild(rect);
  }
  card.appendChild(overlay);

  const maskButton = el("button", "mask-toggle", masked ? "unmask" : "mask");
  maskButton.dataset.action = "mask";
  card.appendChild(maskButton);
  const deleteButton = el("button", "delete-photo", "delete");
  deleteButton.dataset.action = "delete";
  card.appendChild(deleteButton);
  return card;
}

export function render(root: HTMLElement, state: ViewState): void {
  root.textContent = "";

  if (state.error !== null) {
    const banner = el("div", "error-banner", state.error);
    root.appendChild(banner);
  }

  const switchers = el("div", "switchers");
  const situationSelect = document.createElement("select");
  situationSelect.className = "situation-switcher";
  for (const info of state.situations) {
    const option = document.createElement("option");
    option.value = info.code;
    option.textContent = `${info.code} — ${info.display_name}`;
    option.selected = info.code === state.activeSituation;
    situationSelect.appendChild(option);
  }
  switchers.appendChild(situationSelect);

  const methodSelect = document.createElement("select");
  methodSelect.className = "method-switcher";
  const methods =
    state.situations.find((s) => s.code === state.activeSituation)?.methods ??
    [];
  for (const method of methods) {
    const option = document.createElement("option");
    option.value = method;
    option.textContent = method;
    option.selected = method === state.activeMethod;
    methodSelect.appendChild(option);
  }
  switchers.appendChild(methodSelect);
  root.appendChild(switchers);

  const gauges = el("div", "gauges");
  if (state.gauges !== null) {
    for (const code of Object.keys(state.gauges.situations).sort()) {
      gauges.appendChild(renderGauge(code, state.gauges.situations[code]));
    }
  } else if (state.profileId === null && state.error === null) {
    gauges.appendChild(el("div", "empty-state", "load a profile to begin"));
  }
  root.appendChild(gauges);

  const grid = el("div", "photo-grid");
  if (state.profileId !== null && state.photos.length === 0) {
    grid.appendChild(el("div", "empty-state", "no signal"));
  }
  for (const photo of state.photos) {
    grid.appendChild(renderPhotoCard(photo, state.masked.has(photo.photo_id)));
  }
  root.appendChild(grid);

  const log = el("ol", "action-log");
  for (const entry of state.log) {
    const sign =
      entry.delta === null ? "?" : entry.delta > 0 ? "+" : entry.delta < 0 ? "-" : "=";
    const item = el(
      "li",
      "log-entry",
      `${entry.action} ${entry.photoId ?? ""} [${entry.situation}] ` +
        `delta ${entry.delta === null ? "n/a" : entry.delta.toFixed(3)} ` +
        `-> ${formatRating(entry.rating)}`,
    );
    item.dataset.sign = sign;
    item.dataset.situation = entry.situation;
    log.appendChild(item);
  }
  root.appendChild(log);
}
