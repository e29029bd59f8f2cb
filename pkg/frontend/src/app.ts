/** Controller: wires the store to the renderer and DOM events. */

import { ApiClient, type FetchLike } from "./api.js";
import { render } from "./render.js";
import { ProfileStore } from "./state.js";
import type { ProfileUpload } from "./types.js";

export class WhatIfApp {
  readonly store: ProfileStore;

  constructor(
    readonly root: HTMLElement,
    baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.store = new ProfileStore(new ApiClient(baseUrl, fetchImpl));
    this.store.subscribe((state) => render(this.root, state));
    this.root.addEventListener("click", (event) => {
      const target = event.target as HTMLElement;
      if (target.tagName !== "BUTTON") {
        return;
      }
      const card = target.closest<HTMLElement>(".photo-card");
      if (card === null || card.dataset.photoId === undefined) {
        return;
      }
      if (target.dataset.action === "mask") {
        void this.store.toggleMask(card.dataset.photoId);
      } else if (target.dataset.action === "delete") {
        void this.store.deletePhoto(card.dataset.photoId);
      }
    });
    this.root.addEventListener("change", (event) => {
      const target = event.target as HTMLSelectElement;
      if (target.classList.contains("situation-switcher")) {
        void this.store.switchSituation(target.value);
      } else if (target.classList.contains("method-switcher")) {
        void this.store.switchMethod(target.value);
      }
    });
  }

  async init(): Promise<void> {
    await this.store.init();
  }

  async loadProfile(profile: ProfileUpload): Promise<void> {
    await this.store.loadProfile(profile);
  }

  /** Parse and load a user-supplied detections file. */
  async loadProfileText(text: string): Promise<void> {
    let parsed: unknown;
    try {
      parsed = JSON.parse(text);
    } catch {
      this.store.state.error = "profile file is not valid JSON";
      render(this.root, this.store.state);
      return;
    }
    const candidate = parsed as ProfileUpload;
    if (
      typeof candidate !== "object" ||
      candidate === null ||
      typeof candidate.user_id !== "string" ||
      !Array.isArray(candidate.photos)
    ) {
      this.store.state.error =
        "profile file must have user_id and photos[] (see detections schema)";
      render(this.root, this.store.state);
      return;
    }
    await this.loadProfile(candidate);
  }
}
