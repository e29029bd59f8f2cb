/** Profile view state: mask/delete sets, latest service responses, and an
 * action log of rating deltas. What-if requests are serialized per
 * profile with latest-wins cancellation so a stale response can never
 * overwrite a newer one. */

import { ApiClient } from "./api.js";
import type {
  PhotoPayload,
  ProfileUpload,
  SituationInfo,
  WhatIfResponse,
} from "./types.js";

export interface LogEntry {
  action: string;
  photoId: string | null;
  situation: string;
  delta: number | null;
  rating: number | null;
}

export interface ViewState {
  profileId: string | null;
  userId: string | null;
  situations: SituationInfo[];
  activeSituation: string;
  activeMethod: string;
  gauges: WhatIfResponse | null;
  photos: PhotoPayload[];
  masked: Set<string>;
  deleted: Set<string>;
  log: LogEntry[];
  error: string | null;
  pending: boolean;
}

export type Listener = (state: ViewState) => void;

export class ProfileStore {
  readonly state: ViewState = {
    profileId: null,
    userId: null,
    situations: [],
    activeSituation: "",
    activeMethod: "",
    gauges: null,
    photos: [],
    masked: new Set(),
    deleted: new Set(),
    log: [],
    error: null,
    pending: false,
  };

  private listeners: Listener[] = [];
  private inFlight: AbortController | null = null;
  private requestCounter = 0;

  constructor(private readonly api: ApiClient) {}

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  excludedPhotoIds(): string[] {
    return [...new Set([...this.state.masked, ...this.state.deleted])].sort();
  }

  async init(): Promise<void> {
    const situations = await this.api.situations();
    this.state.situations = situations;
    if (situations.length > 0) {
      this.state.activeSituation = situations[0].code;
      const methods = situations[0].methods;
      this.state.activeMethod = methods.includes("base_eta")
        ? "base_eta"
        : methods[0];
    }
    this.emit();
  }

  async loadProfile(profile: ProfileUpload): Promise<void> {
    this.state.error = null;
    this.state.pending = true;
    this.emit();
    try {
      const profileId = await this.api.uploadProfile(profile);
      this.state.profileId = profileId;
      this.state.userId = profile.user_id;
      this.state.masked = new Set();
      this.state.deleted = new Set();
      this.state.log = [];
      await this.refresh("load", null);
    } catch (err) {
      this.state.error = err instanceof Error ? err.message : String(err);
      this.state.profileId = null;
      this.state.gauges = null;
      this.state.photos = [];
    } finally {
      this.state.pending = false;
      this.emit();
    }
  }

  /** Re-query gauges (one what-if round trip covers every situation) and
   * the photo grid for the active situation. */
  private async refresh(action: string, photoId: string | null): Promise<void> {
    const profileId = this.state.profileId;
    if (profileId === null) {
      return;
    }
    if (this.inFlight !== null) {
      this.inFlight.abort();
    }
    const controller = new AbortController();
    this.inFlight = controller;
    const requestId = ++this.requestCounter;

    const previous = this.state.gauges;
    const gauges = await this.api.whatIf(
      profileId,
      this.excludedPhotoIds(),
      this.state.activeMethod,
      controller.signal,
    );
    if (requestId !== this.requestCounter) {
      return; // a newer request already resolved; latest wins
    }
    this.inFlight = null;
    this.state.gauges = gauges;
    if (action === "mask" || action === "unmask" || action === "delete") {
      for (const code of Object.keys(gauges.situations).sort()) {
        const entry = gauges.situations[code];
        const before = previous?.situations[code]?.rating ?? null;
        const stepDelta =
          before !== null && entry.rating !== null
            ? entry.rating - before
            : null;
        this.state.log.push({
          action,
          photoId,
          situation: code,
          delta: stepDelta,
          rating: entry.rating,
        });
      }
    }
    const photos = await this.api.photos(
      profileId,
      this.state.activeSituation,
      this.state.activeMethod,
    );
    if (requestId !== this.requestCounter) {
      return;
    }
    this.state.photos = photos.photos.filter(
      (photo) => !this.state.deleted.has(photo.photo_id),
    );
    this.emit();
  }

  /** Run a state mutation + refresh; on failure roll the sets back. */
  private async mutate(
    action: string,
    photoId: string | null,
    change: () => void,
  ): Promise<void> {
    const maskedBefore = new Set(this.state.masked);
    const deletedBefore = new Set(this.state.deleted);
    change();
    try {
      await this.refresh(action, photoId);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") {
        return; // superseded by a newer request
      }
      this.state.masked = maskedBefore;
      this.state.deleted = deletedBefore;
      this.state.error = err instanceof Error ? err.message : String(err);
      this.emit();
    }
  }

  async toggleMask(photoId: string): Promise<void> {
    const masking = !this.state.masked.has(photoId);
    await this.mutate(masking ? "mask" : "unmask", photoId, () => {
      if (masking) {
        this.state.masked.add(photoId);
      } else {
        this.state.masked.delete(photoId);
      }
    });
  }

  async deletePhoto(photoId: string): Promise<void> {
    await this.mutate("delete", photoId, () => {
      this.state.deleted.add(photoId);
      this.state.masked.delete(photoId);
    });
  }

  /** Switching situations re-renders the grid but keeps the mask set. */
  async switchSituation(code: string): Promise<void> {
    this.state.activeSituation = code;
    await this.mutate("situation", null, () => {});
  }

  async switchMethod(method: string): Promise<void> {
    this.state.activeMethod = method;
    await this.mutate("method", null, () => {});
  }
}
