/** Thin typed client over fetch. All endpoints of the what-if service. */

import type {
  PhotosResponse,
  ProfileUpload,
  SituationInfo,
  WhatIfResponse,
} from "./types.js";

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    detail: string,
  ) {
    super(detail);
  }
}

async function parse<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let code = "http_error";
    let detail = `${response.status}`;
    try {
      const body = (await response.json()) as { error?: string; detail?: string };
      code = body.error ?? code;
      detail = body.detail ?? detail;
    } catch {
      /* non-JSON error body */
    }
    throw new ServiceError(response.status, code, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) =>
      fetch(input, init),
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async situations(): Promise<SituationInfo[]> {
    return parse(await this.fetchImpl(this.url("/situations")));
  }

  async uploadProfile(profile: ProfileUpload): Promise<string> {
    const response = await this.fetchImpl(this.url("/profiles"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(profile),
    });
    const body = await parse<{ profile_id: string }>(response);
    return body.profile_id;
  }

  async photos(
    profileId: string,
    situation: string,
    method: string,
  ): Promise<PhotosResponse> {
    const query = new URLSearchParams({ situation, method });
    return parse(
      await this.fetchImpl(
        this.url(`/profiles/${profileId}/photos?${query.toString()}`),
      ),
    );
  }

  async whatIf(
    profileId: string,
    maskedPhotoIds: string[],
    method: string,
    signal?: AbortSignal,
  ): Promise<WhatIfResponse> {
    const response = await this.fetchImpl(
      this.url(`/profiles/${profileId}/whatif`),
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ masked_photo_ids: maskedPhotoIds, method }),
        signal,
      },
    );
    return parse(response);
  }
}
