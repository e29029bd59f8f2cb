/** Payload shapes of the what-if service. The UI never computes ratings
 * itself: every number on screen comes from one of these responses. */

export interface SituationInfo {
  code: string;
  display_name: string;
  objects: number;
  methods: string[];
}

export interface RatingPayload {
  rating: number | null;
  band: string | null;
  coverage: number;
  percentile: number | null;
  model_hash: string;
  situation?: string;
  method?: string;
}

export interface WhatIfEntry extends RatingPayload {
  delta: number | null;
}

export interface WhatIfResponse {
  method: string;
  masked_photo_ids: string[];
  situations: Record<string, WhatIfEntry>;
}

export interface BoxPayload {
  object: string;
  confidence: number;
  rating: number;
  bbox: [number, number, number, number] | null;
}

export interface PhotoPayload {
  photo_id: string;
  no_signal: boolean;
  impact: number | null;
  band: string | null;
  descriptor: {
    positive: number;
    negative: number;
    confidence: number;
  } | null;
  boxes: BoxPayload[];
}

export interface PhotosResponse {
  situation: string;
  method: string;
  photos: PhotoPayload[];
}

export interface ProfileUpload {
  user_id: string;
  photos: {
    photo_id: string;
    detections: { object: string; confidence: number; bbox?: number[] }[];
  }[];
}

export interface ApiError {
  error: string;
  detail: string;
}
