/**
 * Typed client for the render service. Every outgoing render request is
 * validated against the wire schema before it leaves the browser.
 */

import {
  LightsSchema,
  RenderRequestSchema,
  SceneListSchema,
  type LightsInfo,
  type RenderRequest,
  type SceneInfo,
} from "./schema.js";

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export class RenderClient {
  constructor(readonly baseUrl: string) {}

  private async getJson(path: string): Promise<unknown> {
    let resp: Response;
    try {
      resp = await fetch(`${this.baseUrl}${path}`);
    } catch (err) {
      throw new ApiError(`service unreachable: ${err}`);
    }
    if (!resp.ok) throw new ApiError(`${path} failed`, resp.status);
    return resp.json();
  }

  async scenes(): Promise<SceneInfo[]> {
    return SceneListSchema.parse(await this.getJson("/api/scenes"));
  }

  async lights(sceneId: string): Promise<LightsInfo> {
    return LightsSchema.parse(await this.getJson(`/api/scenes/${sceneId}/lights`));
  }

  async render(sceneId: string, request: RenderRequest): Promise<Blob> {
    const body = RenderRequestSchema.parse(request);
    let resp: Response;
    try {
      resp = await fetch(`${this.baseUrl}/api/scenes/${sceneId}/render`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ApiError(`render transport failed: ${err}`);
    }
    if (!resp.ok) {
      throw new ApiError(`render failed: ${await resp.text()}`, resp.status);
    }
    return resp.blob();
  }
}

/** Service base URL from `?api=...`, defaulting to the page origin. */
export function apiBaseFromLocation(search: string, origin: string): string {
  const params = new URLSearchParams(search);
  return (params.get("api") ?? origin).replace(/\/+$/, "");
}
