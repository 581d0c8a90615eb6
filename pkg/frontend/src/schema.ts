/**
 * Request/response shapes of the render service, mirrored as zod schemas so
 * every outgoing request can be validated against the wire contract.
 */

import { z } from "zod";

const vec3 = z.array(z.number().finite()).length(3);

export const CameraSchema = z.object({
  position: vec3,
  target: vec3,
  up: vec3,
  fov_deg: z.number().gt(10).lt(140),
  width: z.number().int().min(16).max(1024),
  height: z.number().int().min(16).max(1024),
});

export const RenderRequestSchema = z.object({
  camera: CameraSchema,
  light_dir: vec3.refine((v) => Math.hypot(v[0]!, v[1]!, v[2]!) > 1e-8, {
    message: "light_dir must be normalizable",
  }),
  frame: z.enum(["world", "camera"]),
  latent: z.string().min(1),
});

export type RenderRequest = z.infer<typeof RenderRequestSchema>;
export type CameraJson = z.infer<typeof CameraSchema>;

export const SceneInfoSchema = z.object({
  id: z.string(),
  name: z.string(),
  splat_count: z.number().int(),
  default_camera: z.record(z.unknown()),
  bounds: z.object({ min: vec3, max: vec3 }),
});

export const SceneListSchema = z.array(SceneInfoSchema);

export const LightsSchema = z.object({
  directions: z.array(vec3),
  unlit_available: z.boolean(),
});

export type SceneInfo = z.infer<typeof SceneInfoSchema>;
export type LightsInfo = z.infer<typeof LightsSchema>;
