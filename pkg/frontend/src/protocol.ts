// Wire protocol shared with the simulation service. The JSON shapes here
// mirror shared/protocol_fixture.json, which both sides test against.

export interface HelloFrame {
  type: "hello";
  version: number;
  trajectories: string[];
}

export interface StateFrame {
  type: "state";
  t: number;
  x: number;
  y: number;
  theta: number;
  v: number;
  e: [number, number, number, number];
  ref: { x: number; y: number; theta: number } | null;
  recording: boolean;
  samples: number;
  running: boolean;
  path?: [number, number][];
}

export interface NoticeFrame {
  type: "warning" | "error";
  message: string;
}

export interface RecordedFrame {
  type: "recorded";
  file: string;
  samples: number;
}

export type ServerFrame = HelloFrame | StateFrame | NoticeFrame | RecordedFrame;

export interface CommandFrame {
  type: "cmd";
  throttle: number;
  steering: number;
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/** Build an outbound command frame; values are clamped before sending. */
export function commandFrame(throttle: number, steering: number): CommandFrame {
  return {
    type: "cmd",
    throttle: clamp(throttle, 0, 1),
    steering: clamp(steering, -1, 1),
  };
}

export function startFrame(trajectory: string) {
  return { type: "start", trajectory };
}

export function recordFrame(on: boolean) {
  return { type: "record", on };
}

export function stopFrame() {
  return { type: "stop" };
}

/** Parse a server frame, returning null for anything malformed. */
export function parseServerFrame(raw: string): ServerFrame | null {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof doc !== "object" || doc === null) return null;
  const frame = doc as Record<string, unknown>;
  switch (frame.type) {
    case "hello":
      if (Array.isArray(frame.trajectories) && typeof frame.version === "number")
        return frame as unknown as HelloFrame;
      return null;
    case "state":
      if (
        typeof frame.t === "number" &&
        typeof frame.x === "number" &&
        typeof frame.y === "number" &&
        typeof frame.theta === "number" &&
        typeof frame.v === "number" &&
        Array.isArray(frame.e) &&
        frame.e.length === 4
      )
        return frame as unknown as StateFrame;
      return null;
    case "warning":
    case "error":
      if (typeof frame.message === "string") return frame as unknown as NoticeFrame;
      return null;
    case "recorded":
      if (typeof frame.file === "string" && typeof frame.samples === "number")
        return frame as unknown as RecordedFrame;
      return null;
    default:
      return null;
  }
}
