// WebSocket wrapper: latest-frame buffering, stall detection, command
// sender at a fixed rate. Rendering reads `latest` and never blocks on the
// network.

import { parseServerFrame, ServerFrame, StateFrame } from "./protocol.js";

export const SEND_RATE_HZ = 50;
export const STALL_AFTER_MS = 1000;

export class SessionClient {
  ws: WebSocket | null = null;
  latest: StateFrame | null = null;
  lastFrameAt = 0;
  trajectories: string[] = [];
  connected = false;
  onNotice: (kind: string, message: string) => void = () => undefined;
  onHello: (trajectories: string[]) => void = () => undefined;
  onState: (frame: StateFrame) => void = () => undefined;

  constructor(readonly url: string) {}

  connect(): void {
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.connected = true;
    };
    ws.onclose = () => {
      this.connected = false;
    };
    ws.onerror = () => {
      this.connected = false;
    };
    ws.onmessage = (event) => {
      const frame = parseServerFrame(String(event.data));
      if (!frame) return;
      this.dispatch(frame);
    };
  }

  dispatch(frame: ServerFrame): void {
    switch (frame.type) {
      case "hello":
        this.trajectories = frame.trajectories;
        this.onHello(frame.trajectories);
        break;
      case "state":
        this.latest = frame;
        this.lastFrameAt = Date.now();
        this.onState(frame);
        break;
      case "warning":
      case "error":
        this.onNotice(frame.type, frame.message);
        break;
      case "recorded":
        this.onNotice("recorded", `${frame.samples} samples -> ${frame.file}`);
        break;
    }
  }

  stalled(now: number = Date.now()): boolean {
    return this.connected && this.lastFrameAt > 0 && now - this.lastFrameAt > STALL_AFTER_MS;
  }

  send(doc: unknown): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(doc));
    }
  }
}
