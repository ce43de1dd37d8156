// Single-page teleop client: connects to the simulation service, renders
// the world, turns held keys into commands at 50 Hz, and drives the
// recording controls.

import { Camera, follow, presetForTrajectory, ZOOM_PRESETS } from "./camera.js";
import { advanceCommand, Command, KeyState, keyField } from "./input.js";
import { SessionClient, SEND_RATE_HZ } from "./net.js";
import { commandFrame, recordFrame, startFrame, stopFrame } from "./protocol.js";
import { drawScene, pushCrumb, readoutText, Scene } from "./render.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const picker = document.getElementById("trajectory") as HTMLSelectElement;
const startBtn = document.getElementById("start") as HTMLButtonElement;
const recordBtn = document.getElementById("record") as HTMLButtonElement;
const stopBtn = document.getElementById("stop") as HTMLButtonElement;
const readout = document.getElementById("readout") as HTMLElement;
const notices = document.getElementById("notices") as HTMLElement;

const url = `ws://${location.hostname}:${location.port || 8700}/session`;
const client = new SessionClient(url);
const scene: Scene = { path: null, crumbs: [], state: null, stalled: false };
let cam: Camera = { cx: 0, cy: 0, scale: ZOOM_PRESETS.mid };
let cmd: Command = { throttle: 0, steering: 0 };
let recording = false;
const keys: KeyState = { up: false, down: false, left: false, right: false };

client.onHello = (names) => {
  picker.innerHTML = "";
  for (const name of names) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    picker.appendChild(opt);
  }
};

client.onState = (frame) => {
  if (frame.path) {
    scene.path = frame.path;
    scene.crumbs = [];
  }
  recording = frame.recording;
  recordBtn.textContent = recording ? "recording… (toggle off)" : "record";
  if (frame.running) pushCrumb(scene, frame.x, frame.y);
};

client.onNotice = (kind, message) => {
  const div = document.createElement("div");
  div.className = `notice ${kind}`;
  div.textContent = `${kind}: ${message}`;
  notices.prepend(div);
  setTimeout(() => div.remove(), 6000);
};

client.connect();

startBtn.onclick = () => {
  const name = picker.value;
  if (!name) return;
  cam = { ...cam, scale: ZOOM_PRESETS[presetForTrajectory(name)] };
  cmd = { throttle: 0, steering: 0 };
  client.send(startFrame(name));
};
recordBtn.onclick = () => client.send(recordFrame(!recording));
stopBtn.onclick = () => client.send(stopFrame());

window.addEventListener("keydown", (ev) => {
  const field = keyField(ev.key);
  if (field) {
    keys[field] = true;
    ev.preventDefault();
  }
});
window.addEventListener("keyup", (ev) => {
  const field = keyField(ev.key);
  if (field) keys[field] = false;
});

// command loop at the send rate; ramp dynamics use the real elapsed time
let lastTick = performance.now();
setInterval(() => {
  const now = performance.now();
  const dt = Math.min(0.1, (now - lastTick) / 1000);
  lastTick = now;
  cmd = advanceCommand(cmd, keys, dt);
  client.send(commandFrame(cmd.throttle, cmd.steering));
}, 1000 / SEND_RATE_HZ);

function frame() {
  scene.state = client.latest;
  scene.stalled = client.stalled();
  if (scene.state) cam = follow(cam, scene.state.x, scene.state.y);
  drawScene(ctx, cam, scene);
  readout.textContent =
    readoutText(scene.state) +
    `  cmd=(${cmd.throttle.toFixed(2)}, ${cmd.steering.toFixed(2)})` +
    (client.connected ? "" : "  [disconnected]");
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
