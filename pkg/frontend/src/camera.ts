// World <-> canvas transform. The camera follows the vehicle at a fixed
// zoom chosen from presets sized for the 2 m, 5 m and 25 m circles.

export interface Camera {
  cx: number; // world center [m]
  cy: number;
  scale: number; // pixels per meter
}

// label -> pixels per meter at a 640 px viewport
export const ZOOM_PRESETS: Record<string, number> = {
  close: 60, // ~10 m across: radius-2 circle fills the view
  mid: 24, // ~27 m across: radius-5 circle plus margin
  far: 5.5, // ~116 m across: radius-25 circle
};

export function presetForTrajectory(name: string): keyof typeof ZOOM_PRESETS {
  if (name.includes("25")) return "far";
  if (name.endsWith("_2")) return "close";
  return "mid";
}

/** Keep the camera centered on the vehicle. */
export function follow(cam: Camera, x: number, y: number): Camera {
  return { ...cam, cx: x, cy: y };
}

/** World point to canvas pixels (y axis flipped). */
export function worldToCanvas(
  cam: Camera,
  width: number,
  height: number,
  x: number,
  y: number,
): [number, number] {
  return [
    width / 2 + (x - cam.cx) * cam.scale,
    height / 2 - (y - cam.cy) * cam.scale,
  ];
}

export function canvasToWorld(
  cam: Camera,
  width: number,
  height: number,
  px: number,
  py: number,
): [number, number] {
  return [
    cam.cx + (px - width / 2) / cam.scale,
    cam.cy - (py - height / 2) / cam.scale,
  ];
}
