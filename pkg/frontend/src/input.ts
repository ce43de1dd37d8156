// Keyboard state -> throttle/steering command, with ramp dynamics so a
// tapped key nudges the command and a held key sweeps it smoothly.

export const THROTTLE_RATE = 1.0; // per second, up/down keys
export const STEER_RATE = 2.0; // per second toward the held direction
export const STEER_RETURN_RATE = 1.0; // per second back to center when released

export interface KeyState {
  up: boolean;
  down: boolean;
  left: boolean;
  right: boolean;
}

export interface Command {
  throttle: number;
  steering: number;
}

const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));

/**
 * Advance the smoothed command by dt seconds of held-key state.
 * Left steers positive (counter-clockwise), matching the vehicle convention.
 * Opposing keys cancel.
 */
export function advanceCommand(cmd: Command, keys: KeyState, dt: number): Command {
  let throttle = cmd.throttle;
  const throttleDir = (keys.up ? 1 : 0) - (keys.down ? 1 : 0);
  throttle += throttleDir * THROTTLE_RATE * dt;

  let steering = cmd.steering;
  const steerDir = (keys.left ? 1 : 0) - (keys.right ? 1 : 0);
  if (steerDir !== 0) {
    steering += steerDir * STEER_RATE * dt;
  } else if (!keys.left && !keys.right) {
    // return to center without overshooting zero
    const delta = STEER_RETURN_RATE * dt;
    if (Math.abs(steering) <= delta) steering = 0;
    else steering -= Math.sign(steering) * delta;
  }
  return {
    throttle: clamp(throttle, 0, 1),
    steering: clamp(steering, -1, 1),
  };
}

/** Map a KeyboardEvent.key to a KeyState field, or null if unbound. */
export function keyField(key: string): keyof KeyState | null {
  switch (key) {
    case "ArrowUp":
    case "w":
      return "up";
    case "ArrowDown":
    case "s":
      return "down";
    case "ArrowLeft":
    case "a":
      return "left";
    case "ArrowRight":
    case "d":
      return "right";
    default:
      return null;
  }
}
