// Maps the last executed primitive onto a screen-space annotation so the
// operator can see what their words did. Screen convention matches the
// renderer: world x (forward) points up, world y (left) points left.

export interface Arrow {
  dx: number; // screen px, +right
  dy: number; // screen px, +down
  label: string;
}

const STEP_SCALE = 220; // px per meter, exaggerated for visibility
const TURN_PX = 18;

export function primitiveArrow(action: number[] | null,
                               text: string | null): Arrow | null {
  if (!action || action.length !== 8) {
    return null;
  }
  const [dx, dy, dz, , , , dgrip, grip] = action;
  const label = text ?? "";
  if (grip >= 0) {
    return { dx: 0, dy: 0, label: grip >= 0.5 ? "open" : "close" };
  }
  if (dx !== 0 || dy !== 0) {
    // world forward (+x) = screen up; world left (+y) = screen left
    // (+ 0 normalizes negative zero)
    return { dx: -dy * STEP_SCALE + 0, dy: -dx * STEP_SCALE + 0, label };
  }
  if (dz !== 0) {
    return { dx: 0, dy: dz > 0 ? -TURN_PX : TURN_PX, label };
  }
  if (dgrip !== 0) {
    return { dx: dgrip > 0 ? TURN_PX : -TURN_PX, dy: 0, label };
  }
  return { dx: 0, dy: 0, label };
}
