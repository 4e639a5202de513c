import { describe, expect, it } from "vitest";

import { scoreBars } from "../src/scorebars.js";

describe("score bar view model", () => {
  it("renders one bar per primitive with the argmax flagged", () => {
    const scores = Array.from({ length: 58 }, (_, i) => 0.3 + (i === 17 ? 0.4 : 0));
    const bars = scoreBars(scores);
    expect(bars).toHaveLength(58);
    expect(bars.filter((b) => b.best)).toHaveLength(1);
    expect(bars[17].best).toBe(true);
    expect(bars[17].height).toBe(1);
  });

  it("first maximum wins ties, matching the controller", () => {
    const bars = scoreBars([0.5, 0.7, 0.7]);
    expect(bars[1].best).toBe(true);
    expect(bars[2].best).toBe(false);
  });

  it("is empty without scores", () => {
    expect(scoreBars(null)).toEqual([]);
    expect(scoreBars([])).toEqual([]);
  });
});
