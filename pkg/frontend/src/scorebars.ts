// View model for the live score display: one bar per primitive, heights
// normalized to the current maximum, argmax flagged.

export interface Bar {
  id: number;
  height: number; // 0..1
  best: boolean;
}

export function scoreBars(scores: number[] | null): Bar[] {
  if (!scores || scores.length === 0) {
    return [];
  }
  const peak = Math.max(...scores);
  let best = 0;
  for (let i = 1; i < scores.length; i += 1) {
    if (scores[i] > scores[best]) {
      best = i;
    }
  }
  return scores.map((value, id) => ({
    id,
    height: peak > 0 ? value / peak : 0,
    best: id === best,
  }));
}
