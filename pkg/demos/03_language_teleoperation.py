# Steering the arm with plain language: free text -> low-level action ->
# snapped primitive -> execution, recorded into a replayable episode file.

from langarm.teleop import (
    finish_session,
    load_episode,
    replay_episode,
    save_episode,
    start_session,
    step_session,
    translate_supervision,
)
from langarm.world import get_task

# the rule-based translator handles direction verbs, magnitude words and
# explicit quantities; unrecognized text maps to the all-zero action
for text in ("move to the right", "move forward a bit", "lower arm a tiny bit",
             "rotate gripper 45 degrees clockwise", "sing a song"):
    print(f"{text:<40} -> {translate_supervision(text).vector()}")

session = start_session(get_task("point"), seed=3)
print("\ninstruction:", session.instruction)
for command in ("move forward a lot", "move left a bit", "raise arm up by 1cm",
                "what lovely weather we are having", "move arm back by 5cm"):
    _, transition = step_session(session, command)
    echo = transition.primitive.canonical_text if transition else "(ignored)"
    print(f"  {command:<38} -> {echo}")

episode = finish_session(session)
save_episode(episode, "teleop_episode.jsonl")
loaded = load_episode("teleop_episode.jsonl")
print(f"\nsaved and reloaded {len(loaded.transitions)} transitions")

# replay reproduces every stored observation byte for byte
mismatches = sum(int(stored != recomputed)
                 for stored, recomputed in replay_episode(loaded))
print("replay observation mismatches:", mismatches)
