# The motion vocabulary: 58 canonical language motions, each bound to one
# exact 8-D end-effector action, plus the dominant-axis discretizer that
# snaps any action back onto the vocabulary.

import numpy as np

from langarm.actions import (
    LowLevelAction,
    action_to_primitive,
    canonical_vocabulary,
    primitive_to_action,
)

vocab = canonical_vocabulary()
print(f"{len(vocab)} primitives\n")

# a few table rows
for text in ("move arm to the left by 5cm", "roll arm 45 degrees clockwise",
             "close the gripper"):
    print(f"{text:<38} -> {vocab.lookup(text).vector()}")

# the discretizer picks the dominant axis and snaps to the nearest step size;
# a 6.5 cm backward move lands on the 5 cm row
odd = LowLevelAction(dx=-0.065)
print(f"\n[-0.065, 0, ...]  -> {action_to_primitive(odd).canonical_text}")

# a slightly diagonal action still resolves to its dominant axis
diag = LowLevelAction(dy=0.012, dz=0.011)
print(f"[0, 0.012, 0.011] -> {action_to_primitive(diag).canonical_text}")

# every canonical action round-trips through the discretizer
assert all(action_to_primitive(primitive_to_action(p)).id == p.id
           for p in vocab.primitives)
print("\nall 58 rows round-trip through the discretizer")

# paraphrases share the primitive id (and therefore the low-level action)
raise5 = vocab.by_text("move upwards by 5cm")
print(f"'move upwards by 5cm' resolves to #{raise5.id}: {raise5.canonical_text}")
