"""
Messages on a delayed channel
=============================

Each agent broadcasts its intent every step.  A receiver keeps only the
newest message per sender, so with long or jittery delays what it fuses can
be several steps old.
"""

import numpy as np

from codemarl.channel import Channel, DelayModel, Message

# a fixed delay of 3: the message sent at t shows up at t + 3
ch = Channel(2, DelayModel.fixed(3))
for t in range(7):
    ch.broadcast(Message(0, np.array([t]), np.zeros(1), t), t)
    ch.deliver(t)
    held = ch.latest(1, 0)
    print(f"t={t}  agent 1 holds", "nothing" if held is None else f"message from t={held.timestamp}")

# Gaussian delays can reorder messages; the buffer never goes back in time
ch = Channel(2, DelayModel.parse("gaussian:3,2"), np.random.default_rng(0))
print()
for t in range(12):
    ch.broadcast(Message(0, np.array([t]), np.zeros(1), t), t)
    ch.deliver(t)
    _, _, present, staleness = ch.buffer_arrays(t, 1, 1)
    print(f"t={t:2d}  staleness seen by agent 1:", staleness[1, 0] if present[1, 0] else "-")

# under an infinite delay nothing ever arrives
ch = Channel(3, DelayModel.infinite())
for t in range(5):
    for i in range(3):
        ch.broadcast(Message(i, np.zeros(1), np.zeros(1), t), t)
    ch.deliver(t)
print("\nmessages buffered under infinite delay:", int(ch.buffer_arrays(4, 1, 1)[2].sum()))
