"""
Intent attention and staleness decay
====================================

A receiver scores buffered teammate intents against its own, then shrinks
each weight by gamma_T ** staleness.  The weights are not renormalised, so a
uniformly stale buffer simply contributes less to the fused context.
"""

import numpy as np

from codemarl.fusion import AttentionParams, FusionHyper, attention_scores, fuse_messages, timeliness_decay

rng = np.random.default_rng(0)
params = AttentionParams.create(rng, intent_dim=4, content_dim=6, d_k=8, d_v=8)

# receiver 0 hears from senders 1..3
e_self = rng.normal(size=(4, 4)).astype(np.float32)
intents = rng.normal(size=(4, 4, 4)).astype(np.float32)
contents = rng.normal(size=(4, 4, 6)).astype(np.float32)
present = ~np.eye(4, dtype=bool)

alpha = attention_scores(params, e_self, intents, present)
print("attention row of agent 0:", np.round(alpha.value[0], 3))

# the same row when messages are 0, 2 and 5 steps old
staleness = np.zeros((4, 4), dtype=np.int64)
staleness[0] = [0, 0, 2, 5]
decayed = timeliness_decay(alpha, staleness, gamma_T=0.8)
print("after decay:              ", np.round(decayed.value[0], 3))
print("total weight kept:         %.3f" % decayed.value[0].sum())

# uniform staleness shrinks the context norm, leaving direction unchanged
for lag in (0, 3, 6):
    ctx, _ = fuse_messages(params, FusionHyper(gamma_T=0.8), e_self, intents, contents, present,
                           np.full((4, 4), lag))
    print(f"lag {lag}: |c_0| = {np.linalg.norm(ctx.value[0]):.3f}")

# gamma_T = 1 switches the decay off
same = timeliness_decay(alpha, staleness, gamma_T=1.0)
print("gamma_T = 1 leaves weights unchanged:", np.array_equal(same.value, alpha.value))
