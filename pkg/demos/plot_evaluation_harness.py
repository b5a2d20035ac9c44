"""
Age and identity metrics from prediction files
==============================================

Simulated predictions before and after makeup removal, scored the way the
CLI's eval-age and eval-id commands score them.
"""

import numpy as np

from demakeup.evaluation import (EstimationShift, ScoreSet, age_report, build_score_set, operating_point,
                                 roc, shift_stats, t_confidence_interval)

rng = np.random.default_rng(0)
truth = rng.uniform(3, 69, 500)
before = truth - np.abs(rng.normal(3, 3, 500))  # makeup makes faces look younger
after = truth + rng.normal(0, 3, 500)

print(age_report(after, truth, before=before).summary("after removal"))

st = shift_stats(EstimationShift(before, after))
down = after < before
lo, hi, margin = t_confidence_interval(before[down] - after[down])
print(f"\nunder-estimates: {st.under.count}, over-estimates: {st.over.count}")
print(f"95% interval of the downward shift: [{lo:.2f}, {hi:.2f}] (margin {margin:.2f})")

# Verification: embeddings of originals vs processed images, ten impostors per genuine pair.
emb = rng.normal(size=(300, 64))
processed = emb + rng.normal(0, 3.0, emb.shape)
scores = build_score_set(emb, processed, [f"s{k}" for k in range(300)])
curve = roc(scores)
for fmr in (1e-3, 1e-2, 1e-1):
    op = operating_point(curve, fmr)
    print(f"TMR at FMR {fmr:g}: {op.tmr:.3f} (threshold {op.threshold:.3f}, empirical FMR {op.fmr:.4f})")

# With 500 impostors the smallest non-zero FMR is 0.002, so a 1e-4 target
# can only be met at FMR 0. The next point on the curve shows what was skipped.
op = operating_point(roc(ScoreSet(scores.genuine, scores.impostor[:500])), 1e-4)
print(f"500 impostors, target 1e-4: TMR {op.tmr:.3f} at FMR {op.fmr:g}; next point TMR {op.next_tmr:.3f} at FMR {op.next_fmr:g}")
