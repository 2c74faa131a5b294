"""
Comparing policies with risk scores
===================================

Flow-case frequencies are weighted (user flows lightest, flows from third
parties heaviest) and divided by the largest weighted score the corpus could
reach, so every score lands in [0, 1] and only means something relative to
the other policies in the same corpus.
"""
from policyflow.analyser import FlowStats, RiskWeights, compute_risk_scores
from policyflow.flow_parser import FLOW_CASES


def stats(pid, **freq):
    full = {c: 0.0 for c in FLOW_CASES}
    full.update(freq)
    return FlowStats(pid, 100, full)


corpus = [
    stats("careful", user_to_first=0.7, first_to_third=0.1, incomplete=0.2),
    stats("leaky", user_to_first=0.2, third_to_first=0.2, third_to_third=0.4, incomplete=0.2),
    stats("vague", user_to_first=0.3, incomplete=0.7),
]

# %%
# Scores with the default weights (1, 1.5, 2.25 in every group).
for s in compute_risk_scores(corpus):
    print(f"{s.policy_id:8} first={s.first_party_score:.3f} third={s.third_party_score:.3f} "
          f"overall={s.overall_score:.3f}")

# %%
# Multiplying every weight by the same constant changes nothing.
a = compute_risk_scores(corpus, RiskWeights())
b = compute_risk_scores(corpus, RiskWeights().scaled(40.0))
print(max(abs(x.overall_score - y.overall_score) for x, y in zip(a, b)))

# %%
# Adding a policy changes the corpus maxima, and with them everyone's scores.
bigger = corpus + [stats("worst", third_to_third=0.9, incomplete=0.1)]
for s in compute_risk_scores(bigger):
    print(f"{s.policy_id:8} third={s.third_party_score:.3f}")
