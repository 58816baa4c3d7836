"""Walk the soft posterior over KB rows as user evidence accumulates.

A tiny movie table is loaded, the hand-crafted tracker digests a few user
utterances, and after each one the posterior over rows is printed next to
the hard lookup's candidate set. The posterior keeps every row alive at
some probability — rows matching the evidence rise smoothly, rows with
missing cells keep their uniform share — while the hard lookup jumps
between candidate sets.

Run:  python3 demos/01_soft_lookup.py
"""

import numpy as np

import kbdial as kd
from kbdial.kb import hard_kb_lookup

CSV = """name,genre,release_year,director
the winter harbor,drama,1994,mira holt
echo of crown,comedy,X,jon brandt
ember garden,drama,2001,mira holt
shadow meridian,X,1994,ivo marsh
glass orchard,drama,1994,X
"""

UTTERANCES = [
    "i am looking for a drama",
    "it came out in 1994",
    "the director is mira holt",
]


def show(kb, agent, heading):
    post = kd.posterior(agent.beliefs, kb)
    order = np.argsort(-post.probs)
    hard_rows, _ = hard_kb_lookup(kb, agent.beliefs)
    print(f"\n{heading}")
    print(f"  posterior entropy {kd.entropy(post.probs):.3f} nats; "
          f"hard candidates {sorted(int(i) for i in hard_rows)}")
    for i in order:
        print(f"  {post.probs[i]:6.3f}  {kb.entity_names[i]}")


def main():
    kb = kd.load_csv(CSV)
    agent = kd.RuleAgent(kb, "soft")
    agent.reset()
    show(kb, agent, "before any evidence (priors only)")
    for text in UTTERANCES:
        tokens = kd.text.tokenize(text)
        agent.observe(tokens)
        show(kb, agent, f"user: {text!r}")
    print("\nglass orchard has no director on file, so it keeps a uniform")
    print("share of the mass no matter how certain the user is about holt.")


if __name__ == "__main__":
    main()
