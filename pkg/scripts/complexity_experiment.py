"""Count merge comparisons for the synonym index and the pairwise baseline.

    python3 scripts/complexity_experiment.py --sizes 1000 4000 16000
"""

import argparse
import math

from ontoforge.merge import PairwiseMerger, label_equivalence, merge_all
from ontoforge.turtle import EX, IRI, MAIN_CATEGORIES, SUBCLASS_OF, OntologyDoc, Triple, extract_entities_of_interest


def synthetic_docs(n):
    return [
        OntologyDoc({"ex": EX}, (Triple(IRI(f"{EX}Concept{i:06d}"), SUBCLASS_OF, IRI(EX + MAIN_CATEGORIES[i % 4])),), source_nct=f"NCT{i:08d}")
        for i in range(n)
    ]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 4000, 16000])
    ap.add_argument("--skip-pairwise", action="store_true")
    args = ap.parse_args()

    print(f"{'N':>7} {'index':>10} {'/NlogN':>8} {'pairwise':>12} {'/N^2':>8}")
    for n in args.sizes:
        docs = synthetic_docs(n)
        idx = merge_all(docs)[1].comparisons
        pair = ""
        ratio = ""
        if not args.skip_pairwise:
            oracle = PairwiseMerger(label_equivalence)
            for d in docs:
                for e in extract_entities_of_interest(d):
                    oracle.add(e)
            pair = oracle.comparisons
            ratio = f"{pair / n**2:.4f}"
        print(f"{n:>7} {idx:>10} {idx / (n * math.log2(n)):>8.3f} {pair:>12} {ratio:>8}")


if __name__ == "__main__":
    main()
