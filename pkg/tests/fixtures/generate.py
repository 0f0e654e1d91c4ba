"""Regenerate the generated fixtures: python3 tests/fixtures/generate.py"""

import random
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

import docgen  # noqa: E402
from laftk import transducers  # noqa: E402
from laftk.graph import CategoryRef, Feature  # noqa: E402
from laftk.dump import write_dump  # noqa: E402

GENERATED = 15


def main():
    for fmt, gen, ext in [("inline", docgen.random_inline, "txt"),
                          ("columnar", docgen.random_columnar, "tsv"),
                          ("brackets", docgen.random_brackets, "mrg")]:
        for i in range(GENERATED):
            rng = random.Random(f"{fmt}-{i}")
            (HERE / fmt / f"gen{i:02d}.{ext}").write_bytes(gen(rng))

    dumps = HERE / "dumps"
    for i in range(10):
        rng = random.Random(f"dump-{i}")
        doc = docgen.random_document(rng, size=rng.choice([10, 60, 250]))
        (dumps / f"random{i:02d}.dump").write_bytes(write_dump(doc))

    (dumps / "agreement_3of4.dump").write_bytes(write_dump(docgen.agreement_document()))
    (dumps / "overlap.dump").write_bytes(write_dump(docgen.overlap_document()))

    dcs = transducers.load_example_dcs()
    clean = transducers.ingest_inline((HERE / "inline" / "hand01_single.txt").read_bytes(), dcs)
    (dumps / "inline_hand01.dump").write_bytes(write_dump(clean))
    bad = clean.reopen()
    bad.add(Feature("p2", CategoryRef("GENDER"), CategoryRef("PLURAL")))
    (dumps / "perturbed_gender_plural.dump").write_bytes(write_dump(bad.close()))


if __name__ == "__main__":
    main()
