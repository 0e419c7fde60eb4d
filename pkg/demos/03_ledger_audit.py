"""
Auditing published compute totals
==================================

The shipped ledgers transcribe per-model compute tables. Summing the rows
and comparing against the stated totals catches transcription and
arithmetic slips.
"""

from hypersweep.ledger import (aggregate, fixture_path, load_fixture, load_stated, report,
                               verify_document)

rows = load_fixture("table2.csv")
by_dataset = aggregate(rows, ["dataset"])
for (dataset,), sums in by_dataset.groups.items():
    print(f"{dataset:10s} gpu-h {sums['gpu_hours']:6.1f}  vram {sums['vram_gb']:6.1f}  "
          f"params {sums['params_millions']:6.1f} M")
print("discrepancies:", verify_document(rows, load_stated(fixture_path("table2_totals.json"))))

summary = load_fixture("table4.csv")
print(report(summary))
for d in verify_document(summary, load_stated(fixture_path("table4_totals.json"))):
    print("flag:", d)

# per-application figures stated outside the table disagree on imagery units
for d in verify_document(summary, load_stated(fixture_path("table4_text.json"))):
    print("flag:", d)
