"""Recompute comfort ratios and F ACC / C ACC from the published confusion matrices.

Needs no models: the published counts go straight through the metric code.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

import published_tables as pub  # noqa: E402
from osl.metrics import MetricCounts, cr_ic, facc_cacc, published_scenario  # noqa: E402


def main() -> None:
    print("comfort ratios")
    for case, (_, n_foreign, ratio) in pub.SCENARIOS.items():
        spec = published_scenario(case)
        flag = "" if abs(spec.comfort_ratio - ratio) <= 0.001 else "  <- off by more than 0.001"
        print(f"  case {case:<4} foreign {spec.n_foreign:>6} (published {n_foreign:>6})  "
              f"ratio {spec.comfort_ratio:.5f} (published {ratio:.3f}){flag}")

    print("F ACC / C ACC from confusion matrices")
    for name, confusion, published in (
        ("OpenMax", pub.OPENMAX_CONFUSION, pub.OPENMAX_ACC),
        ("exp-LC", pub.EXP_LC_CONFUSION, pub.EXP_LC_ACC),
    ):
        for ratio, row in confusion.items():
            counts = MetricCounts.from_confusion(*row)
            t = cr_ic(counts)
            f_acc, c_acc = facc_cacc(counts)
            pf, pc = published[ratio]
            flag = "" if abs(f_acc - pf) <= 0.001 and abs(c_acc - pc) <= 0.001 else "  <- mismatch"
            print(f"  {name:<8}{ratio:>5}%  domestic {t.cr + t.ic + t.domestic_rejected:>6}  "
                  f"F ACC {f_acc:.4f} ({pf:.3f})  C ACC {c_acc:.4f} ({pc:.3f}){flag}")


if __name__ == "__main__":
    main()
