"""Generate a small synthetic benchmark and run the full diagnosis on it.

    python3 demos/quickstart.py [output_dir]

Prints the headline metrics and lists the files written.
"""

import sys
import tempfile
from pathlib import Path

from tadiag import SyntheticSpec, generate_synthetic
from tadiag.report import run_diagnosis


def main(out: Path) -> None:
    paths = generate_synthetic(SyntheticSpec(seed=1, n_videos=300, n_predictions=600)).write(out / "data")
    (diag,) = run_diagnosis(
        paths["ground_truth"], [paths["predictions"]], out / "report", characteristics=paths["characteristics"]
    )
    m = diag.report["metrics"]
    print(f"average-mAP   {m['average_map']['all']:6.2f}")
    print(f"average-mAP_N {m['average_map_n']['all']:6.2f}  (N = {diag.report['config']['normalization_constant']:.3f})")
    print("\nmean FP profile of the first split (percent):")
    for name, share in zip(diag.report["fp_profile"]["categories"], diag.report["fp_profile"]["mean"][0]):
        print(f"  {name:<4} {share:6.2f}")
    print(f"\nfiles in {out / 'report'}:")
    for p in sorted((out / "report").iterdir()):
        print("  " + p.name)


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="tadiag_demo_"))
    main(target)
