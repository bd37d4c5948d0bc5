"""Starve one characteristic bucket of detections and watch the analysis find it.

All extra-small-coverage instances get no overlapping prediction. The
sensitivity profile should single out coverage, and the false-negative
rates should put that bucket at 100% missed.
"""

from tadiag import EvaluationConfig, SyntheticSpec, false_negatives, generate_synthetic, sensitivity_profile


def main() -> None:
    spec = SyntheticSpec(seed=21, n_videos=500, n_predictions=700, degrade={"coverage": ("XS",)})
    dataset, preds = generate_synthetic(spec).load()
    config = EvaluationConfig()

    profile = sensitivity_profile(dataset, preds, config)
    print(f"overall average-mAP_N {100 * profile.overall:.2f}")
    print("sensitivity (max - min over buckets):")
    for name in profile.characteristics:
        print(f"  {name:<17} {100 * profile.sensitivity(name):6.2f}")

    cov = profile.characteristics["coverage"]
    print("\ncoverage buckets:")
    fn = false_negatives(dataset, preds, config).characteristics["coverage"]
    for b, value, n, miss in zip(cov.buckets, cov.values, cov.counts, fn.mean_rates):
        shown = "   n/a" if value is None else f"{100 * value:6.2f}"
        print(f"  {b:<3} n={n:4d}  mAP_N {shown}  missed {100 * miss:6.2f}%")


if __name__ == "__main__":
    main()
