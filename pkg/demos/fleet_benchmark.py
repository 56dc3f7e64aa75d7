"""Run a scaled-down fleet benchmark and print the three-category scorecard."""
import tempfile

from edgesound.bench import BenchScenario, emit_report, run_benchmark

SCENARIO = BenchScenario(
    configs=("A", "B", "C"),
    fleet_sizes=(2, 4),
    iterations=2,
    runtime_iterations=3,
    clip_duration_s=2.0,
    seed=0,
)


def main() -> None:
    result = run_benchmark(SCENARIO, progress=lambda note: print(f"  {note}"))
    card = result.card

    print("\nper-config aggregates (lower is better, 3 points to the best):")
    for cfg in SCENARIO.configs:
        latency = ", ".join(f"{n}dev {ms:.1f}ms"
                            for n, ms in sorted(card.latency_ms_by_size[cfg].items()))
        print(f"  {cfg}: avg power {card.power_mw[cfg]:7.1f} mW | "
              f"runtime {card.runtime_s[cfg] * 1e3:6.1f} ms | {latency} "
              f"(growth x{card.growth_ratio[cfg]:.2f})")

    print(f"\npoints per category: {card.points}")
    print(f"tally (higher wins): {card.tally}")

    out_dir = tempfile.mkdtemp(prefix="bench_demo_")
    paths = emit_report(result, out_dir)
    print(f"\nreport written: {paths['csv']}, {paths['markdown']}, "
          f"{paths['scorecard']}")


if __name__ == "__main__":
    main()
