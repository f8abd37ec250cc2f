"""
Desk-scale experiment runner.

  python scripts/run_ablation_suite.py variants   [--seeds 0 1 2] [--steps N]
  python scripts/run_ablation_suite.py bandwidth  [--seeds 0 1 2] [--steps N]
  python scripts/run_ablation_suite.py tto        [--steps N] [--tto-steps 200]
  python scripts/run_ablation_suite.py lightfield [--steps N]
  python scripts/run_ablation_suite.py fewshot    [--support-counts 1 2 3 4 5] [--steps N]

Each suite prints a summary table and writes reports/ablation_<suite>.json.
"""

import argparse
import json
import os
import sys

from dotenv import load_dotenv

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from locality_inr.config import configure_logging
from locality_inr.experiments import SUITES

REPORT_DIR = 'reports'


def print_summary(name: str, report: dict) -> None:
    print(f"\n{'=' * 60}")
    print(f" ABLATION SUITE: {name.upper()}")
    print(f"{'=' * 60}")
    if 'mean_psnr' in report:
        print(f"{'Setting':<20} {'Mean PSNR':>12} {'Runs':>6}")
        print("─" * 40)
        for key, value in report['mean_psnr'].items():
            print(f"{key:<20} {value:>10.2f} dB {len(report['psnr'][key]):>6}")
    if 'mean_locality_win_rate' in report:
        print(f"\nToken concentration full > ipc_baseline: {report['mean_locality_win_rate'] * 100:.1f}% of tokens")
    if 'instances' in report:
        print(f"{'Instance':<18} {'before':>8} {'latents':>8} {'full':>8}")
        print("─" * 46)
        for row in report['instances']:
            print(f"{row['instance_id']:<18} {row['psnr_before']:>8.2f} "
                  f"{row['psnr_tto_latents']:>8.2f} {row['psnr_tto_full']:>8.2f}")
    if 'heldout_psnr' in report:
        print(f"Support views : {report['support_psnr']:.2f} dB")
        print(f"Held-out pose : {report['heldout_psnr']:.2f} dB ({report['heldout_orbit_deg']:g} deg orbit)")
    if 'novel_view_psnr' in report:
        print(f"{'Support views':<16} {'Novel-view PSNR':>16}")
        print("─" * 34)
        for count, value in report['novel_view_psnr'].items():
            print(f"{count:<16} {value:>13.2f} dB")


def main(argv=None) -> int:
    load_dotenv()
    parser = argparse.ArgumentParser(description='Desk-scale INR experiments')
    parser.add_argument('suite', choices=sorted(SUITES))
    parser.add_argument('--seeds', type=int, nargs='+', default=[0, 1, 2])
    parser.add_argument('--steps', type=int, default=None, help='training steps per run (default: preset budget)')
    parser.add_argument('--tto-steps', type=int, default=200)
    parser.add_argument('--support-counts', type=int, nargs='+', default=[1, 2, 3, 4, 5])
    parser.add_argument('--report-dir', default=REPORT_DIR)
    args = parser.parse_args(argv)
    configure_logging()

    if args.suite in ('variants', 'bandwidth'):
        report = SUITES[args.suite](seeds=args.seeds, steps=args.steps)
    elif args.suite == 'tto':
        report = SUITES['tto'](seed=args.seeds[0], train_steps=args.steps, tto_steps=args.tto_steps)
    elif args.suite == 'fewshot':
        report = SUITES['fewshot'](support_counts=args.support_counts, seed=args.seeds[0], steps=args.steps)
    else:
        report = SUITES['lightfield'](seed=args.seeds[0], steps=args.steps)

    print_summary(args.suite, report)
    os.makedirs(args.report_dir, exist_ok=True)
    path = os.path.join(args.report_dir, f"ablation_{args.suite}.json")
    with open(path, 'w') as f:
        json.dump(report, f, indent=4, default=float)
    print(f"\nSaved report to '{path}'")
    return 0


if __name__ == '__main__':
    sys.exit(main())
