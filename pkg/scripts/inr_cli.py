"""
Locality-Aware INR: command line
=================================
  python scripts/inr_cli.py train          --config runs/tiny.cfg [--resume]
  python scripts/inr_cli.py eval           --checkpoint CKPT [--config CFG] [--csv out.csv]
  python scripts/inr_cli.py reconstruct    --checkpoint CKPT --images a.png b.png --out DIR
  python scripts/inr_cli.py ablate-token   --checkpoint CKPT --instance a.png --token all --out DIR
  python scripts/inr_cli.py export-latents --checkpoint CKPT --out latents.linr [--config CFG]
  python scripts/inr_cli.py nvs            --checkpoint CKPT --scene scene.npz --pose orbit:15 --out view.png

Exit codes: 0 ok, 1 usage / config error, 2 runtime error.
"""

import argparse
import glob
import os
import sys

import numpy as np
from dotenv import load_dotenv

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from locality_inr import commands
from locality_inr.config import configure_logging
from locality_inr.errors import ConfigError, INRError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
RULE = "=" * 60


class UsageError(Exception):
    pass


class CLIParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here are exit code 1."""

    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = CLIParser(prog='inr_cli', description='Locality-aware generalizable INR')
    parser.add_argument('--log-level', default=None, help='DEBUG, INFO, WARNING (default: $LINR_LOG_LEVEL or INFO)')
    sub = parser.add_subparsers(dest='verb', required=True, parser_class=CLIParser)

    p = sub.add_parser('train', help='train a model from a config file')
    p.add_argument('--config', required=True)
    p.add_argument('--resume', action='store_true', help='continue from <output_dir>/checkpoint.linr')

    p = sub.add_parser('eval', help='full-grid PSNR per split')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--config', default=None, help='defaults to the run config stored in the checkpoint')
    p.add_argument('--csv', default=None)

    p = sub.add_parser('reconstruct', help='reconstruct images through the encoder and decoder')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--images', nargs='+', required=True, help='PNG files or directories')
    p.add_argument('--out', required=True)

    p = sub.add_parser('ablate-token', help='difference maps from zeroing latent tokens')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--instance', required=True, help='PNG image or .npz scene file')
    p.add_argument('--token', default='all', help="token index or 'all'")
    p.add_argument('--scene-index', type=int, default=0)
    p.add_argument('--out', required=True)

    p = sub.add_parser('export-latents', help='write raw and standardized latents')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--out', required=True)
    p.add_argument('--config', default=None)

    p = sub.add_parser('nvs', help='render a novel view of a light-field scene')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--scene', required=True, help='.npz scene file with support views and poses')
    p.add_argument('--pose', required=True, help='view:K, orbit:DEG, or a 4x4 pose file')
    p.add_argument('--out', required=True)
    p.add_argument('--height', type=int, default=None)
    p.add_argument('--width', type=int, default=None)
    p.add_argument('--support', type=int, nargs='+', default=None, help='support view indices')
    p.add_argument('--scene-index', type=int, default=0)
    return parser


def _expand_images(paths):
    files = []
    for path in paths:
        if os.path.isdir(path):
            files.extend(sorted(glob.glob(os.path.join(path, '*.png'))))
        else:
            files.append(path)
    return files


def run(args) -> int:
    if args.verb == 'train':
        summary = commands.cmd_train(args.config, resume=args.resume)
        print(RULE)
        print(f"  steps       : {summary['steps']}")
        print(f"  final loss  : {summary['final_loss']:.6f}")
        print(f"  eval PSNR   : {summary['eval_psnr']:.2f} dB")
        print(f"  checkpoint  : {summary['checkpoint']}")
        print(RULE)

    elif args.verb == 'eval':
        frame = commands.cmd_eval(args.checkpoint, args.config, args.csv)
        print(RULE)
        print(f"{'Split':<10} {'Instances':>10} {'Mean PSNR':>12}")
        print(RULE)
        for split, group in frame.groupby('split', sort=False):
            print(f"{split:<10} {len(group):>10} {group['psnr'].mean():>10.2f} dB")
        print(RULE)

    elif args.verb == 'reconstruct':
        frame = commands.cmd_reconstruct(args.checkpoint, _expand_images(args.images), args.out)
        print(RULE)
        for _, row in frame.iterrows():
            print(f"  {os.path.basename(row['image']):<30} {row['psnr']:>8.2f} dB")
        print(RULE)
        print(f"  {'mean':<30} {frame['psnr'].mean():>8.2f} dB")

    elif args.verb == 'ablate-token':
        token = args.token if args.token == 'all' else int(args.token)
        frame = commands.cmd_ablate_token(args.checkpoint, args.instance, token, args.out, args.scene_index)
        print(f"[ablate-token] {len(frame)} maps -> {args.out}; "
              f"mean concentration {frame['concentration'].mean():.3f}")

    elif args.verb == 'export-latents':
        archive = commands.cmd_export_latents(args.checkpoint, args.out, args.config)
        print(f"[export-latents] {archive.latents.shape[0]} instances, "
              f"tokens {archive.latents.shape[1:]} -> {args.out}")

    elif args.verb == 'nvs':
        result = commands.cmd_nvs(args.checkpoint, args.scene, args.pose, args.out,
                                  args.height, args.width, args.support, args.scene_index)
        line = f"[nvs] {result['height']}x{result['width']} -> {result['image']}"
        if not np.isnan(result['psnr']):
            line += f" (PSNR vs reference view {result['psnr']:.2f} dB)"
        print(line)
    return EXIT_OK


def main(argv=None) -> int:
    load_dotenv()
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    configure_logging(args.log_level)
    try:
        return run(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (INRError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == '__main__':
    sys.exit(main())
