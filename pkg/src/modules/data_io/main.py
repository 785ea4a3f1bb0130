import argparse
import logging
import os
import sys
from pathlib import Path

from dotenv import load_dotenv

from modules.ranking_core import RankForgeError

from .data_io import generate_synthetic, write_letor


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rankforge-synth",
                                     description="Write synthetic train/valid/test LETOR files.")
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--train-queries", type=int, default=2000)
    parser.add_argument("--valid-queries", type=int, default=500)
    parser.add_argument("--test-queries", type=int, default=500)
    parser.add_argument("--min-docs", type=int, default=10)
    parser.add_argument("--max-docs", type=int, default=30)
    parser.add_argument("--features", type=int, default=20)
    parser.add_argument("--label-noise", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=int(os.getenv("RANKFORGE_SEED", "42")))
    return parser


def main(argv=None):
    load_dotenv()
    logging.basicConfig(level=os.getenv("RANKFORGE_LOG_LEVEL", "WARNING").upper())
    args = build_parser().parse_args(argv)
    parts = {"train": args.train_queries, "valid": args.valid_queries, "test": args.test_queries}
    try:
        dataset = generate_synthetic(sum(parts.values()), (args.min_docs, args.max_docs), args.features,
                                     args.label_noise, args.seed)
        start = 0
        for name, count in parts.items():
            if count == 0:
                continue
            path = args.out_dir / f"{name}.txt"
            write_letor(dataset.subset(range(start, start + count)), path)
            print(f"{name}: {count} queries -> {path}")
            start += count
    except RankForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
