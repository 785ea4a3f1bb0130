import sys

from modules.data_io import parse_letor, write_letor
from modules.ranking_core import split_dataset


def split(input_path, train_path, valid_path, train_fraction=0.8, seed=0):
    """Query-level seeded split of one LETOR file into train and valid files."""
    dataset = parse_letor(input_path)
    train, valid = split_dataset(dataset, (train_fraction, 1.0 - train_fraction), seed)
    write_letor(train, train_path)
    write_letor(valid, valid_path)
    return train, valid


if __name__ == "__main__":
    input_path = sys.argv[1]
    train_path = sys.argv[2]
    valid_path = sys.argv[3]
    train_fraction = float(sys.argv[4]) if len(sys.argv) > 4 else 0.8
    split(input_path, train_path, valid_path, train_fraction)
