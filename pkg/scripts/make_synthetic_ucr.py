"""
Write deterministic toy datasets in the UCR archive layout.

Creates <root>/<Name>/<Name>_TRAIN.tsv and <Name>_TEST.tsv for:
- SyntheticOffset: class = vertical offset, invisible once a chart is min-max scaled
- SyntheticShape:  class = waveform shape, visible in every chart type

Useful for trying the CLI end to end without the real archive.

Usage:
    uv run python scripts/make_synthetic_ucr.py [root]
"""

import sys
from pathlib import Path

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.dataset_io import load_ucr_dataset, save_ucr_split
from src.synthetic import make_offset_dataset, make_shape_dataset


def main():
    root = Path(sys.argv[1]) if len(sys.argv) > 1 else project_root / "data" / "ucr_synthetic"

    print("=" * 70)
    print(f"Writing synthetic UCR datasets to {root}")
    print("=" * 70)

    datasets = [
        make_offset_dataset(n_train=60, n_test=60, length=48, seed=0),
        make_shape_dataset(n_train=60, n_test=60, length=64, n_classes=4, seed=0),
    ]
    for train, test in datasets:
        name = train.meta.name
        save_ucr_split(train, root, "train")
        save_ucr_split(test, root, "test")

        # Read back through the loader to confirm the files parse
        train_back, test_back = load_ucr_dataset(root, name)
        print(
            f"  {name}: {len(train_back)} train / {len(test_back)} test, "
            f"T={train_back.meta.length}, C={train_back.meta.n_classes}"
        )

    print("\nNext steps:")
    print(f"  export VTB_DATA_ROOT={root}")
    print("  uv run python main.py train --run.dataset SyntheticShape --run.resolution 64")
    print("=" * 70)


if __name__ == "__main__":
    main()
