from .idx import ImageSet, IdxFormatError, IdxLengthError, parse_idx, serialize_idx
from .glyphs import synthetic_digits
from .moving_mnist import (
    DigitState,
    GeneratorConfig,
    Video,
    generate_moving_mnist,
    step_digit,
    would_bounce,
)
from .store import (
    BatchStream,
    ClipStore,
    dataset_fingerprint,
    dataset_split,
    iter_batches,
    split_indices,
    split_sizes,
    write_dataset,
)

__all__ = [
    "ImageSet",
    "IdxFormatError",
    "IdxLengthError",
    "parse_idx",
    "serialize_idx",
    "synthetic_digits",
    "DigitState",
    "GeneratorConfig",
    "Video",
    "generate_moving_mnist",
    "step_digit",
    "would_bounce",
    "BatchStream",
    "ClipStore",
    "dataset_fingerprint",
    "dataset_split",
    "iter_batches",
    "split_indices",
    "split_sizes",
    "write_dataset",
]
